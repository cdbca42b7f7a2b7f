//! From fitted envelopes to a physical density matrix.
//!
//! Each pulse yields three real numbers about the post-pulse state
//! `ρ' = D ρ D†`: the real and imaginary parts of `ρ'_{1,-1}` and the
//! population difference `ρ'_{-1,-1} - ρ'_{1,1}`. Inverting the forward model
//! gives
//!
//! ```text
//! ρ'_{1,-1} = (A - iB) / (ζL),   ζL = -(2/3) κ V_R
//! ρ'_{-1,-1} - ρ'_{1,1} = -3C / (κ V_I)
//! ```
//!
//! with `κ = χL` in rate units. The state estimate minimizes the sum of
//! squared deviations of these measured entries over `ρ = T T†/Tr(T T†)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::angmom::HalfInt;
use crate::error::{Error, Result};
use crate::forward::{default_times, ForwardModel, ProbeConfig, TransitionSpec};
use crate::liouville;
use crate::measure::{add_noise, fit_envelope_with, FitOptions, FitResult, NoiseSpec};
use crate::observables::PulseAngles;
use crate::optimize::{bfgs, BfgsOptions};
use crate::qstate::{fidelity, purity, to_density, CholeskyParams, DensityMatrix};
use crate::seed::derive_seed;
use crate::trace::SignalTrace;

type CMat = DMatrix<Complex64>;

/// Below this fraction of `|V|` the population channel `V_I` counts as dead.
pub const CHANNEL_DEAD_RATIO: f64 = 1e-6;

/// What one pulse tells about the post-pulse state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialMeasurement {
    pub pulse: PulseAngles,
    /// `ρ'_{1,-1}`.
    pub rho_1m1: Complex64,
    /// `ρ'_{-1,-1} - ρ'_{1,1}`.
    pub pop_diff: f64,
    /// Inverse variances of `(Re ρ'_{1,-1}, Im ρ'_{1,-1}, pop_diff)`.
    #[serde(default)]
    pub weights: Option<[f64; 3]>,
}

/// Inverts a fit for the given nominal pulse.
pub fn invert_fit(fit: &FitResult, model: &ForwardModel, pulse: &PulseAngles) -> Result<PartialMeasurement> {
    let v = model.profile();
    let k = model.coupling();
    if v.im.abs() < CHANNEL_DEAD_RATIO * v.norm() {
        return Err(Error::ChannelDead { v_imag: v.im });
    }
    if k == 0.0 || v.re == 0.0 {
        return Err(Error::InvalidParameter { name: "coupling", reason: "zero light-atom coupling".into() });
    }
    let zeta_l = -(2.0 / 3.0) * k * v.re;
    let rho_1m1 = Complex64::new(fit.a, -fit.b) / zeta_l;
    let pd_scale = -3.0 / (k * v.im);
    let pop_diff = pd_scale * fit.c;
    let var = [fit.cov[0][0] / (zeta_l * zeta_l), fit.cov[1][1] / (zeta_l * zeta_l), fit.cov[2][2] * pd_scale * pd_scale];
    let weights = if var.iter().all(|&x| x > 0.0 && x.is_finite()) {
        Some([1.0 / var[0], 1.0 / var[1], 1.0 / var[2]])
    } else {
        None
    };
    Ok(PartialMeasurement { pulse: *pulse, rho_1m1, pop_diff, weights })
}

/// Weighted least-squares distance between measured and predicted entries.
#[derive(Clone, Debug)]
pub struct Objective {
    dim: usize,
    ops: Vec<CMat>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

fn unit(dim: usize, r: usize, c: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    m[(r, c)] = Complex64::new(1.0, 0.0);
    m
}

/// Hermitian operators whose expectations are `(Re ρ'_{1,-1}, Im ρ'_{1,-1}, ρ'_{-1,-1} - ρ'_{1,1})`.
pub fn measurement_operators(pulse: &PulseAngles) -> [CMat; 3] {
    let d = pulse.operator(HalfInt::ONE);
    let g = d.adjoint() * unit(3, 0, 2) * &d;
    let re = (&g + g.adjoint()).map(|z| z * 0.5);
    let im = (&g - g.adjoint()).map(|z| z * Complex64::new(0.0, -0.5));
    let pd = d.adjoint() * (unit(3, 0, 0) - unit(3, 2, 2)) * &d;
    [re, im, pd]
}

fn tr_prod(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

impl Objective {
    /// Unit weights, or the inverse variances carried by the measurements when `weighted`.
    pub fn new(measurements: &[PartialMeasurement], weighted: bool) -> Result<Self> {
        if measurements.is_empty() {
            return Err(Error::EmptyMeasurements);
        }
        let mut ops = Vec::new();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for m in measurements {
            let w = match (weighted, m.weights) {
                (true, Some(w)) => w,
                _ => [1.0; 3],
            };
            let [a, b, c] = measurement_operators(&m.pulse);
            ops.extend([a, b, c]);
            targets.extend([m.rho_1m1.re, m.rho_1m1.im, m.pop_diff]);
            weights.extend(w);
        }
        if weighted {
            // Normalize so the weighted and plain objectives have comparable scales.
            let mean = weights.iter().sum::<f64>() / weights.len() as f64;
            weights.iter_mut().for_each(|w| *w /= mean);
        }
        Ok(Objective { dim: 3, ops, targets, weights })
    }

    pub fn n_terms(&self) -> usize {
        self.ops.len()
    }

    pub fn value(&self, rho: &DensityMatrix) -> f64 {
        self.ops
            .iter()
            .zip(&self.targets)
            .zip(&self.weights)
            .map(|((h, y), w)| w * (tr_prod(h, rho.matrix()) - y).powi(2))
            .sum()
    }

    /// Value and gradient with respect to the Cholesky parameters.
    pub fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.dim;
        let p = CholeskyParams(params.to_vec());
        let t = p.factor().expect("parameter length matches dimension");
        let tt = &t * t.adjoint();
        let s = tt.trace().re;
        if !(s > 1e-300) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return self.value(&DensityMatrix::maximally_mixed(n));
        }
        let rho = tt.map(|z| z / s);
        let mut e = CMat::zeros(n, n);
        let mut f = 0.0;
        for ((h, y), w) in self.ops.iter().zip(&self.targets).zip(&self.weights) {
            let r = tr_prod(h, &rho) - y;
            f += w * r * r;
            e += h.map(|z| z * (2.0 * w * r));
        }
        let shift = tr_prod(&e, &rho);
        for i in 0..n {
            e[(i, i)] -= Complex64::new(shift, 0.0);
        }
        let a = e * &t;
        let scale = 2.0 / s;
        for i in 0..n {
            grad[i] = scale * a[(i, i)].re;
        }
        let mut k = n;
        for i in 1..n {
            for j in 0..i {
                grad[k] = scale * a[(i, j)].re;
                grad[k + 1] = scale * a[(i, j)].im;
                k += 2;
            }
        }
        f
    }

    /// Rank of the linear map from traceless Hermitian matrices to the measured values.
    pub fn measurement_rank(&self) -> usize {
        let n = self.dim;
        let basis = traceless_hermitian_basis(n);
        let m = DMatrix::from_fn(self.ops.len(), basis.len(), |r, c| tr_prod(&self.ops[r], &basis[c]));
        let sv = m.svd(false, false).singular_values;
        let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
        sv.iter().filter(|&&x| x > 1e-9 * max.max(f64::MIN_POSITIVE)).count()
    }

    /// Dimension of the traceless Hermitian space, `n² - 1`.
    pub fn full_rank(&self) -> usize {
        self.dim * self.dim - 1
    }
}

fn traceless_hermitian_basis(n: usize) -> Vec<CMat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(unit(n, i, j) + unit(n, j, i));
            out.push((unit(n, i, j) - unit(n, j, i)).map(|z| z * Complex64::new(0.0, -1.0)));
        }
    }
    for k in 1..n {
        let mut d = CMat::zeros(n, n);
        let norm = ((k * (k + 1)) as f64).sqrt().recip();
        for i in 0..k {
            d[(i, i)] = Complex64::new(norm, 0.0);
        }
        d[(k, k)] = Complex64::new(-(k as f64) * norm, 0.0);
        out.push(d);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    /// Random restarts in addition to the initial point and the maximally mixed point.
    pub n_random_starts: usize,
    pub seed: u64,
    pub bfgs: BfgsOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { n_random_starts: 8, seed: 0, bfgs: BfgsOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    pub distance: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_vs_truth: Option<f64>,
    pub iterations: usize,
    pub rank: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub params: Option<CholeskyParams>,
}

fn mixed_params(n: usize) -> CholeskyParams {
    let mut p = CholeskyParams::zeros(n);
    for i in 0..n {
        p.0[i] = 1.0 / (n as f64).sqrt();
    }
    p
}

/// Multi-start BFGS; the best objective wins, ties go to the lowest purity.
pub fn minimize(objective: &Objective, init: &CholeskyParams, opts: &MinimizeOptions) -> Result<ReconstructionResult> {
    let n = objective.dim;
    if init.dim()? != n {
        return Err(Error::DimensionMismatch { expected: n * n, got: init.len() });
    }
    let rank = objective.measurement_rank();
    let full = rank == objective.full_rank();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![init.clone(), mixed_params(n)];
    for _ in 0..opts.n_random_starts {
        starts.push(CholeskyParams((0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()));
    }
    let f = |x: &[f64], g: &mut [f64]| objective.value_grad(x, g);
    let mut best: Option<(f64, f64, CholeskyParams, bool)> = None;
    let mut total_iters = 0;
    for start in &starts {
        let r = bfgs(f, &start.0, &opts.bfgs);
        total_iters += r.iterations;
        let params = CholeskyParams(r.x);
        let pur = purity(&to_density(&params)?);
        let better = match &best {
            None => true,
            Some((bf, bp, _, _)) => {
                let tie = (r.f - bf).abs() <= 1e-12 + 1e-6 * bf.abs();
                if tie { pur < *bp } else { r.f < *bf }
            }
        };
        if better {
            best = Some((r.f, pur, params, r.converged));
        }
        // A vanishing objective with a full-rank map has a unique minimizer.
        if full && best.as_ref().is_some_and(|b| b.0 <= opts.bfgs.f_abs_tol) {
            break;
        }
    }
    let (distance, _, params, converged) = best.expect("at least one start");
    let rho = to_density(&params)?;
    let mut warnings = Vec::new();
    if !full {
        warnings.push(format!("rank-deficient measurement set: rank {rank} of {}", objective.full_rank()));
    }
    Ok(ReconstructionResult {
        rho,
        distance,
        converged,
        fidelity_vs_truth: None,
        iterations: total_iters,
        rank,
        warnings,
        params: Some(params),
    })
}

/// Which model generates the synthetic signals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalBackend {
    #[default]
    Analytic,
    /// Exact master-equation propagation, including optical pumping by the probe.
    Integrator,
}

/// Settings of one simulate-fit-invert-minimize run.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub pulses: Vec<PulseAngles>,
    /// `f64::INFINITY` disables noise.
    pub snr: f64,
    /// Standard deviation of the executed pulse angles around the nominal ones, rad.
    pub angle_sigma: f64,
    pub seed: u64,
    pub backend: SignalBackend,
    /// Sample times; the default grid when `None`.
    pub times: Option<Vec<f64>>,
    pub weighted: bool,
    pub minimize: MinimizeOptions,
}

impl PipelineConfig {
    pub fn new(pulses: Vec<PulseAngles>, snr: f64, seed: u64) -> Self {
        PipelineConfig {
            pulses,
            snr,
            angle_sigma: 0.0,
            seed,
            backend: SignalBackend::Analytic,
            times: None,
            weighted: false,
            minimize: MinimizeOptions::default(),
        }
    }
}

/// The four-pulse set `(0,0), (0,π/2), (π/2,0), (π/2,π/2)`.
pub fn standard_pulses() -> Vec<PulseAngles> {
    let h = std::f64::consts::FRAC_PI_2;
    [(0.0, 0.0), (0.0, h), (h, 0.0), (h, h)]
        .into_iter()
        .map(|(p, t)| PulseAngles::new(p, t).expect("finite"))
        .collect()
}

/// Forward model plus SNR reference, reusable across runs with the same physics.
#[derive(Clone, Debug)]
pub struct Reconstructor {
    model: ForwardModel,
    reference_amplitude: f64,
}

impl Reconstructor {
    pub fn new(spec: &TransitionSpec, probe: &ProbeConfig) -> Result<Self> {
        let model = ForwardModel::new(spec, probe)?;
        let reference_amplitude = model.reference_amplitude()?;
        Ok(Reconstructor { model, reference_amplitude })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn reference_amplitude(&self) -> f64 {
        self.reference_amplitude
    }

    fn fit_options(&self, backend: SignalBackend) -> FitOptions {
        match backend {
            SignalBackend::Analytic => FitOptions::default(),
            SignalBackend::Integrator => FitOptions { t_min: 10.0 / self.model.probe().gamma_e, refine: false },
        }
    }

    /// Clean (noise-free) traces for each executed pulse.
    pub fn simulate(&self, rho_true: &DensityMatrix, executed: &[PulseAngles], backend: SignalBackend, times: &[f64]) -> Result<Vec<SignalTrace>> {
        let (spec, probe) = (self.model.spec(), self.model.probe());
        let gen = match backend {
            SignalBackend::Analytic => None,
            SignalBackend::Integrator => Some(liouville::build_generator(spec, probe, liouville::Polarization::Y)?),
        };
        executed
            .iter()
            .map(|p| match &gen {
                None => self.model.signal(rho_true, p, times),
                Some(g) => {
                    let start = liouville::FullState::from_ground(&crate::observables::rotate_state(rho_true, p))?;
                    let states = liouville::propagate(g, &start, times)?;
                    liouville::signal_from_integrator(&states, times, g, spec, probe, p)
                }
            })
            .collect()
    }

    /// Fits and inverts traces; each trace's pulse is taken from `nominal` when given, else from its metadata.
    pub fn measurements(&self, traces: &[SignalTrace], nominal: Option<&[PulseAngles]>, backend: SignalBackend) -> Result<Vec<PartialMeasurement>> {
        let probe = self.model.probe();
        let opts = self.fit_options(backend);
        traces
            .iter()
            .enumerate()
            .map(|(i, tr)| {
                let fit = fit_envelope_with(tr, probe.larmor, probe.gamma_g, &opts)?;
                let pulse = nominal.map(|p| p[i]).unwrap_or(tr.meta.pulse);
                invert_fit(&fit, &self.model, &pulse)
            })
            .collect()
    }

    /// Noisy traces of `rho_true` as `run` sees them; metadata carries the nominal pulses.
    pub fn acquire(&self, rho_true: &DensityMatrix, cfg: &PipelineConfig) -> Result<Vec<SignalTrace>> {
        if cfg.pulses.is_empty() {
            return Err(Error::EmptyMeasurements);
        }
        let times = cfg.times.clone().unwrap_or_else(|| default_times(self.model.probe().larmor));
        let mut angle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));
        let executed: Vec<PulseAngles> = if cfg.angle_sigma > 0.0 {
            let normal = Normal::new(0.0, cfg.angle_sigma)
                .map_err(|e| Error::InvalidParameter { name: "angle_sigma", reason: e.to_string() })?;
            cfg.pulses
                .iter()
                .map(|p| PulseAngles::new(p.phi() + normal.sample(&mut angle_rng), p.theta() + normal.sample(&mut angle_rng)))
                .collect::<Result<_>>()?
        } else {
            cfg.pulses.clone()
        };
        let clean = self.simulate(rho_true, &executed, cfg.backend, &times)?;
        clean
            .iter()
            .enumerate()
            .map(|(i, tr)| {
                let noise = NoiseSpec {
                    snr: cfg.snr,
                    seed: derive_seed(cfg.seed, &[1, i as u64]),
                    reference_amplitude: self.reference_amplitude,
                };
                let mut out = add_noise(tr, &noise)?;
                out.meta.pulse = cfg.pulses[i];
                Ok(out)
            })
            .collect()
    }

    /// Fit, invert and minimize; the pulse of each trace comes from its metadata.
    pub fn reconstruct_traces(
        &self,
        traces: &[SignalTrace],
        backend: SignalBackend,
        weighted: bool,
        minimize_opts: &MinimizeOptions,
        seed: u64,
    ) -> Result<ReconstructionResult> {
        if traces.is_empty() {
            return Err(Error::EmptyMeasurements);
        }
        let meas = self.measurements(traces, None, backend)?;
        let objective = Objective::new(&meas, weighted)?;
        let mut opts = *minimize_opts;
        opts.seed = derive_seed(seed, &[2]);
        minimize(&objective, &mixed_params(3), &opts)
    }

    /// End-to-end run against a known state.
    pub fn run(&self, rho_true: &DensityMatrix, cfg: &PipelineConfig) -> Result<ReconstructionResult> {
        let traces = self.acquire(rho_true, cfg)?;
        let mut result = self.reconstruct_traces(&traces, cfg.backend, cfg.weighted, &cfg.minimize, cfg.seed)?;
        result.fidelity_vs_truth = Some(fidelity(rho_true, &result.rho)?);
        Ok(result)
    }
}

pub fn reconstruct(
    rho_true: &DensityMatrix,
    cfg: &PipelineConfig,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
) -> Result<ReconstructionResult> {
    Reconstructor::new(spec, probe)?.run(rho_true, cfg)
}
