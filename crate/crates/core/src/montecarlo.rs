//! Fidelity statistics over random states, pulse sets and noise.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::forward::{ProbeConfig, TransitionSpec};
use crate::observables::PulseAngles;
use crate::qstate::{random_mixed_with, random_pure_with, DensityMatrix, ReferenceState};
use crate::reconstruct::{MinimizeOptions, PipelineConfig, Reconstructor, SignalBackend};
use crate::seed::derive_seed;

/// Quantity varied along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Snr,
    AngleSigma,
    NMeasurements,
    Kappa2,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr",
            SweepAxis::AngleSigma => "angle_sigma",
            SweepAxis::NMeasurements => "n_measurements",
            SweepAxis::Kappa2 => "kappa2",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(SweepAxis::Snr),
            "angle_sigma" => Ok(SweepAxis::AngleSigma),
            "n_measurements" => Ok(SweepAxis::NMeasurements),
            "kappa2" => Ok(SweepAxis::Kappa2),
            other => Err(Error::InvalidParameter { name: "axis", reason: format!("unknown axis `{other}`") }),
        }
    }
}

/// Ensemble that true states are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateClass {
    /// Haar-random pure states.
    Pure,
    /// Haar-rotated blends with purity 0.6.
    Mixed,
    Thermal,
    AlignedY,
    Stretched,
}

pub const MIXED_PURITY: f64 = 0.6;

impl StateClass {
    pub fn name(self) -> &'static str {
        match self {
            StateClass::Pure => "pure",
            StateClass::Mixed => "mixed_0.6",
            StateClass::Thermal => "thermal",
            StateClass::AlignedY => "aligned_y",
            StateClass::Stretched => "stretched",
        }
    }

    fn id(self) -> u64 {
        match self {
            StateClass::Pure => 0,
            StateClass::Mixed => 1,
            StateClass::Thermal => 2,
            StateClass::AlignedY => 3,
            StateClass::Stretched => 4,
        }
    }

    pub fn draw(self, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            StateClass::Pure => random_pure_with(&mut rng, 3),
            StateClass::Mixed => random_mixed_with(&mut rng, 3, MIXED_PURITY).expect("valid purity"),
            StateClass::Thermal => ReferenceState::Thermal.density(),
            StateClass::AlignedY => ReferenceState::AlignedY.density(),
            StateClass::Stretched => ReferenceState::Stretched.density(),
        }
    }
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure" => Ok(StateClass::Pure),
            "mixed" | "mixed_0.6" => Ok(StateClass::Mixed),
            "thermal" => Ok(StateClass::Thermal),
            "aligned_y" | "aligned" => Ok(StateClass::AlignedY),
            "stretched" => Ok(StateClass::Stretched),
            other => Err(Error::UnknownState(other.to_string())),
        }
    }
}

impl Serialize for StateClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for StateClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pulse sets used in each run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    /// `count` pulses with `φ, θ ~ U[0, π)`, redrawn for every run.
    Random { count: usize },
    Fixed(Vec<PulseAngles>),
}

impl Default for PulseMode {
    fn default() -> Self {
        PulseMode::Random { count: 4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub states: Vec<StateClass>,
    pub n_states: usize,
    pub n_repeats: usize,
    pub pulses: PulseMode,
    pub seed: u64,
    /// SNR used when the axis is not `Snr`.
    pub snr: f64,
    /// Pulse-angle spread used when the axis is not `AngleSigma`.
    pub angle_sigma: f64,
    /// Signal generator; `kappa2` sweeps always use the integrator.
    pub backend: SignalBackend,
    pub minimize: MinimizeOptions,
}

/// Repeats per state at full scale (10 × 100 = 1000 samples per point).
pub const PAPER_REPEATS: usize = 100;

impl SweepConfig {
    /// Desk-scale defaults: 10 states × 20 repeats = 200 samples per point.
    pub fn new(axis: SweepAxis, grid: Vec<f64>) -> Self {
        SweepConfig {
            axis,
            grid,
            states: vec![StateClass::Pure, StateClass::Mixed, StateClass::Thermal],
            n_states: 10,
            n_repeats: 20,
            pulses: PulseMode::default(),
            seed: 0,
            snr: 25.0,
            angle_sigma: 0.0,
            backend: SignalBackend::Analytic,
            minimize: MinimizeOptions::default(),
        }
    }

    pub fn paper_scale(mut self) -> Self {
        self.n_repeats = PAPER_REPEATS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParameter { name: "sweep", reason });
        if self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|x| !x.is_finite()) {
            return bad("grid must be finite and strictly increasing".into());
        }
        if self.states.is_empty() {
            return bad("no state classes".into());
        }
        if self.n_states * self.n_repeats < MIN_BETA_SAMPLES {
            return bad(format!("n_states·n_repeats must be at least {MIN_BETA_SAMPLES}"));
        }
        match (&self.pulses, self.axis) {
            (PulseMode::Random { count: 0 }, _) => return bad("random pulse count must be positive".into()),
            (PulseMode::Fixed(p), _) if p.is_empty() => return bad("fixed pulse list is empty".into()),
            _ => {}
        }
        if self.axis == SweepAxis::NMeasurements {
            let max = self.max_pulses();
            if self.grid.iter().any(|&n| n < 1.0 || n.fract() != 0.0 || (max.is_some_and(|m| n as usize > m))) {
                return bad("n_measurements grid must hold positive integers within the pulse list".into());
            }
        }
        if self.axis == SweepAxis::Snr && self.grid.iter().any(|&s| s <= 0.0) {
            return bad("snr grid must be positive".into());
        }
        if matches!(self.axis, SweepAxis::AngleSigma | SweepAxis::Kappa2) && self.grid.iter().any(|&s| s < 0.0) {
            return bad("grid must be non-negative".into());
        }
        Ok(())
    }

    fn max_pulses(&self) -> Option<usize> {
        match &self.pulses {
            PulseMode::Fixed(p) => Some(p.len()),
            PulseMode::Random { .. } => None,
        }
    }

    fn pulse_count(&self) -> usize {
        let base = match &self.pulses {
            PulseMode::Fixed(p) => p.len(),
            PulseMode::Random { count } => *count,
        };
        if self.axis == SweepAxis::NMeasurements {
            let top = self.grid.iter().fold(0.0f64, |a, &b| a.max(b)) as usize;
            match &self.pulses {
                PulseMode::Fixed(_) => base,
                PulseMode::Random { .. } => top.max(base),
            }
        } else {
            base
        }
    }

    /// Pulse sequence of one run; independent of the grid value.
    fn pulses_for(&self, run_seed: u64) -> Vec<PulseAngles> {
        match &self.pulses {
            PulseMode::Fixed(p) => p.clone(),
            PulseMode::Random { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, &[10]));
                (0..self.pulse_count())
                    .map(|_| {
                        let phi = rng.random_range(0.0..std::f64::consts::PI);
                        let theta = rng.random_range(0.0..std::f64::consts::PI);
                        PulseAngles::new(phi, theta).expect("finite")
                    })
                    .collect()
            }
        }
    }
}

pub const MIN_BETA_SAMPLES: usize = 30;
const CLAMP: f64 = 1e-9;

/// Beta-distribution fit of fidelity samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub a: f64,
    pub b: f64,
    pub mean: f64,
    pub variance: f64,
    /// All samples equal: `a`, `b` are infinite and the variance is zero.
    pub point_mass: bool,
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

fn beta_loglik(a: f64, b: f64, n: f64, s1: f64, s2: f64) -> f64 {
    (a - 1.0) * s1 + (b - 1.0) * s2 - n * (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Method of moments refined by Newton maximization of the likelihood.
pub fn fit_beta(samples: &[f64]) -> Result<BetaFit> {
    if samples.len() < MIN_BETA_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_BETA_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter { name: "samples", reason: "non-finite sample".into() });
    }
    let xs: Vec<f64> = samples.iter().map(|&x| x.clamp(CLAMP, 1.0 - CLAMP)).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 1e-300 || xs.iter().all(|&x| x == xs[0]) {
        return Ok(BetaFit { a: f64::INFINITY, b: f64::INFINITY, mean, variance: 0.0, point_mass: true });
    }
    let common = mean * (1.0 - mean) / var - 1.0;
    let (mut a, mut b) = if common > 0.0 { (mean * common, (1.0 - mean) * common) } else { (1.0, 1.0) };
    let s1: f64 = xs.iter().map(|x| x.ln()).sum();
    let s2: f64 = xs.iter().map(|x| (1.0 - x).ln()).sum();
    let mut ll = beta_loglik(a, b, n, s1, s2);
    for _ in 0..200 {
        let dab = digamma(a + b);
        let ga = n * (dab - digamma(a)) + s1;
        let gb = n * (dab - digamma(b)) + s2;
        let tab = trigamma(a + b);
        let haa = n * (tab - trigamma(a));
        let hbb = n * (tab - trigamma(b));
        let hab = n * tab;
        let det = haa * hbb - hab * hab;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        // Newton step -H⁻¹g on the concave log-likelihood.
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let (na, nb) = (a + t * da, b + t * db);
            if na > 0.0 && nb > 0.0 {
                let nll = beta_loglik(na, nb, n, s1, s2);
                if nll >= ll {
                    moved = (na - a).abs() > 1e-13 * a || (nb - b).abs() > 1e-13 * b;
                    a = na;
                    b = nb;
                    ll = nll;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let s = a + b;
    Ok(BetaFit { a, b, mean: a / s, variance: a * b / (s * s * (s + 1.0)), point_mass: false })
}

/// One grid point and state class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub state_class: StateClass,
    pub beta: Option<BetaFit>,
    pub n_samples: usize,
    pub n_failures: usize,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl SweepRow {
    pub fn sample_mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Unbiased sample variance.
    pub fn sample_variance(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.sample_mean();
        self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        (self.sample_variance() / self.samples.len().max(1) as f64).sqrt()
    }

    /// Mean from the beta fit, or the sample mean when no fit is available.
    pub fn mean_fidelity(&self) -> f64 {
        self.beta.map(|b| b.mean).unwrap_or_else(|| self.sample_mean())
    }

    pub fn var_fidelity(&self) -> f64 {
        self.beta.map(|b| b.variance).unwrap_or_else(|| self.sample_variance())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "axis_value,state_class,mean_fidelity,var_fidelity,beta_a,beta_b,n_samples,n_failures";

impl SweepTable {
    pub fn row(&self, axis_value: f64, class: StateClass) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis_value == axis_value && r.state_class == class)
    }

    pub fn rows_for(&self, class: StateClass) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.state_class == class).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_CSV_HEADER.split(','))?;
        for r in &self.rows {
            let (a, b) = r.beta.map(|f| (f.a, f.b)).unwrap_or((f64::NAN, f64::NAN));
            out.write_record([
                format!("{:e}", r.axis_value),
                r.state_class.name().to_string(),
                format!("{:e}", r.mean_fidelity()),
                format!("{:e}", r.var_fidelity()),
                format!("{a:e}"),
                format!("{b:e}"),
                r.n_samples.to_string(),
                r.n_failures.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Task {
    point: usize,
    class: StateClass,
    state: usize,
    repeat: usize,
}

enum Outcome {
    Ok { fidelity: f64, converged: bool },
    Failed,
}

fn probe_for(axis: SweepAxis, value: f64, base: &ProbeConfig) -> ProbeConfig {
    match axis {
        SweepAxis::Kappa2 => base.with_kappa2(value),
        _ => base.clone(),
    }
}

/// Runs every grid point × state class × state × repeat; deterministic in `cfg.seed`.
pub fn run_sweep(cfg: &SweepConfig, spec: &TransitionSpec, probe: &ProbeConfig) -> Result<SweepTable> {
    run_sweep_with_progress(cfg, spec, probe, &|_, _| {})
}

/// As [`run_sweep`], calling `progress(done, total)` as runs finish (from worker threads).
pub fn run_sweep_with_progress(
    cfg: &SweepConfig,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<SweepTable> {
    cfg.validate()?;
    let reconstructors: Vec<Reconstructor> = cfg
        .grid
        .iter()
        .map(|&v| Reconstructor::new(spec, &probe_for(cfg.axis, v, probe)))
        .collect::<Result<_>>()?;
    let backend = if cfg.axis == SweepAxis::Kappa2 { SignalBackend::Integrator } else { cfg.backend };
    let mut tasks = Vec::new();
    for point in 0..cfg.grid.len() {
        for &class in &cfg.states {
            for state in 0..cfg.n_states {
                for repeat in 0..cfg.n_repeats {
                    tasks.push(Task { point, class, state, repeat });
                }
            }
        }
    }
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let outcomes: Vec<Outcome> = tasks
        .par_iter()
        .map(|t| {
            let state_seed = derive_seed(cfg.seed, &[t.class.id(), t.state as u64]);
            let run_seed = derive_seed(cfg.seed, &[t.class.id(), t.state as u64, t.repeat as u64]);
            let rho = t.class.draw(state_seed);
            let mut pulses = cfg.pulses_for(run_seed);
            let value = cfg.grid[t.point];
            let (mut snr, mut sigma) = (cfg.snr, cfg.angle_sigma);
            match cfg.axis {
                SweepAxis::Snr => snr = value,
                SweepAxis::AngleSigma => sigma = value,
                SweepAxis::NMeasurements => pulses.truncate(value as usize),
                SweepAxis::Kappa2 => {}
            }
            let pc = PipelineConfig {
                pulses,
                snr,
                angle_sigma: sigma,
                seed: run_seed,
                backend,
                times: None,
                weighted: false,
                minimize: cfg.minimize,
            };
            let out = match reconstructors[t.point].run(&rho, &pc) {
                Ok(r) => match r.fidelity_vs_truth {
                    Some(f) => Outcome::Ok { fidelity: f, converged: r.converged },
                    None => Outcome::Failed,
                },
                Err(_) => Outcome::Failed,
            };
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            out
        })
        .collect();

    let per_point = cfg.states.len() * cfg.n_states * cfg.n_repeats;
    let per_class = cfg.n_states * cfg.n_repeats;
    let mut rows = Vec::new();
    for (p, &value) in cfg.grid.iter().enumerate() {
        for (ci, &class) in cfg.states.iter().enumerate() {
            let start = p * per_point + ci * per_class;
            let mut samples = Vec::with_capacity(per_class);
            let mut failures = 0;
            for o in &outcomes[start..start + per_class] {
                match o {
                    Outcome::Ok { fidelity, converged } => {
                        samples.push(*fidelity);
                        if !converged {
                            failures += 1;
                        }
                    }
                    Outcome::Failed => failures += 1,
                }
            }
            let beta = fit_beta(&samples).ok();
            rows.push(SweepRow { axis_value: value, state_class: class, beta, n_samples: samples.len(), n_failures: failures, samples });
        }
    }
    Ok(SweepTable { axis: cfg.axis, rows })
}

/// Fidelity versus `κ₂` with integrator-generated signals and analytic-model reconstruction.
pub fn kappa2_sweep(cfg: &SweepConfig, spec: &TransitionSpec, probe: &ProbeConfig) -> Result<SweepTable> {
    if cfg.axis != SweepAxis::Kappa2 {
        return Err(Error::InvalidParameter { name: "axis", reason: "kappa2_sweep needs the kappa2 axis".into() });
    }
    run_sweep(cfg, spec, probe)
}

/// Logarithmically spaced grid, inclusive of both ends.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}
