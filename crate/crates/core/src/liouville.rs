//! Master equation for the four-level `f = 1 -> F = 0` system in the rotating frame.
//!
//! Basis `{|1,-1>, |1,0>, |1,1>, |0,0>}` with `ħ = 1`:
//!
//! ```text
//! H   = Δ P_e + Ω_L (F_z^g + β F_z^e) - (g/2)(P_g d_pol P_e + h.c.)
//! dρ/dt = -i[H, ρ] - ½{Γ̂, ρ} + Γ Σ_q L_q ρ L_q† + γ Tr(ρ) P_g/(2f+1)
//! Γ̂   = Γ P_e + γ 𝟙
//! ```
//!
//! Dipole operators are in units of the hyperfine reduced element, so
//! `g = Ω_R √((2f+1)(2F+1){j f I; F J 1}²)`. The jump operators
//! `L_q = P_g d_q P_e` are normalized to `Σ_q L_q† L_q = P_e`, which makes
//! the generator exactly trace preserving.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angmom::{spherical_transform, wigner3j, HalfInt};
use crate::error::{Error, Result};
use crate::forward::{check_times, chi, ProbeConfig, TransitionSpec};
use crate::observables::PulseAngles;
use crate::qstate::DensityMatrix;
use crate::trace::{SignalTrace, TraceMeta};

type CMat = DMatrix<Complex64>;

const DIM: usize = 4;
const EXCITED: usize = 3;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Linear probe polarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    X,
    #[default]
    Y,
}

/// Ground and excited density matrix, 4×4.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub rho: CMat,
}

impl FullState {
    /// Embeds a ground-state density matrix with empty excited level.
    pub fn from_ground(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: rho.dim() });
        }
        let mut m = CMat::zeros(DIM, DIM);
        m.view_mut((0, 0), (3, 3)).copy_from(rho.matrix());
        Ok(FullState { rho: m })
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn excited_population(&self) -> f64 {
        self.rho[(EXCITED, EXCITED)].re
    }

    pub fn ground_block(&self) -> CMat {
        self.rho.view((0, 0), (3, 3)).into_owned()
    }

    fn vec(&self) -> CMat {
        CMat::from_column_slice(DIM * DIM, 1, self.rho.as_slice())
    }

    fn from_vec(v: &CMat) -> Self {
        FullState { rho: CMat::from_column_slice(DIM, DIM, v.as_slice()) }
    }
}

/// Spherical dipole components `d_q`, `q = -1, 0, 1`, in units of `<F||d||f>`.
fn spherical_dipoles() -> [CMat; 3] {
    let f = HalfInt::ONE;
    let fe = HalfInt::ZERO;
    let mut out = [CMat::zeros(DIM, DIM), CMat::zeros(DIM, DIM), CMat::zeros(DIM, DIM)];
    // Raising parts: <F μ| d_q |f m> = (-1)^{F-μ} (F 1 f; -μ q m), with μ = 0.
    let raising: Vec<CMat> = (-1..=1)
        .map(|q| {
            let mut a = CMat::zeros(DIM, DIM);
            for (idx, m) in f.projections().enumerate() {
                let v = wigner3j(fe, HalfInt::ONE, f, HalfInt::ZERO, HalfInt::integer(q), m);
                a[(EXCITED, idx)] = c(v);
            }
            a
        })
        .collect();
    for (k, q) in (-1i32..=1).enumerate() {
        let sign = if q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let partner = (2 - k) as usize; // index of -q
        out[k] = &raising[k] + raising[partner].adjoint().map(|z| z * sign);
    }
    out
}

/// Cartesian dipole components `(d_x, d_y, d_z)`.
fn cartesian_dipoles() -> [CMat; 3] {
    let dq = spherical_dipoles();
    let u = spherical_transform();
    let comp = |i: usize| {
        let mut m = CMat::zeros(DIM, DIM);
        for k in 0..3 {
            m += dq[k].map(|z| z * u[(k, i)].conj());
        }
        m
    };
    [comp(0), comp(1), comp(2)]
}

fn projectors() -> (CMat, CMat) {
    let mut pg = CMat::zeros(DIM, DIM);
    for i in 0..3 {
        pg[(i, i)] = c(1.0);
    }
    let mut pe = CMat::zeros(DIM, DIM);
    pe[(EXCITED, EXCITED)] = c(1.0);
    (pg, pe)
}

/// Hamiltonian, relaxation and repopulation for one probe configuration.
#[derive(Clone, Debug)]
pub struct LiouvilleGenerator {
    pub hamiltonian: CMat,
    pub gamma_op: CMat,
    pub jumps: Vec<CMat>,
    pub gamma_e: f64,
    pub gamma_g: f64,
    /// Optical coupling `g` in rate units.
    pub coupling_g: f64,
    pub polarization: Polarization,
    superop: CMat,
}

pub fn build_generator(spec: &TransitionSpec, probe: &ProbeConfig, polarization: Polarization) -> Result<LiouvilleGenerator> {
    if spec.f != HalfInt::ONE || spec.excited != HalfInt::ZERO {
        return Err(Error::Unsupported(format!(
            "master equation is implemented for f=1 -> F=0 only, got f={} -> F={}",
            spec.f, spec.excited
        )));
    }
    probe.validate()?;
    let (pg, pe) = projectors();
    let [dx, dy, _] = cartesian_dipoles();
    let dpol = match polarization {
        Polarization::X => dx,
        Polarization::Y => dy,
    };
    let g = probe.rabi * spec.hyperfine_factor().sqrt();
    let mut fz = CMat::zeros(DIM, DIM);
    for (i, m) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        fz[(i, i)] = c(m);
    }
    // F_z^e vanishes for F = 0, so the Landé ratio does not enter here.
    let _ = probe.beta_ratio;
    let opt = &pg * &dpol * &pe;
    let h = pe.map(|z| z * probe.detuning) + fz.map(|z| z * probe.larmor) - (&opt + opt.adjoint()).map(|z| z * (g / 2.0));

    let gamma_op = pe.map(|z| z * probe.gamma_e) + CMat::identity(DIM, DIM).map(|z: Complex64| z * probe.gamma_g);

    let jumps_raw: Vec<CMat> = spherical_dipoles().iter().map(|d| &pg * d * &pe).collect();
    let norm: f64 = jumps_raw.iter().map(|l| (l.adjoint() * l)[(EXCITED, EXCITED)].re).sum();
    let jumps: Vec<CMat> = jumps_raw.iter().map(|l| l.map(|z| z / norm.sqrt())).collect();

    let eye = CMat::identity(DIM, DIM);
    let mut sup = (eye.kronecker(&h) - h.transpose().kronecker(&eye)).map(|z| z * Complex64::new(0.0, -1.0));
    sup -= (eye.kronecker(&gamma_op) + gamma_op.transpose().kronecker(&eye)).map(|z| z * 0.5);
    for l in &jumps {
        sup += l.conjugate().kronecker(l).map(|z| z * probe.gamma_e);
    }
    let iso = pg.map(|z| z * (probe.gamma_g / 3.0));
    let vec_iso = CMat::from_column_slice(DIM * DIM, 1, iso.as_slice());
    let vec_eye = CMat::from_column_slice(DIM * DIM, 1, eye.as_slice());
    sup += &vec_iso * vec_eye.transpose();

    Ok(LiouvilleGenerator {
        hamiltonian: h,
        gamma_op,
        jumps,
        gamma_e: probe.gamma_e,
        gamma_g: probe.gamma_g,
        coupling_g: g,
        polarization,
        superop: sup,
    })
}

impl LiouvilleGenerator {
    /// `dρ/dt`.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let v = CMat::from_column_slice(DIM * DIM, 1, rho.as_slice());
        let out = &self.superop * v;
        CMat::from_column_slice(DIM, DIM, out.as_slice())
    }

    /// Column-stacked superoperator `vec(dρ/dt) = 𝓛 vec(ρ)`.
    pub fn superoperator(&self) -> &CMat {
        &self.superop
    }

    /// Sum of the normalized spontaneous branching ratios out of the excited state.
    pub fn branching_sum(&self) -> f64 {
        self.jumps.iter().map(|l| (l.adjoint() * l)[(EXCITED, EXCITED)].re).sum()
    }

    /// Stationary state with unit trace.
    pub fn steady_state(&self) -> Result<FullState> {
        let n = DIM * DIM;
        let mut a = self.superop.clone();
        let mut b = CMat::zeros(n, 1);
        // Replace the first row by the trace condition.
        for k in 0..n {
            a[(0, k)] = Complex64::new(0.0, 0.0);
        }
        for i in 0..DIM {
            a[(0, i * DIM + i)] = c(1.0);
        }
        b[(0, 0)] = c(1.0);
        let x = a.lu().solve(&b).ok_or_else(|| Error::Unphysical("singular generator".into()))?;
        let mut s = FullState::from_vec(&x);
        s.rho = (&s.rho + s.rho.adjoint()).map(|z| z * 0.5);
        Ok(s)
    }
}

/// Integration controls for the adaptive Dormand–Prince 5(4) scheme.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; defaults to `0.01/‖𝓛‖`.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-9, atol: 1e-12, h_init: None, max_steps: 50_000_000 }
    }
}

// Dormand–Prince tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive integration from `t = 0`, recording the state at each of `times`.
pub fn integrate(gen: &LiouvilleGenerator, rho0: &FullState, times: &[f64], opts: &IntegratorOptions) -> Result<Vec<FullState>> {
    check_times(times)?;
    let l = &gen.superop;
    let f = |y: &CMat| l * y;
    let lnorm = l.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300) * (DIM * DIM) as f64;
    let mut h = opts.h_init.unwrap_or(0.01 / lnorm);
    let mut t = 0.0;
    let mut y = rho0.vec();
    let mut k1 = f(&y);
    let mut out = Vec::with_capacity(times.len());
    let mut steps = 0usize;
    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::StepSizeUnderflow { t, h, err_norm: f64::NAN });
            }
            let last = target - t <= h * (1.0 + 1e-12);
            let step = if last { target - t } else { h };
            let k2 = f(&(&y + &k1 * c(step * A21)));
            let k3 = f(&(&y + (&k1 * c(A31) + &k2 * c(A32)) * c(step)));
            let k4 = f(&(&y + (&k1 * c(A41) + &k2 * c(A42) + &k3 * c(A43)) * c(step)));
            let k5 = f(&(&y + (&k1 * c(A51) + &k2 * c(A52) + &k3 * c(A53) + &k4 * c(A54)) * c(step)));
            let k6 = f(&(&y + (&k1 * c(A61) + &k2 * c(A62) + &k3 * c(A63) + &k4 * c(A64) + &k5 * c(A65)) * c(step)));
            let y_new = &y + (&k1 * c(B1) + &k3 * c(B3) + &k4 * c(B4) + &k5 * c(B5) + &k6 * c(B6)) * c(step);
            let k7 = f(&y_new);
            let err = (&k1 * c(E1) + &k3 * c(E3) + &k4 * c(E4) + &k5 * c(E5) + &k6 * c(E6) + &k7 * c(E7)) * c(step);
            let mut acc = 0.0;
            for i in 0..y.len() {
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                acc += (err[i].norm() / scale).powi(2);
            }
            let err_norm = (acc / y.len() as f64).sqrt();
            steps += 1;
            if err_norm <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                k1 = k7;
                let factor = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * (0.9 * err_norm.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * t.abs().max(1.0 / lnorm) {
                    return Err(Error::StepSizeUnderflow { t, h, err_norm });
                }
            }
        }
        out.push(FullState::from_vec(&y));
    }
    Ok(out)
}

/// Exact propagation `exp(𝓛 Δt)` between consecutive sample times, starting at `t = 0`.
pub fn propagate(gen: &LiouvilleGenerator, rho0: &FullState, times: &[f64]) -> Result<Vec<FullState>> {
    check_times(times)?;
    let mut y = rho0.vec();
    let mut t = 0.0;
    let mut cached: Option<(f64, CMat)> = None;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let dt = target - t;
        if dt > 0.0 {
            let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-12 * dt);
            if !reuse {
                let p = gen.superop.map(|z| z * dt).exp();
                cached = Some((dt, p));
            }
            y = &cached.as_ref().unwrap().1 * &y;
        }
        t = target;
        out.push(FullState::from_vec(&y));
    }
    Ok(out)
}

/// Rotation and ellipticity from the optical coherences, scaled to match the analytic model.
pub fn signal_from_integrator(
    states: &[FullState],
    times: &[f64],
    gen: &LiouvilleGenerator,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    pulse: &PulseAngles,
) -> Result<SignalTrace> {
    check_times(times)?;
    if states.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: states.len() });
    }
    if gen.coupling_g == 0.0 {
        return Err(Error::InvalidParameter { name: "rabi", reason: "probe Rabi frequency must be nonzero".into() });
    }
    let (pg, pe) = projectors();
    let [dx, dy, _] = cartesian_dipoles();
    // y-probe reads the x-component of the polarization and vice versa.
    let (read, factor) = match gen.polarization {
        Polarization::Y => (&pg * dx * &pe, Complex64::new(0.0, -2.0)),
        Polarization::X => (&pg * dy * &pe, Complex64::new(0.0, 2.0)),
    };
    let kappa = chi(spec) * spec.cell_length / probe.rate_unit;
    let mut da = Vec::with_capacity(states.len());
    let mut de = Vec::with_capacity(states.len());
    for s in states {
        let tr = (&read * &s.rho).trace();
        let z = factor * kappa * tr / gen.coupling_g;
        da.push(z.re);
        de.push(z.im);
    }
    Ok(SignalTrace {
        times: times.to_vec(),
        delta_alpha: da,
        delta_epsilon: Some(de),
        delta_absorption: None,
        delta_phase: None,
        meta: TraceMeta {
            spec: spec.clone(),
            probe: probe.clone(),
            pulse: *pulse,
            seed: None,
            snr: None,
            source: "integrator".into(),
            warnings: probe.validity().warnings,
        },
    })
}

/// Full-model trace for a ground state after a pulse, via exact propagation.
pub fn integrator_signal(
    rho0: &DensityMatrix,
    pulse: &PulseAngles,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    times: &[f64],
) -> Result<SignalTrace> {
    let gen = build_generator(spec, probe, Polarization::Y)?;
    let start = FullState::from_ground(&crate::observables::rotate_state(rho0, pulse))?;
    let states = propagate(&gen, &start, times)?;
    signal_from_integrator(&states, times, &gen, spec, probe, pulse)
}

/// `κ₂ = Ω_R²/(Γγ)`.
pub fn saturation_kappa2(probe: &ProbeConfig) -> Result<f64> {
    probe.kappa2()
}

/// Probe parameters used to produce the aligned fixture: resonant, strong, field-free pumping.
pub fn aligned_pump_probe() -> ProbeConfig {
    ProbeConfig {
        detuning: 0.0,
        rabi: 200.0,
        gamma_e: 1000.0,
        gamma_g: 0.05,
        larmor: 0.0,
        doppler: 0.0,
        beta_ratio: 0.0,
        rate_unit: 1.0,
    }
}

/// Ground state left after y-polarized pumping reaches steady state and the
/// excited population decays back through the spontaneous channels.
pub fn aligned_pumping_state() -> Result<DensityMatrix> {
    let gen = build_generator(&TransitionSpec::default(), &aligned_pump_probe(), Polarization::Y)?;
    let ss = gen.steady_state()?;
    let mut g = CMat::zeros(DIM, DIM);
    g.view_mut((0, 0), (3, 3)).copy_from(&ss.ground_block());
    for l in &gen.jumps {
        g += l * &ss.rho * l.adjoint();
    }
    DensityMatrix::from_approx(g.view((0, 0), (3, 3)).into_owned())
}
