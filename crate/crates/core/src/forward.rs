//! Analytic forward model of the probe polarization signals.
//!
//! Rates inside [`ProbeConfig`] are normalized by `rate_unit` (rad/s); the
//! default parameter set uses `Ω_L = 1`. With `κ = χL/rate_unit`,
//! `V = V_R + iV_I` the line profile and `a_R, a_I, b, d` the expectation
//! values of the pulse-rotated observables:
//!
//! ```text
//! Δα   = -κ e^{-γt} (V_R a_R sin 2Ω_Lt + V_R a_I cos 2Ω_Lt - V_I b)
//! Δε   =  κ e^{-γt} (V_I a_R sin 2Ω_Lt + V_I a_I cos 2Ω_Lt + V_R b)
//! ΔE/E =  κ V_R [e^{-γt} (a_R cos 2Ω_Lt - a_I sin 2Ω_Lt + d - δ_s) + δ_s]
//! Δφ   = -κ V_I [e^{-γt} (a_R cos 2Ω_Lt - a_I sin 2Ω_Lt + d - δ_s) + δ_s]
//! ```
//!
//! Transients decaying at the excited-state rate are not part of this model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angmom::{wigner6j, HalfInt};
use crate::error::{Error, Result};
use crate::lineshape::voigt;
use crate::observables::{build_observables, check_transition, ObservableSet, PulseAngles};
use crate::qstate::{DensityMatrix, ReferenceState};
use crate::trace::{SignalTrace, TraceMeta};

pub const EPSILON_0: f64 = 8.8541878128e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054571817e-34;

/// Atomic constants of the probed transition (SI units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionSpec {
    /// Ground hyperfine level.
    pub f: HalfInt,
    /// Excited hyperfine level.
    #[serde(rename = "F")]
    pub excited: HalfInt,
    /// Ground fine-structure level.
    pub j: HalfInt,
    /// Excited fine-structure level.
    #[serde(rename = "J")]
    pub j_excited: HalfInt,
    /// Nuclear spin.
    #[serde(rename = "I")]
    pub nuclear_spin: HalfInt,
    /// Reduced dipole `<j||d||J>` in C·m.
    pub reduced_dipole: f64,
    /// Atoms per m³.
    pub number_density: f64,
    /// m.
    pub cell_length: f64,
    /// Light angular frequency, rad/s.
    pub omega: f64,
}

impl Default for TransitionSpec {
    /// ⁸⁷Rb D2 line, `f = 1 -> F = 0`, in a 1 cm cell at 10¹⁶ m⁻³.
    fn default() -> Self {
        TransitionSpec {
            f: HalfInt::ONE,
            excited: HalfInt::ZERO,
            j: HalfInt::from_twice(1),
            j_excited: HalfInt::from_twice(3),
            nuclear_spin: HalfInt::from_twice(3),
            reduced_dipole: 3.584e-29,
            number_density: 1e16,
            cell_length: 0.01,
            omega: 2.0 * std::f64::consts::PI * 384.230_484_468_5e12,
        }
    }
}

impl TransitionSpec {
    pub fn validate(&self) -> Result<()> {
        check_transition(self.f, self.excited)?;
        let positive = [
            ("number_density", self.number_density),
            ("cell_length", self.cell_length),
            ("omega", self.omega),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") });
            }
        }
        if !(self.reduced_dipole.is_finite() && self.reduced_dipole >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "reduced_dipole",
                reason: format!("must be non-negative, got {}", self.reduced_dipole),
            });
        }
        Ok(())
    }

    /// Hyperfine-to-fine reduction factor `(2f+1)(2F+1){j f I; F J 1}²`.
    pub fn hyperfine_factor(&self) -> f64 {
        let six = wigner6j(self.j, self.f, self.nuclear_spin, self.excited, self.j_excited, HalfInt::ONE);
        (self.f.multiplicity() * self.excited.multiplicity()) as f64 * six * six
    }
}

/// `(-1)^{2j+2J}`; `+1` whenever both are half-integer or both integer.
pub fn parity_sign(spec: &TransitionSpec) -> f64 {
    if (spec.j.twice() + spec.j_excited.twice()).rem_euclid(2) == 0 { 1.0 } else { -1.0 }
}

/// Coupling constant `χ` in rad/(s·m).
pub fn chi(spec: &TransitionSpec) -> f64 {
    let d2 = spec.reduced_dipole * spec.reduced_dipole;
    spec.number_density * spec.omega * d2 * spec.hyperfine_factor() * parity_sign(spec)
        / (2.0 * EPSILON_0 * SPEED_OF_LIGHT * HBAR)
}

/// Probe-light and relaxation parameters, in units of `rate_unit` rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Light detuning `Δ = ω₀ - ω`.
    pub detuning: f64,
    /// Probe Rabi frequency `Ω_R`.
    pub rabi: f64,
    /// Excited-state relaxation `Γ`.
    pub gamma_e: f64,
    /// Ground-state relaxation `γ`.
    pub gamma_g: f64,
    /// Larmor frequency `Ω_L`.
    pub larmor: f64,
    /// Doppler width `Γ_D`; 0 disables Doppler broadening.
    #[serde(default)]
    pub doppler: f64,
    /// Excited-to-ground Landé factor ratio.
    #[serde(default)]
    pub beta_ratio: f64,
    /// Physical value of one rate unit, rad/s.
    #[serde(default = "default_rate_unit")]
    pub rate_unit: f64,
}

fn default_rate_unit() -> f64 {
    // Γ = 1000 units matches the 6.07 MHz natural width of the Rb D2 line.
    2.0 * std::f64::consts::PI * 6.0666e6 / 1000.0
}

impl Default for ProbeConfig {
    /// Γ = Δ = 1000, γ = 0.05, Ω_L = 1, Ω_R = 1.
    fn default() -> Self {
        ProbeConfig {
            detuning: 1000.0,
            rabi: 1.0,
            gamma_e: 1000.0,
            gamma_g: 0.05,
            larmor: 1.0,
            doppler: 0.0,
            beta_ratio: 0.0,
            rate_unit: default_rate_unit(),
        }
    }
}

/// Approximation checks for the analytic model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    /// Violations that make the model meaningless.
    pub violations: Vec<String>,
    /// Conditions under which the model is only approximate.
    pub warnings: Vec<String>,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("gamma_e", self.gamma_e, self.gamma_e > 0.0),
            ("gamma_g", self.gamma_g, self.gamma_g >= 0.0),
            ("doppler", self.doppler, self.doppler >= 0.0),
            ("rate_unit", self.rate_unit, self.rate_unit > 0.0),
            ("larmor", self.larmor, self.larmor.is_finite()),
        ];
        for (name, v, ok) in checks {
            if !(ok && v.is_finite()) {
                return Err(Error::InvalidParameter { name, reason: format!("out of range: {v}") });
            }
        }
        for (name, v) in [("detuning", self.detuning), ("rabi", self.rabi), ("beta_ratio", self.beta_ratio)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { name, reason: format!("not finite: {v}") });
            }
        }
        Ok(())
    }

    pub fn validity(&self) -> Validity {
        let mut v = Validity::default();
        let det = self.detuning.abs();
        if self.larmor.abs() >= det {
            v.violations.push(format!("Larmor frequency {} is not below the detuning {}", self.larmor, self.detuning));
        }
        if self.gamma_g >= self.gamma_e {
            v.violations.push(format!("ground relaxation {} is not below excited relaxation {}", self.gamma_g, self.gamma_e));
        }
        if det < self.gamma_e {
            v.warnings.push(format!("detuning {} is smaller than the excited-state width {}", self.detuning, self.gamma_e));
        }
        if self.larmor.abs() > 0.1 * det {
            v.warnings.push("Larmor frequency exceeds 10% of the detuning".into());
        }
        if self.gamma_g > 0.1 * self.gamma_e {
            v.warnings.push("ground relaxation exceeds 10% of the excited relaxation".into());
        }
        v
    }

    /// Saturation parameter `κ₂ = Ω_R²/(Γγ)`.
    pub fn kappa2(&self) -> Result<f64> {
        if !(self.gamma_g > 0.0 && self.gamma_e > 0.0) {
            return Err(Error::InvalidParameter { name: "gamma_g", reason: "κ₂ needs γ > 0 and Γ > 0".into() });
        }
        Ok(self.rabi * self.rabi / (self.gamma_e * self.gamma_g))
    }

    /// Copy with `Ω_R` chosen so that `κ₂` takes the given value.
    pub fn with_kappa2(&self, kappa2: f64) -> ProbeConfig {
        let mut p = self.clone();
        p.rabi = (kappa2 * self.gamma_e * self.gamma_g).max(0.0).sqrt();
        p
    }

    /// Line profile at the configured detuning.
    pub fn profile(&self) -> Complex64 {
        voigt(self.detuning, self.gamma_e, self.doppler)
    }
}

/// Free ground-state evolution: populations relax to `1/(2f+1)` at rate `γ`,
/// coherences `ρ_nm` pick up `e^{-γt} e^{-i(n-m)Ω_L t}`.
pub fn evolve_ground(rho0: &DensityMatrix, t: f64, gamma: f64, larmor: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidTimes(format!("evolution time {t} must be finite and non-negative")));
    }
    let n = rho0.dim();
    let decay = (-gamma * t).exp();
    let iso = (1.0 - decay) / n as f64;
    let r = rho0.matrix();
    let m = DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            r[(a, a)] * decay + iso
        } else {
            let dm = a as f64 - b as f64;
            r[(a, b)] * Complex64::from_polar(decay, -dm * larmor * t)
        }
    });
    Ok(DensityMatrix::new_unchecked(m))
}

/// Envelope amplitudes of `Δα = e^{-γt}(A sin 2Ω_Lt + B cos 2Ω_Lt + C)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl Envelope {
    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c).sqrt()
    }
}

pub fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidTimes("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidTimes("times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimes("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Default grid: 8 Larmor periods at 64 samples per period, starting at 0.
pub fn default_times(larmor: f64) -> Vec<f64> {
    let period = 2.0 * std::f64::consts::PI / larmor.abs().max(f64::MIN_POSITIVE);
    let dt = period / 64.0;
    (0..8 * 64).map(|k| k as f64 * dt).collect()
}

/// Precomputed observables, profile and coupling for one spec/probe pair.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    spec: TransitionSpec,
    probe: ProbeConfig,
    obs: ObservableSet,
    profile: Complex64,
    coupling: f64,
}

impl ForwardModel {
    pub fn new(spec: &TransitionSpec, probe: &ProbeConfig) -> Result<Self> {
        spec.validate()?;
        probe.validate()?;
        let obs = build_observables(spec.f, spec.excited)?;
        Ok(ForwardModel {
            spec: spec.clone(),
            probe: probe.clone(),
            obs,
            profile: probe.profile(),
            coupling: chi(spec) * spec.cell_length / probe.rate_unit,
        })
    }

    pub fn spec(&self) -> &TransitionSpec {
        &self.spec
    }

    pub fn probe(&self) -> &ProbeConfig {
        &self.probe
    }

    pub fn observables(&self) -> &ObservableSet {
        &self.obs
    }

    /// `V_R + iV_I`.
    pub fn profile(&self) -> Complex64 {
        self.profile
    }

    /// `χL` in rate units.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        let n = self.spec.f.multiplicity();
        if rho.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rho.dim() });
        }
        Ok(())
    }

    /// Rotated expectation values `(a_R, a_I, b, d)` after the pulse.
    pub fn rotated_expectations(&self, rho0: &DensityMatrix, pulse: &PulseAngles) -> Result<[f64; 4]> {
        self.check_dim(rho0)?;
        self.obs.rotated(pulse).expectations(rho0)
    }

    pub fn envelope(&self, rho0: &DensityMatrix, pulse: &PulseAngles) -> Result<Envelope> {
        let [ar, ai, b, _] = self.rotated_expectations(rho0, pulse)?;
        let k = self.coupling;
        let v = self.profile;
        Ok(Envelope { a: -k * v.re * ar, b: -k * v.re * ai, c: k * v.im * b })
    }

    /// Polarization rotation and ellipticity.
    pub fn rotation_ellipticity(&self, rho0: &DensityMatrix, pulse: &PulseAngles, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_times(times)?;
        let [ar, ai, b, _] = self.rotated_expectations(rho0, pulse)?;
        let (k, v, p) = (self.coupling, self.profile, &self.probe);
        let mut da = Vec::with_capacity(times.len());
        let mut de = Vec::with_capacity(times.len());
        for &t in times {
            let env = (-p.gamma_g * t).exp();
            let (s, c) = (2.0 * p.larmor * t).sin_cos();
            da.push(-k * env * (v.re * ar * s + v.re * ai * c - v.im * b));
            de.push(k * env * (v.im * ar * s + v.im * ai * c + v.re * b));
        }
        Ok((da, de))
    }

    /// Relative absorption `ΔE/E` and phase `Δφ`, including the static isotropic part.
    pub fn absorption_phase(&self, rho0: &DensityMatrix, pulse: &PulseAngles, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_times(times)?;
        let [ar, ai, _, d] = self.rotated_expectations(rho0, pulse)?;
        let (k, v, p) = (self.coupling, self.profile, &self.probe);
        let ds = self.obs.delta_s;
        let mut abs = Vec::with_capacity(times.len());
        let mut phase = Vec::with_capacity(times.len());
        for &t in times {
            let env = (-p.gamma_g * t).exp();
            let (s, c) = (2.0 * p.larmor * t).sin_cos();
            let bracket = env * (ar * c - ai * s + d - ds) + ds;
            abs.push(k * v.re * bracket);
            phase.push(-k * v.im * bracket);
        }
        Ok((abs, phase))
    }

    /// All four channels as a trace.
    pub fn signal(&self, rho0: &DensityMatrix, pulse: &PulseAngles, times: &[f64]) -> Result<SignalTrace> {
        let (da, de) = self.rotation_ellipticity(rho0, pulse, times)?;
        let (dabs, dphi) = self.absorption_phase(rho0, pulse, times)?;
        Ok(SignalTrace {
            times: times.to_vec(),
            delta_alpha: da,
            delta_epsilon: Some(de),
            delta_absorption: Some(dabs),
            delta_phase: Some(dphi),
            meta: TraceMeta {
                spec: self.spec.clone(),
                probe: self.probe.clone(),
                pulse: *pulse,
                seed: None,
                snr: None,
                source: "analytic".into(),
                warnings: self.probe.validity().warnings,
            },
        })
    }

    /// Envelope norm of the aligned fixture at the identity pulse; the SNR reference.
    pub fn reference_amplitude(&self) -> Result<f64> {
        Ok(self.envelope(&ReferenceState::AlignedY.density(), &PulseAngles::IDENTITY)?.norm())
    }
}

pub fn signal(
    rho0: &DensityMatrix,
    pulse: &PulseAngles,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    times: &[f64],
) -> Result<SignalTrace> {
    ForwardModel::new(spec, probe)?.signal(rho0, pulse, times)
}

pub fn absorption_phase(
    rho0: &DensityMatrix,
    pulse: &PulseAngles,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    times: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    ForwardModel::new(spec, probe)?.absorption_phase(rho0, pulse, times)
}
