//! Effective ground-state observables probed by the light, and control-pulse rotations.
//!
//! For a ground level `f` coupled to an excited level `F` the polarization
//! signal depends on three Hermitian operators built from 3j products:
//!
//! ```text
//! α_R = Σ_n c_n (|n><n+2| + |n+2><n|)
//! α_I = Σ_n c_n (i|n><n+2| - i|n+2><n|)
//! β   = Σ_n [ (f 1 F; -n 1 n-1)² - (f 1 F; -n -1 n+1)² ] |n><n|
//! c_n = (f 1 F; -n-2 1 n+1) (F 1 f; -n-1 1 n)
//! ```
//!
//! and absorption/phase add `δ` (same as `β` with a plus sign) plus the
//! isotropic fraction `δ_s = 2/(2f+1) Σ_n (f 1 F; -n 1 n-1)²`.
//!
//! A control pulse `(φ, θ)` acts on states as `ρ' = D ρ D†` with
//! `D = exp(-iθJy) exp(-iφJz)`, so observables transform as `X' = D† X D`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angmom::{rotation_operator, wigner3j, HalfInt};
use crate::error::{Error, Result};
use crate::qstate::DensityMatrix;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI { y - 2.0 * PI } else { y }
}

/// Euler angles of a control pulse: `phi` about z first, then `theta` about y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseAngles {
    phi: f64,
    theta: f64,
}

impl PulseAngles {
    pub fn new(phi: f64, theta: f64) -> Result<Self> {
        if !phi.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidParameter { name: "pulse", reason: format!("non-finite angles ({phi}, {theta})") });
        }
        Ok(PulseAngles { phi: wrap_angle(phi), theta: wrap_angle(theta) })
    }

    pub const IDENTITY: PulseAngles = PulseAngles { phi: 0.0, theta: 0.0 };

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Rotation operator for angular momentum `j`.
    pub fn operator(&self, j: HalfInt) -> DMatrix<Complex64> {
        rotation_operator(j, self.phi, self.theta)
    }
}

impl<'de> Deserialize<'de> for PulseAngles {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            phi: f64,
            theta: f64,
        }
        let r = Raw::deserialize(d)?;
        PulseAngles::new(r.phi, r.theta).map_err(serde::de::Error::custom)
    }
}

/// Effective observables for one `f -> F` transition.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSet {
    pub f: HalfInt,
    pub excited: HalfInt,
    pub alpha_r: DMatrix<Complex64>,
    pub alpha_i: DMatrix<Complex64>,
    pub beta: DMatrix<Complex64>,
    pub delta: DMatrix<Complex64>,
    pub delta_s: f64,
}

pub fn dipole_allowed(f: HalfInt, excited: HalfInt) -> bool {
    let (a, b) = (f.twice(), excited.twice());
    a >= 0 && b >= 0 && (a - b).abs() <= 2 && (a - b) % 2 == 0 && a + b >= 2
}

pub fn check_transition(f: HalfInt, excited: HalfInt) -> Result<()> {
    if dipole_allowed(f, excited) {
        Ok(())
    } else {
        Err(Error::ForbiddenTransition { f, excited })
    }
}

pub fn build_observables(f: HalfInt, excited: HalfInt) -> Result<ObservableSet> {
    check_transition(f, excited)?;
    let n = f.multiplicity();
    let one = HalfInt::ONE;
    let zero = Complex64::new(0.0, 0.0);
    let mut alpha_r = DMatrix::from_element(n, n, zero);
    let mut alpha_i = DMatrix::from_element(n, n, zero);
    let mut beta = DMatrix::from_element(n, n, zero);
    let mut delta = DMatrix::from_element(n, n, zero);
    let fv = excited;
    let two = HalfInt::integer(2);

    for (idx, m) in f.projections().enumerate() {
        if idx + 2 < n {
            let c = wigner3j(f, one, fv, -m - two, one, m + one) * wigner3j(fv, one, f, -m - one, one, m);
            alpha_r[(idx, idx + 2)] += Complex64::new(c, 0.0);
            alpha_r[(idx + 2, idx)] += Complex64::new(c, 0.0);
            alpha_i[(idx, idx + 2)] += Complex64::new(0.0, c);
            alpha_i[(idx + 2, idx)] += Complex64::new(0.0, -c);
        }
        let plus = wigner3j(f, one, fv, -m, one, m - one).powi(2);
        let minus = wigner3j(f, one, fv, -m, -one, m + one).powi(2);
        beta[(idx, idx)] = Complex64::new(plus - minus, 0.0);
        delta[(idx, idx)] = Complex64::new(plus + minus, 0.0);
    }
    let delta_s = 2.0 / n as f64
        * f.projections().map(|m| wigner3j(f, one, fv, -m, one, m - one).powi(2)).sum::<f64>();
    Ok(ObservableSet { f, excited, alpha_r, alpha_i, beta, delta, delta_s })
}

impl ObservableSet {
    /// All four observables conjugated by the pulse, `X' = D† X D`.
    pub fn rotated(&self, pulse: &PulseAngles) -> ObservableSet {
        let d = pulse.operator(self.f);
        let rot = |x: &DMatrix<Complex64>| d.adjoint() * x * &d;
        ObservableSet {
            f: self.f,
            excited: self.excited,
            alpha_r: rot(&self.alpha_r),
            alpha_i: rot(&self.alpha_i),
            beta: rot(&self.beta),
            delta: rot(&self.delta),
            delta_s: self.delta_s,
        }
    }

    /// Expectation values `(⟨α_R⟩, ⟨α_I⟩, ⟨β⟩, ⟨δ⟩)`.
    pub fn expectations(&self, rho: &DensityMatrix) -> Result<[f64; 4]> {
        Ok([
            expectation(&self.alpha_r, rho)?,
            expectation(&self.alpha_i, rho)?,
            expectation(&self.beta, rho)?,
            expectation(&self.delta, rho)?,
        ])
    }
}

/// `Tr(ρ X)` as a complex number.
pub fn expectation_complex(obs: &DMatrix<Complex64>, rho: &DensityMatrix) -> Result<Complex64> {
    if obs.nrows() != rho.dim() || obs.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: obs.nrows() });
    }
    let r = rho.matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..r.nrows() {
        for k in 0..r.ncols() {
            acc += r[(i, k)] * obs[(k, i)];
        }
    }
    Ok(acc)
}

/// `Tr(ρ X)` for a Hermitian observable; the (roundoff-level) imaginary part is dropped.
pub fn expectation(obs: &DMatrix<Complex64>, rho: &DensityMatrix) -> Result<f64> {
    Ok(expectation_complex(obs, rho)?.re)
}

/// `D† X D` for the pulse rotation operator at angular momentum `f`.
pub fn rotate_observable(obs: &DMatrix<Complex64>, pulse: &PulseAngles, f: HalfInt) -> DMatrix<Complex64> {
    let d = pulse.operator(f);
    d.adjoint() * obs * d
}

/// Post-pulse state `D ρ D†`.
pub fn rotate_state(rho: &DensityMatrix, pulse: &PulseAngles) -> DensityMatrix {
    let f = HalfInt::from_twice(rho.dim() as i32 - 1);
    rho.conjugate_by(&pulse.operator(f))
}
