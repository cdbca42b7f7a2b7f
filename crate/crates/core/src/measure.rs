//! Synthetic noise and the envelope fit `Δα = e^{-γt}(A sin 2Ω_Lt + B cos 2Ω_Lt + C)`.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::SignalTrace;

/// White-noise model: `σ = reference_amplitude / snr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
    pub reference_amplitude: f64,
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        if self.snr.is_infinite() { 0.0 } else { self.reference_amplitude / self.snr }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(Error::InvalidParameter { name: "snr", reason: format!("must be positive, got {}", self.snr) });
        }
        if !(self.reference_amplitude > 0.0 && self.reference_amplitude.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "reference_amplitude",
                reason: format!("must be positive, got {}", self.reference_amplitude),
            });
        }
        Ok(())
    }
}

/// Adds i.i.d. Gaussian noise to the rotation channel.
pub fn add_noise(trace: &SignalTrace, noise: &NoiseSpec) -> Result<SignalTrace> {
    noise.validate()?;
    let mut out = trace.clone();
    out.meta.snr = Some(noise.snr);
    out.meta.seed = Some(noise.seed);
    let sigma = noise.sigma();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter { name: "snr", reason: e.to_string() })?;
    for v in out.delta_alpha.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Fitted amplitudes with covariance from the residual variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub cov: [[f64; 3]; 3],
    pub residual_rms: f64,
    /// Refined Larmor frequency, when the nonlinear refinement ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub larmor: Option<f64>,
    /// Refined decay rate, when the nonlinear refinement ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl FitResult {
    pub fn params(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn std_errors(&self) -> [f64; 3] {
        [self.cov[0][0].sqrt(), self.cov[1][1].sqrt(), self.cov[2][2].sqrt()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Samples before this time are ignored.
    pub t_min: f64,
    /// Also fit `Ω_L` and `γ` by Levenberg–Marquardt, starting from the given values.
    pub refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { t_min: f64::NEG_INFINITY, refine: false }
    }
}

fn basis(t: f64, larmor: f64, gamma: f64) -> Vector3<f64> {
    let e = (-gamma * t).exp();
    let (s, c) = (2.0 * larmor * t).sin_cos();
    Vector3::new(e * s, e * c, e)
}

fn linear_fit(times: &[f64], y: &[f64], larmor: f64, gamma: f64) -> Result<(Vector3<f64>, Matrix3<f64>, f64)> {
    let n = times.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for (&t, &v) in times.iter().zip(y) {
        let row = basis(t, larmor, gamma);
        xtx += row * row.transpose();
        xty += row * v;
    }
    // Condition estimate from the scaled normal matrix.
    let d = Vector3::new(xtx[(0, 0)].sqrt(), xtx[(1, 1)].sqrt(), xtx[(2, 2)].sqrt());
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::SingularDesign { condition: f64::INFINITY });
    }
    let scaled = Matrix3::from_fn(|i, j| xtx[(i, j)] / (d[i] * d[j]));
    let ev = scaled.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > 1e12 {
        return Err(Error::SingularDesign { condition });
    }
    let chol = xtx.cholesky().ok_or(Error::SingularDesign { condition })?;
    let beta = chol.solve(&xty);
    let inv = chol.inverse();
    let rss: f64 = times.iter().zip(y).map(|(&t, &v)| (v - basis(t, larmor, gamma).dot(&beta)).powi(2)).sum();
    Ok((beta, inv, rss))
}

/// Linear least squares with `Ω_L` and `γ` fixed.
pub fn fit_envelope(trace: &SignalTrace, larmor: f64, gamma: f64) -> Result<FitResult> {
    fit_envelope_with(trace, larmor, gamma, &FitOptions::default())
}

pub fn fit_envelope_with(trace: &SignalTrace, larmor: f64, gamma: f64, opts: &FitOptions) -> Result<FitResult> {
    trace.validate()?;
    let start = trace.times.partition_point(|&t| t < opts.t_min);
    let times = &trace.times[start..];
    let y = &trace.delta_alpha[start..];
    if opts.refine {
        return refine_fit(times, y, larmor, gamma);
    }
    let (beta, inv, rss) = linear_fit(times, y, larmor, gamma)?;
    let n = times.len();
    let s2 = if n > 3 { rss / (n - 3) as f64 } else { 0.0 };
    let cov = Matrix3::from_fn(|i, j| inv[(i, j)] * s2);
    Ok(FitResult {
        a: beta[0],
        b: beta[1],
        c: beta[2],
        cov: to_array(&cov),
        residual_rms: (rss / n as f64).sqrt(),
        larmor: None,
        gamma: None,
    })
}

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

// Levenberg–Marquardt over (A, B, C, Ω_L, γ) with an analytic Jacobian.
fn refine_fit(times: &[f64], y: &[f64], larmor0: f64, gamma0: f64) -> Result<FitResult> {
    use nalgebra::{SMatrix, SVector};
    let (beta0, _, _) = linear_fit(times, y, larmor0, gamma0)?;
    let mut p = SVector::<f64, 5>::new(beta0[0], beta0[1], beta0[2], larmor0, gamma0);
    let residuals = |p: &SVector<f64, 5>| -> (Vec<f64>, f64) {
        let r: Vec<f64> = times
            .iter()
            .zip(y)
            .map(|(&t, &v)| v - basis(t, p[3], p[4]).dot(&Vector3::new(p[0], p[1], p[2])))
            .collect();
        let rss = r.iter().map(|x| x * x).sum();
        (r, rss)
    };
    let (mut r, mut rss) = residuals(&p);
    let mut lambda = 1e-3;
    let mut jtj = SMatrix::<f64, 5, 5>::zeros();
    for _ in 0..200 {
        jtj = SMatrix::zeros();
        let mut jtr = SVector::<f64, 5>::zeros();
        for (k, &t) in times.iter().enumerate() {
            let e = (-p[4] * t).exp();
            let (s, c) = (2.0 * p[3] * t).sin_cos();
            let g = SVector::<f64, 5>::new(
                e * s,
                e * c,
                e,
                e * 2.0 * t * (p[0] * c - p[1] * s),
                -t * e * (p[0] * s + p[1] * c + p[2]),
            );
            jtj += g * g.transpose();
            jtr += g * r[k];
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] *= 1.0 + lambda;
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = ch.solve(&jtr);
            let trial = p + step;
            let (rt, rss_t) = residuals(&trial);
            if rss_t < rss {
                let rel = (rss - rss_t) / rss.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                rss = rss_t;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let n = times.len();
    let s2 = if n > 5 { rss / (n - 5) as f64 } else { 0.0 };
    let cov5 = jtj.try_inverse().unwrap_or_else(SMatrix::zeros) * s2;
    let cov = Matrix3::from_fn(|i, j| cov5[(i, j)]);
    Ok(FitResult {
        a: p[0],
        b: p[1],
        c: p[2],
        cov: to_array(&cov),
        residual_rms: (rss / n as f64).sqrt(),
        larmor: Some(p[3]),
        gamma: Some(p[4]),
    })
}
