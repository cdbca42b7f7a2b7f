//! Line profiles: Lorentzian `(Γ - 2iΔ)⁻¹` and its Gaussian (Doppler) convolution.

use std::f64::consts::PI;

use num_complex::Complex64;
use once_cell::sync::Lazy;

/// `(Γ - 2iΔ)⁻¹`.
pub fn lorentz(delta: f64, gamma: f64) -> Complex64 {
    Complex64::new(gamma, -2.0 * delta).inv()
}

const WEIDEMAN_N: usize = 32;

struct Weideman {
    l: f64,
    coeffs: Vec<f64>,
}

// Weideman (1994) rational approximation of the Faddeeva function with N terms,
// valid in the closed upper half plane.
static WEIDEMAN: Lazy<Weideman> = Lazy::new(|| {
    let n = WEIDEMAN_N;
    let m = 2 * n;
    let m2 = 2 * m;
    let l = (n as f64 / 2f64.sqrt()).sqrt();
    let mut f = vec![0.0; m2];
    for (slot, k) in (1..m2).zip(-(m as i64) + 1..m as i64) {
        let theta = k as f64 * PI / m as f64;
        let t = l * (theta / 2.0).tan();
        f[slot] = (-t * t).exp() * (l * l + t * t);
    }
    // fftshift by M, then the real part of the DFT.
    let shifted: Vec<f64> = (0..m2).map(|i| f[(i + m) % m2]).collect();
    let coeffs = (1..=n)
        .map(|k| {
            let s: f64 = shifted
                .iter()
                .enumerate()
                .map(|(j, &v)| v * (2.0 * PI * (k * j) as f64 / m2 as f64).cos())
                .sum();
            s / m2 as f64
        })
        .collect();
    Weideman { l, coeffs }
});

fn faddeeva_upper(z: Complex64) -> Complex64 {
    let w = &*WEIDEMAN;
    let i = Complex64::i();
    let lmiz = Complex64::new(w.l, 0.0) - i * z;
    let zz = (Complex64::new(w.l, 0.0) + i * z) / lmiz;
    // Horner with highest power first.
    let mut p = Complex64::new(0.0, 0.0);
    for &a in w.coeffs.iter().rev() {
        p = p * zz + a;
    }
    2.0 * p / (lmiz * lmiz) + (1.0 / PI.sqrt()) / lmiz
}

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)`.
pub fn faddeeva(z: Complex64) -> Complex64 {
    if z.im >= 0.0 {
        faddeeva_upper(z)
    } else {
        2.0 * (-z * z).exp() - faddeeva_upper(-z)
    }
}

/// Lorentzian convolved with `exp(-u²/Γ_D²)/(Γ_D√π)`. `Γ_D = 0` returns [`lorentz`].
pub fn voigt(delta: f64, gamma: f64, gamma_d: f64) -> Complex64 {
    if gamma_d == 0.0 {
        return lorentz(delta, gamma);
    }
    let z = Complex64::new(delta, gamma / 2.0) / gamma_d;
    PI.sqrt() * faddeeva(z) / (2.0 * gamma_d)
}
