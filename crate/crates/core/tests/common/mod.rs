//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qtomo::angmom::{wigner6j_exact, ExactSum, ExactValue, HalfInt};
use qtomo::qstate::DensityMatrix;

// 15-point Kronrod nodes on [0, 1] (symmetric), with the embedded 7-point Gauss weights.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XK[i];
        let s = f(c - x) + f(c + x);
        k += s * WK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod quadrature of a complex integrand.
pub fn integrate<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64) -> Complex64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = Complex64::new(0.0, 0.0);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(f, lo, hi);
        if err <= tol * (hi - lo) / (b - a) || depth > 50 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Lorentzian `(Γ - 2i(Δ-u))⁻¹` against the Doppler weight `exp(-u²/Γ_D²)/(Γ_D√π)`, by quadrature.
pub fn voigt_quadrature(delta: f64, gamma: f64, gamma_d: f64) -> Complex64 {
    let f = |u: f64| {
        let g = (-(u / gamma_d).powi(2)).exp() / (gamma_d * std::f64::consts::PI.sqrt());
        Complex64::new(gamma, -2.0 * (delta - u)).inv() * g
    };
    let lim = 9.0 * gamma_d;
    let mut cuts = vec![-lim, lim];
    if delta.abs() < lim {
        cuts.insert(1, delta);
    }
    cuts.windows(2).map(|w| integrate(&f, w[0], w[1], 1e-14)).sum()
}

/// `J_y` for spin `j` from the ladder operators, basis ordered by ascending `m`.
pub fn jy(j: HalfInt) -> DMatrix<Complex64> {
    let n = j.multiplicity();
    let jv = j.value();
    let mut jp = DMatrix::<Complex64>::zeros(n, n);
    for col in 0..n - 1 {
        let m = col as f64 - jv;
        jp[(col + 1, col)] = Complex64::new((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    (jp - jm) / Complex64::new(0.0, 2.0)
}

/// `exp(-iθJ_y)` by matrix exponential.
pub fn wigner_d_expm(j: HalfInt, theta: f64) -> DMatrix<f64> {
    let gen = jy(j) * Complex64::new(0.0, -theta);
    gen.exp().map(|z| z.re)
}

pub fn hi(twice: i32) -> HalfInt {
    HalfInt::from_twice(twice)
}

/// `(j j 0; m -m 0) = (-1)^{j-m}/√(2j+1)`.
pub fn threej_with_zero(j: HalfInt, m: HalfInt) -> f64 {
    let sign = if ((j.twice() - m.twice()) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign / ((j.twice() + 1) as f64).sqrt()
}

/// `{a b c; 0 c b} = (-1)^{a+b+c}/√((2b+1)(2c+1))`.
pub fn sixj_with_zero(a: HalfInt, b: HalfInt, c: HalfInt) -> f64 {
    let s = (a.twice() + b.twice() + c.twice()) / 2;
    let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
    sign / (((b.twice() + 1) * (c.twice() + 1)) as f64).sqrt()
}

/// Memoized exact 6j symbols keyed by doubled arguments.
#[derive(Default)]
pub struct SixjCache(HashMap<[i32; 6], ExactValue>);

impl SixjCache {
    pub fn get(&mut self, a: [i32; 6]) -> ExactValue {
        self.0
            .entry(a)
            .or_insert_with(|| wigner6j_exact(hi(a[0]), hi(a[1]), hi(a[2]), hi(a[3]), hi(a[4]), hi(a[5])))
            .clone()
    }
}

pub fn triangle(a: i32, b: i32, c: i32) -> bool {
    c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

/// Biedenharn–Elliott residual for doubled arguments; `None` when the right-hand side vanishes identically.
pub fn biedenharn_elliott(cache: &mut SixjCache, t: [i32; 9]) -> Option<bool> {
    let [a, b, c, d, e, f, p, q, r] = t;
    let rhs1 = cache.get([p, q, r, e, a, d]);
    let rhs2 = cache.get([p, q, r, f, b, c]);
    let mut sum = ExactSum::new();
    let lo = (a - b).abs().max((c - d).abs()).max((e - f).abs());
    let hi_ = (a + b).min(c + d).min(e + f);
    let mut x = lo;
    while x <= hi_ {
        if triangle(a, b, x) && triangle(c, d, x) && triangle(e, f, x) {
            let s = a + b + c + d + e + f + p + q + r + x;
            let (s1, s2, s3) = (cache.get([a, b, x, c, d, p]), cache.get([c, d, x, e, f, q]), cache.get([e, f, x, b, a, r]));
            let w = &(&s1 * &s2) * &s3;
            if !w.is_zero() {
                let weight = ExactValue::rational(num_rational::BigRational::from_integer(((x + 1) as i64).into()));
                let mut term = &w * &weight;
                // (-1)^{S+x}; S + x is an integer sum of doubled values halved.
                if (s / 2) % 2 != 0 {
                    term = -term;
                }
                sum.add_term(&term);
            }
        }
        x += 1;
    }
    let rhs = &rhs1 * &rhs2;
    if rhs.is_zero() && sum.is_zero() {
        return None;
    }
    sum.add_term(&(-rhs));
    Some(sum.is_zero())
}

/// `⟨ψ|ρ|ψ⟩`, the fidelity of `ρ` against the pure state `ψ`.
pub fn pure_overlap(psi: &nalgebra::DVector<Complex64>, rho: &DensityMatrix) -> f64 {
    (psi.adjoint() * rho.matrix() * psi)[(0, 0)].re
}

/// Closed-form qutrit expectations `(⟨α_R⟩, ⟨α_I⟩, ⟨β⟩, ⟨δ⟩)` for `f = 1 -> F = 0`.
pub fn qutrit_expectations(rho: &DensityMatrix) -> [f64; 4] {
    let r20 = rho.get(2, 0);
    let (p0, p2) = (rho.get(0, 0).re, rho.get(2, 2).re);
    [2.0 / 3.0 * r20.re, -2.0 / 3.0 * r20.im, (p2 - p0) / 3.0, (p0 + p2) / 3.0]
}
