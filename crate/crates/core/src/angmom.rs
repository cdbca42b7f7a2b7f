//! Angular-momentum algebra.
//!
//! Wigner 3j and 6j symbols are evaluated with the Racah sum formula over
//! exact integers. Each symbol is returned as an [`ExactValue`], a rational
//! coefficient times the square root of a squarefree integer, so identities
//! such as orthogonality and Biedenharn–Elliott can be checked without any
//! floating-point error.
//!
//! Rotation matrices follow the z-y-z Euler convention with active rotations,
//! `D(α, β, γ) = exp(-iαJz) exp(-iβJy) exp(-iγJz)`, and the small d-matrix
//! `d^j_{m'm}(β) = <j m'| exp(-iβJy) |j m>` in the Condon–Shortley phase
//! convention. Matrices are indexed by `m + j`, so row/column 0 is `m = -j`.
//!
//! The spherical transform `U` maps Cartesian components onto spherical ones,
//! `A_q = Σ_i U_{qi} A_i` with rows ordered `q = -1, 0, +1`:
//!
//! ```text
//! A_{-1} = ( A_x - i A_y) / √2
//! A_0    =   A_z
//! A_{+1} = -( A_x + i A_y) / √2
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg};

use nalgebra::{DMatrix, Matrix3};
use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A non-negative or signed half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const ONE: HalfInt = HalfInt(2);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn integer(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// Multiplicity `2j + 1`.
    pub fn multiplicity(self) -> usize {
        (self.0 + 1).max(0) as usize
    }

    /// Projections `-j, -j+1, ..., j`.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let j = self.0.max(-1);
        (0..=2 * j).step_by(2).map(move |k| HalfInt(k - j))
    }

    /// Parses a finite value that must be an integer or half-integer.
    pub fn try_from_f64(x: f64) -> Option<Self> {
        let t = 2.0 * x;
        if t.is_finite() && (t - t.round()).abs() < 1e-9 && t.abs() < i32::MAX as f64 {
            Some(HalfInt(t.round() as i32))
        } else {
            None
        }
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        HalfInt::try_from_f64(x)
            .ok_or_else(|| serde::de::Error::custom(format!("{x} is not an integer or half-integer")))
    }
}

/// An exact number of the form `coeff · √radicand` with `radicand` squarefree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactValue {
    coeff: BigRational,
    radicand: BigUint,
}

impl ExactValue {
    pub fn zero() -> Self {
        ExactValue { coeff: BigRational::zero(), radicand: BigUint::one() }
    }

    pub fn rational(r: BigRational) -> Self {
        ExactValue { coeff: r, radicand: BigUint::one() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn coeff(&self) -> &BigRational {
        &self.coeff
    }

    pub fn radicand(&self) -> &BigUint {
        &self.radicand
    }

    /// The exact square, always rational.
    pub fn squared(&self) -> BigRational {
        &self.coeff * &self.coeff * BigRational::from_integer(BigInt::from(self.radicand.clone()))
    }

    pub fn to_f64(&self) -> f64 {
        let c = self.coeff.to_f64().unwrap_or(f64::NAN);
        let r = self.radicand.to_f64().unwrap_or(f64::NAN);
        c * r.sqrt()
    }

    /// Builds `rational · √(Π p^e)` from a prime-exponent map (exponents may be negative).
    fn from_parts(rational: BigRational, exponents: &BTreeMap<u64, i64>) -> Self {
        if rational.is_zero() {
            return ExactValue::zero();
        }
        let mut coeff = rational;
        let mut radicand = BigUint::one();
        for (&p, &e) in exponents {
            let (q, r) = e.div_mod_floor(&2);
            let pb = BigInt::from(p);
            if q > 0 {
                coeff *= BigRational::from_integer(num_traits::pow(pb.clone(), q as usize));
            } else if q < 0 {
                coeff /= BigRational::from_integer(num_traits::pow(pb.clone(), (-q) as usize));
            }
            if r == 1 {
                radicand *= BigUint::from(p);
            }
        }
        ExactValue { coeff, radicand }
    }
}

impl Mul for &ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: &ExactValue) -> ExactValue {
        if self.is_zero() || rhs.is_zero() {
            return ExactValue::zero();
        }
        let g = self.radicand.gcd(&rhs.radicand);
        let radicand = (&self.radicand / &g) * (&rhs.radicand / &g);
        let coeff = &self.coeff * &rhs.coeff * BigRational::from_integer(BigInt::from(g));
        ExactValue { coeff, radicand }
    }
}

impl Mul for ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: ExactValue) -> ExactValue {
        &self * &rhs
    }
}

impl Neg for ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        ExactValue { coeff: -self.coeff, radicand: self.radicand }
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.radicand.is_one() {
            write!(f, "{}", self.coeff)
        } else {
            write!(f, "{}·√{}", self.coeff, self.radicand)
        }
    }
}

/// A finite sum of [`ExactValue`]s, grouped by radicand.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExactSum {
    terms: BTreeMap<BigUint, BigRational>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_term(&mut self, v: &ExactValue) {
        if v.is_zero() {
            return;
        }
        let entry = self.terms.entry(v.radicand.clone()).or_insert_with(BigRational::zero);
        *entry += &v.coeff;
        if entry.is_zero() {
            self.terms.remove(&v.radicand);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(r, c)| c.to_f64().unwrap_or(f64::NAN) * r.to_f64().unwrap_or(f64::NAN).sqrt())
            .sum()
    }
}

impl From<&ExactValue> for ExactSum {
    fn from(v: &ExactValue) -> Self {
        let mut s = ExactSum::new();
        s.add_term(v);
        s
    }
}

impl Add<&ExactValue> for ExactSum {
    type Output = ExactSum;
    fn add(mut self, rhs: &ExactValue) -> ExactSum {
        self.add_term(rhs);
        self
    }
}

fn primes_up_to(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            let mut k = i * i;
            while k <= n {
                sieve[k] = false;
                k += i;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&k| sieve[k]).map(|k| k as u64).collect()
}

/// Accumulates `± Σ exponent(p, n!)` into `acc` via Legendre's formula.
fn add_factorial(acc: &mut BTreeMap<u64, i64>, primes: &[u64], n: u64, sign: i64) {
    for &p in primes {
        if p > n {
            break;
        }
        let mut e = 0i64;
        let mut pk = p;
        while pk <= n {
            e += (n / pk) as i64;
            pk = match pk.checked_mul(p) {
                Some(v) => v,
                None => break,
            };
        }
        *acc.entry(p).or_insert(0) += sign * e;
    }
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Twice-valued triangle check `|a - b| <= c <= a + b` with integer perimeter.
fn triangle(ta: i32, tb: i32, tc: i32) -> bool {
    ta >= 0 && tb >= 0 && tc >= 0 && tc <= ta + tb && tc >= (ta - tb).abs() && (ta + tb + tc) % 2 == 0
}

/// Adds the exponents of the triangle coefficient Δ(abc) (twice-valued inputs).
fn add_delta(acc: &mut BTreeMap<u64, i64>, primes: &[u64], ta: i32, tb: i32, tc: i32) {
    add_factorial(acc, primes, ((ta + tb - tc) / 2) as u64, 1);
    add_factorial(acc, primes, ((ta - tb + tc) / 2) as u64, 1);
    add_factorial(acc, primes, ((-ta + tb + tc) / 2) as u64, 1);
    add_factorial(acc, primes, ((ta + tb + tc) / 2 + 1) as u64, -1);
}

fn projection_ok(j: HalfInt, m: HalfInt) -> bool {
    j.0 >= 0 && m.0.abs() <= j.0 && (j.0 - m.0) % 2 == 0
}

/// Exact Wigner 3j symbol. Returns zero for any invalid coupling.
pub fn wigner3j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> ExactValue {
    if !(projection_ok(j1, m1) && projection_ok(j2, m2) && projection_ok(j3, m3)) {
        return ExactValue::zero();
    }
    if m1.0 + m2.0 + m3.0 != 0 || !triangle(j1.0, j2.0, j3.0) {
        return ExactValue::zero();
    }
    let (tj1, tj2, tj3) = (j1.0, j2.0, j3.0);
    let (tm1, tm2, tm3) = (m1.0, m2.0, m3.0);

    let bound = ((tj1 + tj2 + tj3) / 2 + 1) as u64;
    let primes = primes_up_to(bound);
    let mut exps = BTreeMap::new();
    add_delta(&mut exps, &primes, tj1, tj2, tj3);
    for (tj, tm) in [(tj1, tm1), (tj2, tm2), (tj3, tm3)] {
        add_factorial(&mut exps, &primes, ((tj + tm) / 2) as u64, 1);
        add_factorial(&mut exps, &primes, ((tj - tm) / 2) as u64, 1);
    }

    // Racah sum; all arguments below are integers for a valid coupling.
    let k1 = (tj3 - tj2 + tm1) / 2; // j3 - j2 + m1
    let k2 = (tj3 - tj1 - tm2) / 2; // j3 - j1 - m2
    let n1 = (tj1 + tj2 - tj3) / 2; // j1 + j2 - j3
    let n2 = (tj1 - tm1) / 2; // j1 - m1
    let n3 = (tj2 + tm2) / 2; // j2 + m2
    let t_min = 0.max(-k1).max(-k2);
    let t_max = n1.min(n2).min(n3);
    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let den = factorial(t as u64)
            * factorial((k1 + t) as u64)
            * factorial((k2 + t) as u64)
            * factorial((n1 - t) as u64)
            * factorial((n2 - t) as u64)
            * factorial((n3 - t) as u64);
        let term = BigRational::new(BigInt::one(), den);
        if t % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let phase = (tj1 - tj2 - tm3) / 2;
    if phase.rem_euclid(2) == 1 {
        sum = -sum;
    }
    ExactValue::from_parts(sum, &exps)
}

/// Wigner 3j symbol as a float.
pub fn wigner3j(j1: HalfInt, j2: HalfInt, j3: HalfInt, m1: HalfInt, m2: HalfInt, m3: HalfInt) -> f64 {
    wigner3j_exact(j1, j2, j3, m1, m2, m3).to_f64()
}

/// Exact Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}`. Zero when any triad fails.
pub fn wigner6j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> ExactValue {
    let triads = [
        (j1.0, j2.0, j3.0),
        (j1.0, j5.0, j6.0),
        (j4.0, j2.0, j6.0),
        (j4.0, j5.0, j3.0),
    ];
    if triads.iter().any(|&(a, b, c)| !triangle(a, b, c)) {
        return ExactValue::zero();
    }
    let alphas: Vec<i32> = triads.iter().map(|&(a, b, c)| (a + b + c) / 2).collect();
    let betas = [
        (j1.0 + j2.0 + j4.0 + j5.0) / 2,
        (j2.0 + j3.0 + j5.0 + j6.0) / 2,
        (j3.0 + j1.0 + j6.0 + j4.0) / 2,
    ];
    let t_min = *alphas.iter().max().unwrap();
    let t_max = *betas.iter().min().unwrap();

    let bound = (t_max + 1).max(1) as u64;
    let primes = primes_up_to(bound);
    let mut exps = BTreeMap::new();
    for &(a, b, c) in &triads {
        add_delta(&mut exps, &primes, a, b, c);
    }

    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let mut den = BigInt::one();
        for &a in &alphas {
            den *= factorial((t - a) as u64);
        }
        for &b in &betas {
            den *= factorial((b - t) as u64);
        }
        let term = BigRational::new(factorial((t + 1) as u64), den);
        if t % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    ExactValue::from_parts(sum, &exps)
}

/// Wigner 6j symbol as a float.
pub fn wigner6j(j1: HalfInt, j2: HalfInt, j3: HalfInt, j4: HalfInt, j5: HalfInt, j6: HalfInt) -> f64 {
    wigner6j_exact(j1, j2, j3, j4, j5, j6).to_f64()
}

fn factorial_f64(n: i32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Small Wigner d-matrix `d^j_{m'm}(θ)`, rows indexed by `m' + j`, columns by `m + j`.
pub fn wigner_d(j: HalfInt, theta: f64) -> DMatrix<f64> {
    let n = j.multiplicity();
    let tj = j.0;
    let (s, c) = (theta / 2.0).sin_cos();
    DMatrix::from_fn(n, n, |row, col| {
        // twice-valued projections
        let tmp = 2 * row as i32 - tj;
        let tm = 2 * col as i32 - tj;
        let jpmp = (tj + tmp) / 2;
        let jmmp = (tj - tmp) / 2;
        let jpm = (tj + tm) / 2;
        let jmm = (tj - tm) / 2;
        let dm = (tmp - tm) / 2; // m' - m
        let norm = (factorial_f64(jpmp) * factorial_f64(jmmp) * factorial_f64(jpm) * factorial_f64(jmm)).sqrt();
        let k_min = 0.max(-dm);
        let k_max = jpm.min(jmmp);
        let mut acc = 0.0;
        for k in k_min..=k_max {
            let den = factorial_f64(jpm - k) * factorial_f64(k) * factorial_f64(dm + k) * factorial_f64(jmmp - k);
            let sign = if (dm + k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let cos_exp = tj - 2 * k - dm; // 2j - 2k - (m' - m)
            let sin_exp = dm + 2 * k;
            acc += sign * c.powi(cos_exp) * s.powi(sin_exp) / den;
        }
        norm * acc
    })
}

/// Rotation operator `D(0, θ, φ) = exp(-iθJy) exp(-iφJz)`, elements `d_{m'm}(θ) e^{-iφm}`.
pub fn rotation_operator(j: HalfInt, phi: f64, theta: f64) -> DMatrix<Complex64> {
    let d = wigner_d(j, theta);
    let n = d.nrows();
    DMatrix::from_fn(n, n, |row, col| {
        let m = (2 * col as i32 - j.0) as f64 / 2.0;
        Complex64::from_polar(d[(row, col)], -phi * m)
    })
}

/// Spin matrices `(Jx, Jy, Jz)` in the `|j m>` basis ordered `m = -j..j`.
pub fn spin_matrices(j: HalfInt) -> (DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = j.multiplicity();
    let jv = j.value();
    let proj = |i: usize| i as f64 - jv;
    let jz = DMatrix::from_fn(n, n, |r, c| if r == c { Complex64::new(proj(r), 0.0) } else { Complex64::zero() });
    // J+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>
    let jp = DMatrix::from_fn(n, n, |r, c| {
        if r == c + 1 {
            let m = proj(c);
            Complex64::new((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0)
        } else {
            Complex64::zero()
        }
    });
    let jm = jp.adjoint();
    let jx = (&jp + &jm).map(|z| z * 0.5);
    let jy = (&jp - &jm).map(|z| z * Complex64::new(0.0, -0.5));
    (jx, jy, jz)
}

/// Cartesian-to-spherical transform, rows `q = -1, 0, +1`, columns `x, y, z`.
pub fn spherical_transform() -> Matrix3<Complex64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::zero();
    Matrix3::new(
        Complex64::new(r, 0.0), Complex64::new(0.0, -r), z,
        z, z, Complex64::new(1.0, 0.0),
        Complex64::new(-r, 0.0), Complex64::new(0.0, -r), z,
    )
}
