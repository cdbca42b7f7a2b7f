//! Density matrices over the magnetic sublevels of one hyperfine level.
//!
//! Basis ordering is `m = -f, ..., +f`, so for the qutrit index 0 is
//! `m = -1`, index 1 is `m = 0` and index 2 is `m = +1`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGEN_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<Complex64>,
}

/// Deviations of a matrix from the density-matrix constraints.
#[derive(Clone, Copy, Debug)]
pub struct Physicality {
    pub hermiticity_error: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn is_physical(&self) -> bool {
        self.hermiticity_error <= HERMITIAN_TOL && self.trace_error <= TRACE_TOL && self.min_eigenvalue >= -EIGEN_TOL
    }
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let h = hermitian_part(m);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).map(|z| z * 0.5)
}

// Eigenvalues below this multiple of the largest one are roundoff and are treated as zero;
// otherwise their square roots (~1e-8) would pollute fidelities of pure states.
fn clamp_floor(eigenvalues: &[f64]) -> f64 {
    let max = eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    8.0 * eigenvalues.len() as f64 * f64::EPSILON * max
}

fn clamped_sqrt(l: f64, floor: f64) -> f64 {
    if l <= floor { 0.0 } else { l.sqrt() }
}

/// Principal square root of a PSD Hermitian matrix; negative and roundoff-level eigenvalues map to zero.
pub fn sqrt_psd(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let floor = clamp_floor(&ev);
    let roots = DVector::from_iterator(ev.len(), ev.iter().map(|&l| Complex64::new(clamped_sqrt(l, floor), 0.0)));
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&roots) * v.adjoint()
}

pub fn physicality(m: &DMatrix<Complex64>) -> Physicality {
    let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let trace = (m.trace() - Complex64::new(1.0, 0.0)).norm();
    let min_eig = hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
    Physicality { hermiticity_error: herm, trace_error: trace, min_eigenvalue: min_eig }
}

impl DensityMatrix {
    /// Validates and wraps a matrix.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::Unphysical("empty matrix".into()));
        }
        let p = physicality(&m);
        if p.hermiticity_error > HERMITIAN_TOL {
            return Err(Error::Unphysical(format!("not Hermitian (max deviation {:.3e})", p.hermiticity_error)));
        }
        if p.trace_error > TRACE_TOL {
            return Err(Error::Unphysical(format!("trace deviates from 1 by {:.3e}", p.trace_error)));
        }
        if p.min_eigenvalue < -EIGEN_TOL {
            return Err(Error::Unphysical(format!("negative eigenvalue {:.3e}", p.min_eigenvalue)));
        }
        Ok(DensityMatrix { m })
    }

    /// Wraps a matrix without checks. Callers guarantee physicality.
    pub fn new_unchecked(m: DMatrix<Complex64>) -> Self {
        DensityMatrix { m }
    }

    /// Hermitizes and renormalizes a nearly physical matrix, then validates it.
    pub fn from_approx(m: DMatrix<Complex64>) -> Result<Self> {
        let h = hermitian_part(&m);
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Unphysical(format!("trace {tr} is not positive")));
        }
        DensityMatrix::new(h.map(|z| z / tr))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix { m: DMatrix::identity(dim, dim).map(|z: Complex64| z / dim as f64) }
    }

    /// Projector onto a (not necessarily normalized) state vector.
    pub fn from_pure(psi: &DVector<Complex64>) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Unphysical("zero state vector".into()));
        }
        let v = psi.map(|z| z / n);
        Ok(DensityMatrix { m: &v * v.adjoint() })
    }

    /// Pure basis state `|m>` with `index = m + f`.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = Complex64::new(1.0, 0.0);
        DensityMatrix { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }

    pub fn physicality(&self) -> Physicality {
        physicality(&self.m)
    }

    /// Convex combination `a·self + (1-a)·other`.
    pub fn mix(&self, other: &DensityMatrix, a: f64) -> Result<Self> {
        check_dims(self, other)?;
        Ok(DensityMatrix { m: self.m.map(|z| z * a) + other.m.map(|z| z * (1.0 - a)) })
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &DMatrix<Complex64>) -> DensityMatrix {
        DensityMatrix { m: u * &self.m * u.adjoint() }
    }
}

fn check_dims(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.m.iter().map(|z| z.norm_sqr()).sum()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let s = sqrt_psd(&rho.m);
    let inner = &s * &sigma.m * &s;
    let ev = hermitian_eigenvalues(&inner);
    let floor = clamp_floor(&ev);
    let tr: f64 = ev.iter().map(|&l| clamped_sqrt(l, floor)).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

#[derive(Serialize, Deserialize)]
struct DensityJson {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                re.push(self.m[(r, c)].re);
                im.push(self.m[(r, c)].im);
            }
        }
        DensityJson { dim: n, re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = DensityJson::deserialize(d)?;
        let n = j.dim;
        if j.re.len() != n * n || j.im.len() != n * n {
            return Err(D::Error::custom(format!("expected {} entries in re and im", n * n)));
        }
        let m = DMatrix::from_fn(n, n, |r, c| Complex64::new(j.re[r * n + c], j.im[r * n + c]));
        DensityMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Real parameters of a lower-triangular factor `T` with `ρ = T T† / Tr(T T†)`.
///
/// Layout for dimension `n` (length `n²`): first the `n` real diagonal
/// entries, then `(re, im)` pairs for the strictly lower entries in
/// row-major order `(1,0), (2,0), (2,1), ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CholeskyParams(pub Vec<f64>);

impl CholeskyParams {
    pub fn zeros(dim: usize) -> Self {
        CholeskyParams(vec![0.0; dim * dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> Result<usize> {
        let n = (self.0.len() as f64).sqrt().round() as usize;
        if n * n != self.0.len() || n == 0 {
            return Err(Error::InvalidParameter {
                name: "cholesky_params",
                reason: format!("length {} is not a positive perfect square", self.0.len()),
            });
        }
        Ok(n)
    }

    /// Lower-triangular factor `T`.
    pub fn factor(&self) -> Result<DMatrix<Complex64>> {
        let n = self.dim()?;
        let p = &self.0;
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = Complex64::new(p[i], 0.0);
        }
        let mut k = n;
        for i in 1..n {
            for j in 0..i {
                t[(i, j)] = Complex64::new(p[k], p[k + 1]);
                k += 2;
            }
        }
        Ok(t)
    }

    /// Packs a lower-triangular factor; the diagonal's imaginary part is dropped.
    pub fn from_factor(t: &DMatrix<Complex64>) -> Self {
        let n = t.nrows();
        let mut p = Vec::with_capacity(n * n);
        for i in 0..n {
            p.push(t[(i, i)].re);
        }
        for i in 1..n {
            for j in 0..i {
                p.push(t[(i, j)].re);
                p.push(t[(i, j)].im);
            }
        }
        CholeskyParams(p)
    }
}

/// Maps any real parameter vector to a physical state. The all-zero factor maps to `𝟙/n`.
pub fn to_density(params: &CholeskyParams) -> Result<DensityMatrix> {
    let t = params.factor()?;
    let n = t.nrows();
    let tt = &t * t.adjoint();
    let s = tt.trace().re;
    if !(s > f64::MIN_POSITIVE) || !s.is_finite() {
        return Ok(DensityMatrix::maximally_mixed(n));
    }
    let m = hermitian_part(&tt).map(|z| z / s);
    Ok(DensityMatrix::new_unchecked(m))
}

/// Cholesky factorization that skips (zeroes) non-positive pivots, so rank-deficient states factor too.
pub fn from_density(rho: &DensityMatrix) -> CholeskyParams {
    let n = rho.dim();
    let a = rho.matrix();
    let eps = 1e-14 * a.trace().re.abs().max(1.0);
    let mut t: DMatrix<Complex64> = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= t[(j, k)].norm_sqr();
        }
        if d <= eps {
            continue;
        }
        let diag = d.sqrt();
        t[(j, j)] = Complex64::new(diag, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= t[(i, k)] * t[(j, k)].conj();
            }
            t[(i, j)] = s / diag;
        }
    }
    CholeskyParams::from_factor(&t)
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let q = qr.q();
    let r = qr.r();
    let phases = DVector::from_fn(dim, |i, _| {
        let d = r[(i, i)];
        if d.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { d / d.norm() }
    });
    q * DMatrix::from_diagonal(&phases)
}

/// `U|m = f><m = f|U†` with `U` Haar-distributed.
pub fn random_pure_with<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix {
    let u = haar_unitary(rng, dim);
    let psi = u.column(dim - 1).into_owned();
    DensityMatrix::new_unchecked(&psi * psi.adjoint())
}

/// Blend `p|ψ><ψ| + (1-p)𝟙/d` with `p` chosen so the purity equals `target_purity` exactly.
pub fn random_mixed_with<R: Rng + ?Sized>(rng: &mut R, dim: usize, target_purity: f64) -> Result<DensityMatrix> {
    let d = dim as f64;
    let lo = 1.0 / d;
    if !(target_purity >= lo - 1e-15 && target_purity <= 1.0 + 1e-15) {
        return Err(Error::InvalidParameter {
            name: "target_purity",
            reason: format!("{target_purity} outside [1/{dim}, 1]"),
        });
    }
    let p = ((d * target_purity - 1.0) / (d - 1.0)).max(0.0).sqrt().min(1.0);
    let pure = random_pure_with(rng, dim);
    if p == 0.0 {
        return Ok(DensityMatrix::maximally_mixed(dim));
    }
    pure.mix(&DensityMatrix::maximally_mixed(dim), p)
}

/// Haar-random pure qutrit state.
pub fn random_pure(seed: u64) -> DensityMatrix {
    random_pure_with(&mut ChaCha8Rng::seed_from_u64(seed), 3)
}

/// Partially mixed qutrit state with the requested purity.
pub fn random_mixed(seed: u64, target_purity: f64) -> Result<DensityMatrix> {
    random_mixed_with(&mut ChaCha8Rng::seed_from_u64(seed), 3, target_purity)
}

/// Named qutrit states used as fixtures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceState {
    /// Equal populations, no coherences.
    Thermal,
    /// Steady state of y-polarized optical pumping: Δm = 2 coherence, no orientation.
    AlignedY,
    /// `|m = +1><m = +1|`.
    Stretched,
}

impl ReferenceState {
    pub const ALL: [ReferenceState; 3] = [ReferenceState::Thermal, ReferenceState::AlignedY, ReferenceState::Stretched];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceState::Thermal => "thermal",
            ReferenceState::AlignedY => "aligned_y",
            ReferenceState::Stretched => "stretched",
        }
    }

    pub fn density(self) -> DensityMatrix {
        match self {
            ReferenceState::Thermal => DensityMatrix::maximally_mixed(3),
            ReferenceState::AlignedY => aligned_y_fixture(),
            ReferenceState::Stretched => DensityMatrix::basis_state(3, 2),
        }
    }
}

impl fmt::Display for ReferenceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal" => Ok(ReferenceState::Thermal),
            "aligned_y" | "aligned" => Ok(ReferenceState::AlignedY),
            "stretched" => Ok(ReferenceState::Stretched),
            other => Err(Error::UnknownState(other.to_string())),
        }
    }
}

pub fn reference_state(name: &str) -> Result<DensityMatrix> {
    Ok(name.parse::<ReferenceState>()?.density())
}

/// Frozen aligned-state fixture; regenerated and compared by the liouville tests.
pub const ALIGNED_Y_JSON: &str = include_str!("../fixtures/aligned_y.json");

fn aligned_y_fixture() -> DensityMatrix {
    static CELL: once_cell::sync::Lazy<DensityMatrix> = once_cell::sync::Lazy::new(|| {
        serde_json::from_str(ALIGNED_Y_JSON).expect("aligned_y fixture is a valid density matrix")
    });
    CELL.clone()
}

pub fn zero_matrix(dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_element(dim, dim, Complex64::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fidelity_closed_forms() {
        let up = DensityMatrix::basis_state(3, 2);
        let down = DensityMatrix::basis_state(3, 0);
        assert!((fidelity(&up, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&up, &down).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(3);
        let psi = random_pure(7);
        assert!((fidelity(&mixed, &psi).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((fidelity(&psi, &mixed).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(fidelity(&mixed, &DensityMatrix::maximally_mixed(2)).is_err());
    }

    #[test]
    fn purity_values() {
        assert!((purity(&random_pure(1)) - 1.0).abs() < 1e-12);
        assert!((purity(&DensityMatrix::maximally_mixed(3)) - 1.0 / 3.0).abs() < 1e-15);
        let m = random_mixed(3, 0.6).unwrap();
        assert!((purity(&m) - 0.6).abs() < 1e-12);
        let lim = random_mixed(3, 1.0 / 3.0).unwrap();
        assert_eq!(lim, DensityMatrix::maximally_mixed(3));
        assert!(random_mixed(3, 0.2).is_err());
        assert!(random_mixed(3, 1.2).is_err());
    }

    #[test]
    fn validation_rejects_unphysical() {
        let mut m = DMatrix::identity(3, 3).map(|z: Complex64| z / 3.0);
        m[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_ok());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.2, 0.0), c(-0.2, 0.0), c(0.0, 0.0)]));
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn cholesky_round_trips() {
        let zero = CholeskyParams::zeros(3);
        assert_eq!(to_density(&zero).unwrap(), DensityMatrix::maximally_mixed(3));
        let mut ident = CholeskyParams::zeros(3);
        ident.0[..3].copy_from_slice(&[1.0, 1.0, 1.0]);
        let r = to_density(&ident).unwrap();
        assert!((r.matrix() - DensityMatrix::maximally_mixed(3).matrix()).norm() < 1e-15);

        for seed in 0..20 {
            for rho in [random_pure(seed), random_mixed(seed, 0.6).unwrap()] {
                let back = to_density(&from_density(&rho)).unwrap();
                assert!((back.matrix() - rho.matrix()).norm() < 1e-12, "seed {seed}");
            }
        }
        for idx in 0..3 {
            let b = DensityMatrix::basis_state(3, idx);
            let back = to_density(&from_density(&b)).unwrap();
            assert!((back.matrix() - b.matrix()).norm() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let rho = random_mixed(11, 0.7).unwrap();
        let s = serde_json::to_string(&rho).unwrap();
        let back: DensityMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
        assert!(serde_json::from_str::<DensityMatrix>(r#"{"dim":2,"re":[1,0,0],"im":[0,0,0,0]}"#).is_err());
    }

    #[test]
    fn reference_states() {
        let th = reference_state("thermal").unwrap();
        assert!((th.matrix().trace().re - 1.0).abs() < 1e-15);
        let st = reference_state("stretched").unwrap();
        assert_eq!(st.get(2, 2), c(1.0, 0.0));
        let al = reference_state("aligned_y").unwrap();
        assert!(al.get(2, 0).norm() > 0.1);
        assert!(al.get(1, 0).norm() < 1e-12 && al.get(2, 1).norm() < 1e-12);
        assert!(matches!(reference_state("bogus"), Err(Error::UnknownState(_))));
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u = haar_unitary(&mut rng, 3);
            assert!((&u * u.adjoint() - DMatrix::identity(3, 3)).norm() < 1e-13);
        }
    }
}
