mod common;

use common::{biedenharn_elliott, hi, sixj_with_zero, threej_with_zero, wigner_d_expm, SixjCache};
use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use qtomo::angmom::{rotation_operator, wigner3j, wigner3j_exact, wigner6j, wigner_d, ExactValue, HalfInt};

fn twice_j() -> impl Strategy<Value = i32> {
    0..=6i32
}

/// Valid `(j1, j2, j3, m1, m2)` in doubled units with all j ≤ 3.
fn coupling() -> impl Strategy<Value = (i32, i32, i32, i32, i32)> {
    (twice_j(), twice_j())
        .prop_flat_map(|(a, b)| {
            let j3s: Vec<i32> = ((a - b).abs()..=(a + b).min(6)).step_by(2).collect();
            (Just(a), Just(b), proptest::sample::select(j3s))
        })
        .prop_flat_map(|(a, b, c)| {
            let m1s: Vec<i32> = (-a..=a).step_by(2).collect();
            let m2s: Vec<i32> = (-b..=b).step_by(2).collect();
            (Just(a), Just(b), Just(c), proptest::sample::select(m1s), proptest::sample::select(m2s))
        })
}

fn sign_of(twice_sum: i32) -> i32 {
    if (twice_sum / 2) % 2 == 0 { 1 } else { -1 }
}

fn signed(v: ExactValue, s: i32) -> ExactValue {
    if s < 0 { -v } else { v }
}

proptest! {
    #[test]
    fn threej_column_symmetries((a, b, c, m1, m2) in coupling()) {
        let m3 = -m1 - m2;
        let v = |j: [i32; 3], m: [i32; 3]| wigner3j_exact(hi(j[0]), hi(j[1]), hi(j[2]), hi(m[0]), hi(m[1]), hi(m[2]));
        let base = v([a, b, c], [m1, m2, m3]);
        prop_assert_eq!(&v([b, c, a], [m2, m3, m1]), &base);
        prop_assert_eq!(&v([c, a, b], [m3, m1, m2]), &base);
        let odd = sign_of(a + b + c);
        prop_assert_eq!(&v([b, a, c], [m2, m1, m3]), &signed(base.clone(), odd));
        prop_assert_eq!(&v([a, c, b], [m1, m3, m2]), &signed(base.clone(), odd));
        prop_assert_eq!(&v([a, b, c], [-m1, -m2, -m3]), &signed(base, odd));
    }

    #[test]
    fn threej_with_zero_matches_closed_form(tj in twice_j(), k in 0usize..7) {
        let j = hi(tj);
        let ms: Vec<HalfInt> = j.projections().collect();
        let m = ms[k % ms.len()];
        let got = wigner3j(j, j, HalfInt::ZERO, m, -m, HalfInt::ZERO);
        prop_assert!((got - threej_with_zero(j, m)).abs() < 1e-14);
    }

    #[test]
    fn sixj_with_zero_matches_closed_form(a in twice_j(), b in twice_j(), c in twice_j()) {
        prop_assume!(common::triangle(a, b, c));
        let got = wigner6j(hi(a), hi(b), hi(c), HalfInt::ZERO, hi(c), hi(b));
        prop_assert!((got - sixj_with_zero(hi(a), hi(b), hi(c))).abs() < 1e-14);
    }

    #[test]
    fn d_matrix_matches_exponential(tj in 0..=8i32, theta in -6.3f64..6.3) {
        let j = hi(tj);
        let d = wigner_d(j, theta);
        prop_assert!((&d - wigner_d_expm(j, theta)).amax() < 1e-12);
        let n = j.multiplicity();
        prop_assert!((d.transpose() * &d - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn d_matrix_composition(tj in 0..=8i32, t1 in -3.2f64..3.2, t2 in -3.2f64..3.2) {
        let j = hi(tj);
        let lhs = wigner_d(j, t1) * wigner_d(j, t2);
        prop_assert!((lhs - wigner_d(j, t1 + t2)).amax() < 1e-12);
    }

    #[test]
    fn rotation_operator_is_unitary(tj in 0..=8i32, phi in -7.0f64..7.0, theta in -7.0f64..7.0) {
        let j = hi(tj);
        let u = rotation_operator(j, phi, theta);
        let n = j.multiplicity();
        let err = (&u * u.adjoint() - DMatrix::<Complex64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-13, "{}", err);
    }
}

#[test]
fn threej_orthogonality_exact() {
    for a in 0..=6i32 {
        for b in 0..=6i32 {
            let mut c = (a - b).abs();
            while c <= (a + b).min(6) {
                for m3 in (-c..=c).step_by(2) {
                    let mut total = BigRational::zero();
                    for m1 in (-a..=a).step_by(2) {
                        let m2 = -m1 - m3;
                        if m2.abs() <= b {
                            total += wigner3j_exact(hi(a), hi(b), hi(c), hi(m1), hi(m2), hi(m3)).squared();
                        }
                    }
                    total *= BigRational::from_integer((c + 1).into());
                    assert!(total.is_one(), "j = {a}/2 {b}/2 {c}/2, m3 = {m3}/2: {total}");
                }
                c += 2;
            }
        }
    }
}

#[test]
fn biedenharn_elliott_sampled() {
    // Integer and half-integer grid up to j = 2, strided for speed; the full j ≤ 3 sweep runs in the acceptance suite.
    let mut cache = SixjCache::default();
    let mut checked = 0;
    for a in 0..=4 {
        for b in 0..=4 {
            for c in 0..=4 {
                for d in (0..=4).step_by(2) {
                    for e in 0..=4 {
                        for f in 0..=4 {
                            for p in 0..=4 {
                                for q in 0..=4 {
                                    for r in (0..=4).step_by(2) {
                                        if let Some(ok) = biedenharn_elliott(&mut cache, [a, b, c, d, e, f, p, q, r]) {
                                            assert!(ok, "{:?}", [a, b, c, d, e, f, p, q, r]);
                                            checked += 1;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn known_values() {
    let sq = wigner3j_exact(hi(2), hi(2), hi(0), hi(2), hi(-2), hi(0)).squared();
    assert_eq!(sq, BigRational::new(1.into(), 3.into()));
    assert!((wigner6j(hi(1), hi(1), hi(2), hi(1), hi(1), hi(0)) - 0.5).abs() < 1e-15);
}
