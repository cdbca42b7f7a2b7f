//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

mod common;

use std::time::Instant;

use common::{biedenharn_elliott, hi, triangle, voigt_quadrature, SixjCache};
use nalgebra::DMatrix;
use num_rational::BigRational;
use qtomo::angmom::{wigner3j_exact, wigner_d, ExactSum, ExactValue};
use qtomo::forward::{default_times, ForwardModel, ProbeConfig, TransitionSpec};
use qtomo::liouville::integrator_signal;
use qtomo::lineshape::voigt;
use qtomo::measure::{fit_envelope_with, FitOptions};
use qtomo::montecarlo::{log_grid, run_sweep, StateClass, SweepAxis, SweepConfig, SweepRow, SweepTable};
use qtomo::observables::PulseAngles;
use qtomo::qstate::{random_mixed, random_pure, ReferenceState};
use qtomo::reconstruct::{standard_pulses, MinimizeOptions, PipelineConfig, Reconstructor};
use qtomo::seed::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_250_301;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rec() -> Reconstructor {
    Reconstructor::new(&TransitionSpec::default(), &ProbeConfig::default()).unwrap()
}

fn random_pulses(rng: &mut ChaCha8Rng, n: usize) -> Vec<PulseAngles> {
    let pi = std::f64::consts::PI;
    (0..n).map(|_| PulseAngles::new(rng.random_range(0.0..pi), rng.random_range(0.0..pi)).unwrap()).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn combined_se(a: &SweepRow, b: &SweepRow) -> f64 {
    (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt()
}

fn sweep(axis: SweepAxis, grid: Vec<f64>, states: Vec<StateClass>, seed: u64) -> SweepTable {
    sweep_scaled(axis, grid, states, seed, false)
}

fn sweep_scaled(axis: SweepAxis, grid: Vec<f64>, states: Vec<StateClass>, seed: u64, full: bool) -> SweepTable {
    let mut cfg = SweepConfig::new(axis, grid);
    cfg.states = states;
    cfg.seed = seed;
    if full {
        cfg = cfg.paper_scale();
    }
    run_sweep(&cfg, &TransitionSpec::default(), &ProbeConfig::default()).unwrap()
}

fn row(t: &SweepTable, v: f64, c: StateClass) -> &SweepRow {
    t.row(v, c).unwrap_or_else(|| panic!("missing row {v} {c}"))
}

const CLASSES: [StateClass; 3] = [StateClass::Pure, StateClass::Mixed, StateClass::Thermal];

fn c1_round_trip() -> Outcome {
    let r = rec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[1]));
    let mut worst = 1.0f64;
    for k in 0..50u64 {
        let rho = if k % 2 == 0 { random_pure(derive_seed(SEED, &[1, k])) } else { random_mixed(derive_seed(SEED, &[1, k]), 0.6).unwrap() };
        let cfg = PipelineConfig::new(random_pulses(&mut rng, 3), f64::INFINITY, k);
        let res = r.run(&rho, &cfg).unwrap();
        worst = worst.min(res.fidelity_vs_truth.unwrap());
    }
    check(worst > 1.0 - 1e-6, format!("50 states, 3 random pulses, min fidelity 1 - {:.2e}", 1.0 - worst))
}

fn standard_runs(mixed: bool, tag: u64) -> Vec<f64> {
    let r = rec();
    (0..100u64)
        .map(|k| {
            let s = derive_seed(SEED, &[tag, k]);
            let rho = if mixed { random_mixed(s, 0.6).unwrap() } else { random_pure(s) };
            r.run(&rho, &PipelineConfig::new(standard_pulses(), 25.0, s)).unwrap().fidelity_vs_truth.unwrap()
        })
        .collect()
}

fn c2_pure() -> Outcome {
    let f = standard_runs(false, 2);
    let m = mean(&f);
    check(m >= 0.99, format!("pure, SNR 25, 100 runs: mean fidelity {m:.5}"))
}

fn c3_mixed() -> Outcome {
    let f = standard_runs(true, 3);
    let m = mean(&f);
    check(m >= 0.99, format!("purity 0.6, SNR 25, 100 runs: mean fidelity {m:.5}"))
}

fn c4_snr() -> Outcome {
    let t = sweep(SweepAxis::Snr, vec![1.0, 10.0], CLASSES.to_vec(), derive_seed(SEED, &[4]));
    let mut ok = true;
    let mut parts = Vec::new();
    for c in CLASSES {
        let (lo, hi_) = (row(&t, 1.0, c).sample_mean(), row(&t, 10.0, c).sample_mean());
        ok &= lo > 0.9 && hi_ > 0.97;
        parts.push(format!("{c}: {lo:.4} @1, {hi_:.4} @10"));
    }
    check(ok, format!("200 samples/point; {}", parts.join("; ")))
}

fn c5_angles() -> Outcome {
    let grid = vec![0.0, 0.003, 0.01, 0.03, 0.1, 0.3];
    // The pure-state drop at 30 mrad sits near 0.008 with a 200-sample spread of about 0.001, so this criterion runs at 1000 samples per point.
    let t = sweep_scaled(SweepAxis::AngleSigma, grid.clone(), CLASSES.to_vec(), derive_seed(SEED, &[5]), true);
    let mut ok = true;
    let mut parts = vec![format!("{} samples/point", row(&t, 0.0, StateClass::Pure).n_samples)];
    for c in [StateClass::Pure, StateClass::Mixed] {
        let drop = row(&t, 0.0, c).sample_mean() - row(&t, 0.03, c).sample_mean();
        ok &= drop < 0.01;
        parts.push(format!("{c} drop {drop:.2e}"));
    }
    let th: Vec<f64> = grid.iter().map(|&v| row(&t, v, StateClass::Thermal).sample_mean()).collect();
    let spread = th.iter().cloned().fold(f64::MIN, f64::max) - th.iter().cloned().fold(f64::MAX, f64::min);
    ok &= spread < 0.005;
    parts.push(format!("thermal spread {spread:.2e} over sigma up to 0.3"));
    check(ok, parts.join("; "))
}

fn c6_measurements() -> Outcome {
    let grid: Vec<f64> = (1..=8).map(f64::from).collect();
    let t = sweep(SweepAxis::NMeasurements, grid.clone(), CLASSES.to_vec(), derive_seed(SEED, &[6]));
    let (r2, r4) = (row(&t, 2.0, StateClass::Pure), row(&t, 4.0, StateClass::Pure));
    let gap = r4.sample_mean() - r2.sample_mean();
    let z = gap / combined_se(r2, r4);
    let mut ok = z > 3.0;
    let mut worst = f64::INFINITY;
    for c in CLASSES {
        for w in grid.windows(2) {
            let (a, b) = (row(&t, w[0], c), row(&t, w[1], c));
            let se = combined_se(a, b);
            let slack = b.sample_mean() - a.sample_mean() + 3.0 * se;
            ok &= slack >= 0.0;
            if se > 0.0 {
                worst = worst.min((b.sample_mean() - a.sample_mean()) / se);
            }
        }
    }
    check(ok, format!("pure F(4) - F(2) = {gap:.4} ({z:.1} sigma); worst step {worst:.2} sigma"))
}

fn c7_kappa2() -> Outcome {
    let grid = log_grid(1e-4, 1.0, 5);
    let t = sweep(SweepAxis::Kappa2, grid.clone(), CLASSES.to_vec(), derive_seed(SEED, &[7]));
    let mut ok = true;
    let mut parts = Vec::new();
    for c in CLASSES {
        let means: Vec<f64> = grid.iter().map(|&v| row(&t, v, c).sample_mean()).collect();
        for w in grid.windows(2) {
            let (a, b) = (row(&t, w[0], c), row(&t, w[1], c));
            ok &= b.sample_mean() <= a.sample_mean() + 3.0 * combined_se(a, b);
        }
        parts.push(format!("{c} {:.5}->{:.5}", means[0], means[means.len() - 1]));
    }
    check(ok, format!("integrator, 5 points 1e-4..1; {}", parts.join("; ")))
}

fn c8_gallery() -> Outcome {
    let r = rec();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, s) in ReferenceState::ALL.iter().enumerate() {
        let f: Vec<f64> = (0..20u64)
            .map(|k| {
                let cfg = PipelineConfig::new(standard_pulses(), 25.0, derive_seed(SEED, &[8, i as u64, k]));
                r.run(&s.density(), &cfg).unwrap().fidelity_vs_truth.unwrap()
            })
            .collect();
        let m = mean(&f);
        ok &= m >= 0.99;
        parts.push(format!("{s} {m:.5}"));
    }
    check(ok, format!("SNR 25, 20 seeds each; {}", parts.join("; ")))
}

fn c9_integrator() -> Outcome {
    let spec = TransitionSpec::default();
    let probe = ProbeConfig::default().with_kappa2(0.02);
    let model = ForwardModel::new(&spec, &probe).unwrap();
    let times = default_times(probe.larmor);
    let opts = FitOptions { t_min: 10.0 / probe.gamma_e, refine: false };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[9]));
    let mut states: Vec<_> = ReferenceState::ALL.iter().map(|s| s.density()).collect();
    states.extend((0..4).map(|k| random_pure(derive_seed(SEED, &[9, k]))));
    states.extend((0..4).map(|k| random_mixed(derive_seed(SEED, &[9, 10 + k]), 0.6).unwrap()));
    let mut worst = 0.0f64;
    let mut n = 0;
    for rho in &states {
        for pulse in standard_pulses().into_iter().chain(random_pulses(&mut rng, 2)) {
            let env = model.envelope(rho, &pulse).unwrap();
            let scale = env.norm();
            if scale < 1e-12 * model.reference_amplitude().unwrap() {
                continue;
            }
            let fit = fit_envelope_with(&integrator_signal(rho, &pulse, &spec, &probe, &times).unwrap(), probe.larmor, probe.gamma_g, &opts).unwrap();
            for (x, y) in fit.params().iter().zip([env.a, env.b, env.c]) {
                worst = worst.max((x - y).abs() / scale);
            }
            n += 1;
        }
    }
    check(worst < 0.02, format!("kappa2 0.02, {n} state/pulse pairs: max |fit - analytic|/|analytic| = {worst:.2e}"))
}

fn one() -> BigRational {
    BigRational::from_integer(1.into())
}

fn weight(twice: i32) -> ExactValue {
    ExactValue::rational(BigRational::from_integer(((twice + 1) as i64).into()))
}

fn threej(j: [i32; 3], m: [i32; 3]) -> ExactValue {
    wigner3j_exact(hi(j[0]), hi(j[1]), hi(j[2]), hi(m[0]), hi(m[1]), hi(m[2]))
}

fn neg_if(v: ExactValue, odd: bool) -> ExactValue {
    if odd {
        -v
    } else {
        v
    }
}

fn c10_angular() -> Outcome {
    let t0 = Instant::now();
    let js = 0..=6i32;
    let proj = |j: i32| (-j..=j).step_by(2);
    let mut counts = [0usize; 6];
    let mut fail = Vec::new();

    // 3j: orthogonality in (m1, m2) for fixed j3, m3 and in (j3, m3) for fixed m1, m2; column symmetries.
    for a in js.clone() {
        for b in js.clone() {
            let j3s: Vec<i32> = ((a - b).abs()..=a + b).step_by(2).filter(|&c| c <= 6).collect();
            for &c in &j3s {
                for &c2 in &j3s {
                    for m3 in proj(c.min(c2)) {
                        let mut s = ExactSum::new();
                        for m1 in proj(a) {
                            let m2 = -m1 - m3;
                            if m2.abs() <= b {
                                s.add_term(&(&(&threej([a, b, c], [m1, m2, m3]) * &threej([a, b, c2], [m1, m2, m3])) * &weight(c)));
                            }
                        }
                        if c == c2 {
                            s.add_term(&ExactValue::rational(-one()));
                        }
                        counts[0] += 1;
                        if !s.is_zero() {
                            fail.push(format!("3j orthogonality {a} {b} {c} {c2} {m3}"));
                        }
                    }
                }
            }
            for m1 in proj(a) {
                for m2 in proj(b) {
                    for m1p in proj(a) {
                        let m2p = m1 + m2 - m1p;
                        if m2p.abs() > b {
                            continue;
                        }
                        let mut s = ExactSum::new();
                        // Complete sum over j3 uses every allowed value, not only j3 ≤ 3.
                        for c in ((a - b).abs()..=a + b).step_by(2) {
                            let m3 = -m1 - m2;
                            if m3.abs() <= c {
                                s.add_term(&(&(&threej([a, b, c], [m1, m2, m3]) * &threej([a, b, c], [m1p, m2p, m3])) * &weight(c)));
                            }
                        }
                        if m1 == m1p {
                            s.add_term(&ExactValue::rational(-one()));
                        }
                        counts[1] += 1;
                        if !s.is_zero() {
                            fail.push(format!("3j completeness {a} {b} {m1} {m2} {m1p}"));
                        }
                    }
                }
            }
            for &c in &j3s {
                let odd = ((a + b + c) / 2) % 2 != 0;
                for m1 in proj(a) {
                    for m2 in proj(b) {
                        let m3 = -m1 - m2;
                        if m3.abs() > c {
                            continue;
                        }
                        let base = threej([a, b, c], [m1, m2, m3]);
                        let ok = threej([b, c, a], [m2, m3, m1]) == base
                            && threej([c, a, b], [m3, m1, m2]) == base
                            && threej([b, a, c], [m2, m1, m3]) == neg_if(base.clone(), odd)
                            && threej([a, c, b], [m1, m3, m2]) == neg_if(base.clone(), odd)
                            && threej([c, b, a], [m3, m2, m1]) == neg_if(base.clone(), odd)
                            && threej([a, b, c], [-m1, -m2, -m3]) == neg_if(base, odd);
                        counts[2] += 1;
                        if !ok {
                            fail.push(format!("3j symmetry {a} {b} {c} {m1} {m2}"));
                        }
                    }
                }
            }
        }
    }

    // 6j: orthogonality and tetrahedral symmetries.
    let mut cache = SixjCache::default();
    for a in js.clone() {
        for b in js.clone() {
            for c in js.clone() {
                for d in js.clone() {
                    let es: Vec<i32> = js.clone().filter(|&e| triangle(a, d, e) && triangle(b, c, e)).collect();
                    for &e in &es {
                        for &e2 in &es {
                            let mut s = ExactSum::new();
                            let lo = (a - b).abs().max((c - d).abs());
                            let mut x = lo;
                            while x <= (a + b).min(c + d) {
                                if triangle(a, b, x) && triangle(c, d, x) {
                                    let p = &cache.get([a, b, x, c, d, e]) * &cache.get([a, b, x, c, d, e2]);
                                    s.add_term(&(&(&p * &weight(x)) * &weight(e)));
                                }
                                x += 2;
                            }
                            if e == e2 {
                                s.add_term(&ExactValue::rational(-one()));
                            }
                            counts[3] += 1;
                            if !s.is_zero() {
                                fail.push(format!("6j orthogonality {a} {b} {c} {d} {e} {e2}"));
                            }
                        }
                    }
                    for f in js.clone() {
                        for e in js.clone() {
                            let v = cache.get([a, b, c, d, e, f]);
                            let ok = cache.get([b, c, a, e, f, d]) == v
                                && cache.get([c, a, b, f, d, e]) == v
                                && cache.get([b, a, c, e, d, f]) == v
                                && cache.get([d, e, c, a, b, f]) == v
                                && cache.get([a, e, f, d, b, c]) == v;
                            counts[4] += 1;
                            if !ok {
                                fail.push(format!("6j symmetry {a} {b} {c} {d} {e} {f}"));
                            }
                        }
                    }
                }
            }
        }
    }

    // Biedenharn–Elliott over all arguments j ≤ 3 admitted by the six triangles shared by both sides.
    for a in js.clone() {
        for d in js.clone() {
            for p in js.clone().filter(|&p| triangle(a, d, p)) {
                for b in js.clone() {
                    for c in js.clone().filter(|&c| triangle(c, b, p)) {
                        for e in js.clone() {
                            for q in js.clone().filter(|&q| triangle(e, d, q)) {
                                for f in js.clone().filter(|&f| triangle(c, f, q)) {
                                    for r in js.clone().filter(|&r| triangle(e, a, r) && triangle(b, f, r)) {
                                        if let Some(ok) = biedenharn_elliott(&mut cache, [a, b, c, d, e, f, p, q, r]) {
                                            counts[5] += 1;
                                            if !ok {
                                                fail.push(format!("Biedenharn-Elliott {:?}", [a, b, c, d, e, f, p, q, r]));
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
    }

    // d(θ₁)d(θ₂) = d(θ₁+θ₂).
    let mut d_err = 0.0f64;
    let thetas: Vec<f64> = (-12..=12).map(|k| 0.27 * k as f64).collect();
    for tj in js.clone() {
        for &t1 in &thetas {
            for &t2 in &thetas {
                let lhs: DMatrix<f64> = wigner_d(hi(tj), t1) * wigner_d(hi(tj), t2);
                d_err = d_err.max((lhs - wigner_d(hi(tj), t1 + t2)).amax());
            }
        }
    }
    let detail = format!(
        "exact checks: 3j orth {} compl {} sym {}, 6j orth {} sym {}, B-E {}; d composition err {:.1e}; {:.1}s",
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        counts[4],
        counts[5],
        d_err,
        t0.elapsed().as_secs_f64()
    );
    if let Some(first) = fail.first() {
        return Err(format!("{detail}; {} failures, first: {first}", fail.len()));
    }
    check(d_err < 1e-12, detail)
}

fn c11_voigt() -> Outcome {
    let mut worst = 0.0f64;
    for ratio in [0.1, 1.0, 10.0] {
        let gd = ratio;
        for k in 0..=400 {
            let delta = -10.0 * gd + 20.0 * gd * k as f64 / 400.0;
            worst = worst.max((voigt(delta, 1.0, gd) - voigt_quadrature(delta, 1.0, gd)).norm());
        }
    }
    check(worst < 1e-8, format!("Gamma = 1, Gamma_D in {{0.1, 1, 10}}, 401 detunings each: max abs error {worst:.2e}"))
}

fn c12_physical() -> Outcome {
    let r = rec();
    let n = 10_000u64;
    let mut worst = (0.0f64, 0.0f64, f64::INFINITY);
    let mut bad = 0;
    for k in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[12, k]));
        let class = [StateClass::Pure, StateClass::Mixed, StateClass::Thermal, StateClass::AlignedY, StateClass::Stretched][rng.random_range(0..5)];
        let rho = class.draw(rng.random());
        let count = rng.random_range(1..=6);
        let snr = 10f64.powf(rng.random_range(-2.0..0.5));
        let mut cfg = PipelineConfig::new(random_pulses(&mut rng, count), snr, rng.random());
        cfg.angle_sigma = rng.random_range(0.0..0.3);
        cfg.minimize = MinimizeOptions { n_random_starts: 1, ..MinimizeOptions::default() };
        let res = r.run(&rho, &cfg).unwrap();
        let ph = res.rho.physicality();
        worst = (worst.0.max(ph.hermiticity_error), worst.1.max(ph.trace_error), worst.2.min(ph.min_eigenvalue));
        if !(ph.hermiticity_error <= 1e-12 && ph.trace_error <= 1e-12 && ph.min_eigenvalue > -1e-10) {
            bad += 1;
        }
    }
    check(
        bad == 0,
        format!(
            "{n} runs, SNR 0.01..3, 1-6 random pulses, angle noise up to 0.3 rad: {bad} unphysical; max herm {:.1e}, max trace {:.1e}, min eig {:.1e}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 12] = [
        ("C1", "noiseless round trip", c1_round_trip),
        ("C2", "pure states at SNR 25", c2_pure),
        ("C3", "mixed states at SNR 25", c3_mixed),
        ("C4", "SNR sweep", c4_snr),
        ("C5", "pulse angle noise", c5_angles),
        ("C6", "number of measurements", c6_measurements),
        ("C7", "probe saturation", c7_kappa2),
        ("C8", "reference states", c8_gallery),
        ("C9", "integrator vs analytic", c9_integrator),
        ("C10", "angular momentum algebra", c10_angular),
        ("C11", "Voigt profile", c11_voigt),
        ("C12", "physicality", c12_physical),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS {id} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {id} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
