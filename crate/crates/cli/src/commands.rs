use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use qtomo::forward::{ProbeConfig, TransitionSpec};
use qtomo::montecarlo::{log_grid, run_sweep_with_progress, StateClass, SweepAxis, SweepConfig, SweepTable};
use qtomo::qstate::{fidelity, purity, DensityMatrix, ReferenceState};
use qtomo::reconstruct::{
    standard_pulses, MinimizeOptions, PipelineConfig, ReconstructionResult, Reconstructor, SignalBackend,
};
use qtomo::seed::derive_seed;
use qtomo::trace::{meta_path, SignalTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::{svg, CliError, Common};

struct Setup {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

fn setup(common: &Common, default_out: &str) -> Result<Setup, CliError> {
    let cfg = match &common.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let out = common.output.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from(default_out));
    Ok(Setup { cfg, seed, out })
}

fn check_validity(probe: &ProbeConfig, force: bool) -> Result<(), CliError> {
    let v = probe.validity();
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    if !v.is_valid() {
        let msg = v.violations.join("; ");
        if !force {
            return Err(CliError::Validity(msg));
        }
        eprintln!("warning: {msg} (forced)");
    }
    Ok(())
}

fn backend(common: &Common) -> SignalBackend {
    if common.integrator { SignalBackend::Integrator } else { SignalBackend::Analytic }
}

fn minimize_options(cfg: &RunConfig) -> MinimizeOptions {
    let mut m = MinimizeOptions { n_random_starts: cfg.reconstruct.random_starts, ..MinimizeOptions::default() };
    m.bfgs.max_iter = cfg.reconstruct.max_iter;
    m
}

fn pipeline(cfg: &RunConfig, seed: u64, backend: SignalBackend) -> PipelineConfig {
    PipelineConfig {
        pulses: cfg.pulses(),
        snr: cfg.snr(),
        angle_sigma: cfg.noise.angle_sigma,
        seed,
        backend,
        times: None,
        weighted: cfg.reconstruct.weighted,
        minimize: minimize_options(cfg),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_traces(dir: &Path, traces: &[SignalTrace]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (i, tr) in traces.iter().enumerate() {
        tr.write(&dir.join(format!("trace_{i:02}.csv")))?;
    }
    Ok(())
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let s = setup(common, "qtomo-out")?;
    check_validity(&s.cfg.probe, common.force)?;
    let rho = s.cfg.state()?;
    let rec = Reconstructor::new(&s.cfg.transition, &s.cfg.probe)?;
    let traces = rec.acquire(&rho, &pipeline(&s.cfg, s.seed, backend(common)))?;
    write_traces(&s.out, &traces)?;
    write_json(&s.out.join("state.json"), &rho)?;
    println!("wrote {} traces to {}", traces.len(), s.out.display());
    Ok(())
}

fn collect_trace_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv") && meta_path(f).exists())
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Config(format!("no traces with metadata in {}", p.display())));
            }
            paths.extend(found);
        } else {
            paths.push(p.clone());
        }
    }
    Ok(paths)
}

fn report(result: &ReconstructionResult, path: &Path) -> Result<(), CliError> {
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    write_json(path, result)?;
    println!("distance: {:e}", result.distance);
    println!("rank: {}", result.rank);
    if let Some(f) = result.fidelity_vs_truth {
        println!("fidelity: {f:.9}");
    }
    println!("wrote {}", path.display());
    if !result.converged {
        return Err(CliError::NotConverged(path.display().to_string()));
    }
    Ok(())
}

pub fn reconstruct(common: &Common, inputs: &[PathBuf], truth: Option<&Path>) -> Result<(), CliError> {
    let s = setup(common, "qtomo-out")?;
    let truth = truth.map(config::read_state).transpose()?;
    let mut result = if inputs.is_empty() {
        check_validity(&s.cfg.probe, common.force)?;
        let rho = s.cfg.state()?;
        let rec = Reconstructor::new(&s.cfg.transition, &s.cfg.probe)?;
        rec.run(&rho, &pipeline(&s.cfg, s.seed, backend(common)))?
    } else {
        let traces = collect_trace_paths(inputs)?
            .iter()
            .map(|p| SignalTrace::read(p).map_err(|e| CliError::Config(format!("trace {}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        let first = &traces[0].meta;
        if traces.iter().any(|t| t.meta.spec != first.spec || t.meta.probe != first.probe) {
            return Err(CliError::Config("traces disagree on transition or probe parameters".into()));
        }
        check_validity(&first.probe, common.force)?;
        let integrated = common.integrator || traces.iter().any(|t| t.meta.source == "integrator");
        let backend = if integrated { SignalBackend::Integrator } else { SignalBackend::Analytic };
        let rec = Reconstructor::new(&first.spec, &first.probe)?;
        rec.reconstruct_traces(&traces, backend, s.cfg.reconstruct.weighted, &minimize_options(&s.cfg), s.seed)?
    };
    if let Some(t) = &truth {
        result.fidelity_vs_truth = Some(fidelity(t, &result.rho)?);
    }
    fs::create_dir_all(&s.out)?;
    report(&result, &s.out.join("result.json"))
}

fn progress_printer(label: String) -> impl Fn(usize, usize) + Sync {
    let last = AtomicUsize::new(0);
    move |done, total| {
        let decile = done * 10 / total.max(1);
        if last.fetch_max(decile, Ordering::Relaxed) < decile {
            eprintln!("{label}: {done}/{total}");
        }
    }
}

fn write_table(table: &SweepTable, csv_path: &Path, svg_on: bool) -> Result<(), CliError> {
    if let Some(dir) = csv_path.parent() {
        fs::create_dir_all(dir)?;
    }
    table.write_csv(fs::File::create(csv_path)?)?;
    if svg_on {
        fs::write(csv_path.with_extension("svg"), svg::render(table))?;
    }
    Ok(())
}

fn print_table(table: &SweepTable) {
    for r in &table.rows {
        println!(
            "{} = {:<10} {:<10} mean {:.6}  sd {:.2e}  n {}  failures {}",
            table.axis.name(),
            r.axis_value,
            r.state_class.name(),
            r.mean_fidelity(),
            r.var_fidelity().sqrt(),
            r.n_samples,
            r.n_failures
        );
    }
}

pub fn sweep(common: &Common) -> Result<(), CliError> {
    let s = setup(common, "qtomo-out")?;
    let section = s.cfg.sweep.clone().ok_or_else(|| CliError::Config("/sweep: a sweep section is required".into()))?;
    if section.axis == SweepAxis::Kappa2 && !common.integrator {
        return Err(CliError::Config("/sweep/axis: kappa2 sweeps need --integrator".into()));
    }
    check_validity(&s.cfg.probe, common.force)?;
    let mut sc = section.to_sweep_config(s.seed, s.cfg.reconstruct.random_starts);
    sc.minimize.bfgs.max_iter = s.cfg.reconstruct.max_iter;
    sc.backend = backend(common);
    let table = run_sweep_with_progress(&sc, &s.cfg.transition, &s.cfg.probe, &progress_printer(sc.axis.name().into()))?;
    let path = s.out.join(format!("sweep_{}.csv", sc.axis.name()));
    write_table(&table, &path, common.svg)?;
    print_table(&table);
    println!("wrote {}", path.display());
    Ok(())
}

struct Scale {
    runs: usize,
    n_states: usize,
    n_repeats: usize,
    starts: usize,
}

const FIGURE_SNR: f64 = 25.0;

#[derive(Serialize)]
struct RunSummary {
    state_class: StateClass,
    snr: f64,
    n_runs: usize,
    mean_fidelity: f64,
    min_fidelity: f64,
    n_failures: usize,
    seed: u64,
}

fn example(dir: &Path, rec: &Reconstructor, rho: &DensityMatrix, seed: u64, starts: usize) -> Result<ReconstructionResult, CliError> {
    let mut pc = PipelineConfig::new(standard_pulses(), FIGURE_SNR, seed);
    pc.minimize.n_random_starts = starts;
    write_traces(dir, &rec.acquire(rho, &pc)?)?;
    write_json(&dir.join("state.json"), rho)?;
    let result = rec.run(rho, &pc)?;
    write_json(&dir.join("result.json"), &result)?;
    Ok(result)
}

/// Single-state example plus repeated runs over random states of one class.
fn fidelity_runs(dir: &Path, id: u64, class: StateClass, rec: &Reconstructor, seed: u64, scale: &Scale) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    example(dir, rec, &class.draw(derive_seed(seed, &[id, 0])), derive_seed(seed, &[id, 1]), scale.starts)?;
    let runs: Vec<(f64, f64, bool, usize)> = (0..scale.runs)
        .into_par_iter()
        .map(|k| {
            let rho = class.draw(derive_seed(seed, &[id, 2, k as u64]));
            let mut pc = PipelineConfig::new(standard_pulses(), FIGURE_SNR, derive_seed(seed, &[id, 3, k as u64]));
            pc.minimize.n_random_starts = scale.starts;
            match rec.run(&rho, &pc) {
                Ok(r) => (r.fidelity_vs_truth.unwrap_or(f64::NAN), purity(&rho), r.converged, r.iterations),
                Err(_) => (f64::NAN, purity(&rho), false, 0),
            }
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record(["run", "fidelity", "true_purity", "converged", "iterations"])?;
    for (k, (f, p, c, it)) in runs.iter().enumerate() {
        w.write_record([k.to_string(), format!("{f:e}"), format!("{p:e}"), c.to_string(), it.to_string()])?;
    }
    w.flush()?;
    let ok: Vec<f64> = runs.iter().map(|r| r.0).filter(|f| f.is_finite()).collect();
    let summary = RunSummary {
        state_class: class,
        snr: FIGURE_SNR,
        n_runs: runs.len(),
        mean_fidelity: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
        min_fidelity: ok.iter().cloned().fold(f64::INFINITY, f64::min),
        n_failures: runs.iter().filter(|r| !r.0.is_finite() || !r.2).count(),
        seed,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{}: {} mean fidelity {:.6} over {} runs", dir.display(), class.name(), summary.mean_fidelity, summary.n_runs);
    Ok(())
}

fn figure_sweep(
    path: &Path,
    mut cfg: SweepConfig,
    scale: &Scale,
    spec: &TransitionSpec,
    probe: &ProbeConfig,
    svg_on: bool,
) -> Result<(), CliError> {
    cfg.n_states = scale.n_states;
    cfg.n_repeats = scale.n_repeats;
    cfg.minimize.n_random_starts = scale.starts;
    cfg.snr = FIGURE_SNR;
    let label = path.display().to_string();
    let table = run_sweep_with_progress(&cfg, spec, probe, &progress_printer(label))?;
    write_table(&table, path, svg_on)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn paper_figures(common: &Common, quick: bool) -> Result<(), CliError> {
    let s = setup(common, "paper-figures")?;
    let (spec, probe) = (&s.cfg.transition, &s.cfg.probe);
    check_validity(probe, common.force)?;
    let scale = if quick {
        Scale { runs: 30, n_states: 5, n_repeats: 6, starts: 2 }
    } else {
        Scale { runs: 100, n_states: 10, n_repeats: 20, starts: 8 }
    };
    let rec = Reconstructor::new(spec, probe)?;
    let seed = s.seed;

    fidelity_runs(&s.out.join("fig1"), 1, StateClass::Pure, &rec, seed, &scale)?;
    fidelity_runs(&s.out.join("fig2"), 2, StateClass::Mixed, &rec, seed, &scale)?;

    let fig3 = s.out.join("fig3");
    let mut snr = SweepConfig::new(SweepAxis::Snr, vec![1.0, 3.0, 10.0, 30.0, 100.0]);
    snr.seed = derive_seed(seed, &[3, 0]);
    figure_sweep(&fig3.join("snr.csv"), snr, &scale, spec, probe, common.svg)?;
    let mut ang = SweepConfig::new(SweepAxis::AngleSigma, vec![0.0, 0.003, 0.01, 0.03, 0.1, 0.3]);
    ang.seed = derive_seed(seed, &[3, 1]);
    figure_sweep(&fig3.join("angle_sigma.csv"), ang, &scale, spec, probe, common.svg)?;

    let fig4 = s.out.join("fig4");
    let mut nm = SweepConfig::new(SweepAxis::NMeasurements, (1..=8).map(f64::from).collect());
    nm.seed = derive_seed(seed, &[4, 0]);
    figure_sweep(&fig4.join("n_measurements.csv"), nm, &scale, spec, probe, common.svg)?;
    let mut k2 = SweepConfig::new(SweepAxis::Kappa2, log_grid(1e-4, 1.0, 5));
    k2.seed = derive_seed(seed, &[4, 1]);
    figure_sweep(&fig4.join("kappa2.csv"), k2, &scale, spec, probe, common.svg)?;

    let gallery = s.out.join("appendixB");
    fs::create_dir_all(&gallery)?;
    let mut w = csv::Writer::from_path(gallery.join("summary.csv"))?;
    w.write_record(["state", "fidelity", "converged"])?;
    for (i, (name, state)) in
        [("thermal", ReferenceState::Thermal), ("aligned", ReferenceState::AlignedY), ("stretch", ReferenceState::Stretched)]
            .into_iter()
            .enumerate()
    {
        let r = example(&gallery.join(name), &rec, &state.density(), derive_seed(seed, &[5, i as u64]), scale.starts)?;
        let f = r.fidelity_vs_truth.unwrap_or(f64::NAN);
        w.write_record([name.to_string(), format!("{f:e}"), r.converged.to_string()])?;
        println!("{}: fidelity {f:.6}", gallery.join(name).display());
    }
    w.flush()?;
    Ok(())
}
