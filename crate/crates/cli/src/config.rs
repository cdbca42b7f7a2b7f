//! Run configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use qtomo::forward::{ProbeConfig, TransitionSpec};
use qtomo::montecarlo::{PulseMode, StateClass, SweepAxis, SweepConfig};
use qtomo::observables::PulseAngles;
use qtomo::qstate::{DensityMatrix, ReferenceState};
use qtomo::reconstruct::standard_pulses;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub transition: TransitionSpec,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub state: Option<StateSource>,
    #[serde(default)]
    pub pulses: Option<Vec<PulseAngles>>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A reference-state name or `{"file": "rho.json"}`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StateSource {
    Name(String),
    File { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Absent or null: noiseless.
    #[serde(default)]
    pub snr: Option<f64>,
    /// rad
    #[serde(default)]
    pub angle_sigma: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { snr: None, angle_sigma: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_starts")]
    pub random_starts: usize,
    /// Iteration cap per minimizer start.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_starts() -> usize {
    8
}
fn default_max_iter() -> usize {
    2000
}

impl Default for ReconstructSection {
    fn default() -> Self {
        ReconstructSection { weighted: false, random_starts: default_starts(), max_iter: default_max_iter() }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    #[serde(default = "default_classes")]
    pub states: Vec<StateClass>,
    #[serde(default = "default_n_states")]
    pub n_states: usize,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    /// 100 repeats per state instead of the desk-scale default.
    #[serde(default)]
    pub paper_scale: bool,
    /// Fixed pulse list; random pulses when absent.
    #[serde(default)]
    pub pulses: Option<Vec<PulseAngles>>,
    #[serde(default = "default_n_pulses")]
    pub n_pulses: usize,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub angle_sigma: f64,
}

fn default_classes() -> Vec<StateClass> {
    vec![StateClass::Pure, StateClass::Mixed, StateClass::Thermal]
}
fn default_n_states() -> usize {
    10
}
fn default_repeats() -> usize {
    20
}
fn default_n_pulses() -> usize {
    4
}
fn default_snr() -> f64 {
    25.0
}

impl SweepSection {
    pub fn to_sweep_config(&self, seed: u64, random_starts: usize) -> SweepConfig {
        let mut cfg = SweepConfig::new(self.axis, self.grid.clone());
        cfg.states = self.states.clone();
        cfg.n_states = self.n_states;
        cfg.n_repeats = if self.paper_scale { qtomo::montecarlo::PAPER_REPEATS } else { self.n_repeats };
        cfg.pulses = match &self.pulses {
            Some(p) => PulseMode::Fixed(p.clone()),
            None => PulseMode::Random { count: self.n_pulses },
        };
        cfg.seed = seed;
        cfg.snr = self.snr;
        cfg.angle_sigma = self.angle_sigma;
        cfg.minimize.n_random_starts = random_starts;
        cfg
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: {}", pointer(e.path()), e.inner())))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn at(section: &str, e: qtomo::Error) -> CliError {
    match e {
        qtomo::Error::InvalidParameter { name, reason } => CliError::Config(format!("/{section}/{name}: {reason}")),
        other => CliError::Config(format!("/{section}: {other}")),
    }
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        self.transition.validate().map_err(|e| at("transition", e))?;
        self.probe.validate().map_err(|e| at("probe", e))?;
        if let Some(p) = &self.pulses {
            if p.is_empty() {
                return Err(CliError::Config("/pulses: at least one pulse is needed".into()));
            }
        }
        if let Some(snr) = self.noise.snr {
            if !(snr > 0.0) {
                return Err(CliError::Config(format!("/noise/snr: must be positive, got {snr}")));
            }
        }
        if !(self.noise.angle_sigma >= 0.0 && self.noise.angle_sigma.is_finite()) {
            return Err(CliError::Config("/noise/angle_sigma: must be a non-negative number".into()));
        }
        if let Some(StateSource::Name(n)) = &self.state {
            n.parse::<ReferenceState>().map_err(|e| CliError::Config(format!("/state: {e}")))?;
        }
        if let Some(s) = &self.sweep {
            if !(s.snr > 0.0) {
                return Err(CliError::Config(format!("/sweep/snr: must be positive, got {}", s.snr)));
            }
            s.to_sweep_config(0, 0).validate().map_err(|e| match e {
                qtomo::Error::InvalidParameter { reason, .. } => CliError::Config(format!("/sweep: {reason}")),
                other => CliError::Config(format!("/sweep: {other}")),
            })?;
        }
        Ok(())
    }

    pub fn pulses(&self) -> Vec<PulseAngles> {
        self.pulses.clone().unwrap_or_else(standard_pulses)
    }

    pub fn snr(&self) -> f64 {
        self.noise.snr.unwrap_or(f64::INFINITY)
    }

    /// The configured state; `aligned_y` when none is given.
    pub fn state(&self) -> Result<DensityMatrix, CliError> {
        match &self.state {
            None => Ok(ReferenceState::AlignedY.density()),
            Some(StateSource::Name(n)) => {
                n.parse::<ReferenceState>().map(|r| r.density()).map_err(|e| CliError::Config(format!("/state: {e}")))
            }
            Some(StateSource::File { file }) => read_state(file),
        }
    }
}

pub fn read_state(path: &Path) -> Result<DensityMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read state file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("state file {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let cfg = parse("{}").unwrap();
        assert_eq!(cfg.probe, ProbeConfig::default());
        assert_eq!(cfg.pulses().len(), 4);
        assert!(cfg.snr().is_infinite());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = parse(r#"{"probe": {"larmor": 2.0}, "state": "stretched", "noise": {"snr": 25}}"#).unwrap();
        assert_eq!(cfg.probe.larmor, 2.0);
        assert_eq!(cfg.probe.detuning, 1000.0);
        assert_eq!(cfg.snr(), 25.0);
        assert_eq!(cfg.state().unwrap(), ReferenceState::Stretched.density());
    }

    fn message(text: &str) -> String {
        match parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_pointers() {
        assert!(message(r#"{"probe": {"gamma_e": "x"}}"#).starts_with("/probe/gamma_e"));
        assert!(message(r#"{"pulses": [{"phi": 0, "theta": 0}, {"phi": 1}]}"#).starts_with("/pulses/1"));
        assert!(message(r#"{"probe": {"gamma_e": -1}}"#).starts_with("/probe/gamma_e"));
        assert!(message(r#"{"noise": {"snr": 0}}"#).starts_with("/noise/snr"));
        assert!(message(r#"{"sweep": {"axis": "snr", "grid": [3, 1]}}"#).starts_with("/sweep"));
        assert!(message(r#"{"state": "nonsense"}"#).starts_with("/state"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let m = message(r#"{"probe": {"detuning": 1000, "wavelength": 780}}"#);
        assert!(m.starts_with("/probe") && m.contains("wavelength"), "{m}");
        assert!(message(r#"{"colour": 1}"#).contains("colour"));
    }

    #[test]
    fn sweep_section_maps_to_config() {
        let cfg = parse(r#"{"sweep": {"axis": "snr", "grid": [1, 3, 10, 30], "paper_scale": true}}"#).unwrap();
        let sc = cfg.sweep.unwrap().to_sweep_config(5, 8);
        assert_eq!(sc.n_repeats, qtomo::montecarlo::PAPER_REPEATS);
        assert_eq!(sc.states.len(), 3);
        assert_eq!(sc.pulses, PulseMode::Random { count: 4 });
        assert_eq!(sc.seed, 5);
    }
}
