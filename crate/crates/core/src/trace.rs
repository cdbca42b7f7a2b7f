//! Signal time series and their CSV + JSON-sidecar file format.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{check_times, ProbeConfig, TransitionSpec};
use crate::observables::PulseAngles;

/// Provenance of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub spec: TransitionSpec,
    pub probe: ProbeConfig,
    pub pulse: PulseAngles,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub snr: Option<f64>,
    /// `analytic` or `integrator`.
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrace {
    pub times: Vec<f64>,
    pub delta_alpha: Vec<f64>,
    pub delta_epsilon: Option<Vec<f64>>,
    pub delta_absorption: Option<Vec<f64>>,
    pub delta_phase: Option<Vec<f64>>,
    pub meta: TraceMeta,
}

/// Sidecar path: `trace.csv` -> `trace.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

impl SignalTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        check_times(&self.times)?;
        let n = self.times.len();
        let lens = [
            Some(self.delta_alpha.len()),
            self.delta_epsilon.as_ref().map(Vec::len),
            self.delta_absorption.as_ref().map(Vec::len),
            self.delta_phase.as_ref().map(Vec::len),
        ];
        for got in lens.into_iter().flatten() {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        Ok(())
    }

    /// Drops samples earlier than `t_min`.
    pub fn after(&self, t_min: f64) -> SignalTrace {
        let start = self.times.partition_point(|&t| t < t_min);
        let cut = |v: &Vec<f64>| v[start..].to_vec();
        SignalTrace {
            times: cut(&self.times),
            delta_alpha: cut(&self.delta_alpha),
            delta_epsilon: self.delta_epsilon.as_ref().map(cut),
            delta_absorption: self.delta_absorption.as_ref().map(cut),
            delta_phase: self.delta_phase.as_ref().map(cut),
            meta: self.meta.clone(),
        }
    }

    fn columns(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut cols = vec![("t", &self.times), ("delta_alpha", &self.delta_alpha)];
        // Optional columns are written only as a contiguous prefix of the full set.
        let optional = [
            ("delta_epsilon", self.delta_epsilon.as_ref()),
            ("delta_abs", self.delta_absorption.as_ref()),
            ("delta_phase", self.delta_phase.as_ref()),
        ];
        for (name, col) in optional {
            match col {
                Some(c) => cols.push((name, c)),
                None => break,
            }
        }
        cols
    }

    /// Writes `path` (CSV) and its `.meta.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let cols = self.columns();
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(cols.iter().map(|(name, _)| *name))?;
        for i in 0..self.len() {
            w.write_record(cols.iter().map(|(_, c)| format!("{:e}", c[i])))?;
        }
        w.flush()?;
        let meta = BufWriter::new(File::create(meta_path(path))?);
        serde_json::to_writer_pretty(meta, &self.meta)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<SignalTrace> {
        let meta: TraceMeta = serde_json::from_reader(BufReader::new(File::open(meta_path(path))?))?;
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let known = ["t", "delta_alpha", "delta_epsilon", "delta_abs", "delta_phase"];
        if header.len() < 2 || header.len() > known.len() || header.iter().zip(known).any(|(h, k)| h != k) {
            return Err(Error::Unsupported(format!("unexpected trace header {header:?}")));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for rec in r.records() {
            let rec = rec?;
            for (col, field) in cols.iter_mut().zip(rec.iter()) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Unsupported(format!("bad number `{field}` in {}", path.display())))?;
                col.push(v);
            }
        }
        let mut it = cols.into_iter();
        let trace = SignalTrace {
            times: it.next().unwrap_or_default(),
            delta_alpha: it.next().unwrap_or_default(),
            delta_epsilon: it.next(),
            delta_absorption: it.next(),
            delta_phase: it.next(),
            meta,
        };
        trace.validate()?;
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{default_times, ForwardModel};
    use crate::qstate::random_pure;

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = TransitionSpec::default();
        let probe = ProbeConfig::default();
        let model = ForwardModel::new(&spec, &probe).unwrap();
        let pulse = PulseAngles::new(0.3, 0.9).unwrap();
        let trace = model.signal(&random_pure(2), &pulse, &default_times(1.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write(&path).unwrap();
        assert!(meta_path(&path).exists());
        let back = SignalTrace::read(&path).unwrap();
        assert_eq!(back, trace);

        let mut short = trace.clone();
        short.delta_epsilon = None;
        short.delta_absorption = None;
        short.delta_phase = None;
        short.write(&path).unwrap();
        assert_eq!(SignalTrace::read(&path).unwrap(), short);
    }
}
