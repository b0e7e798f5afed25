//! Run reports: one JSON document per run with the full configuration, plus
//! a flat CSV of the per-record metrics for plotting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use privdist::net::ObservableTrace;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// One row of a report: a party, a party size or a document of interest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub metrics: BTreeMap<String, f64>,
}

impl Record {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), metrics: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub global: BTreeMap<String, f64>,
    /// Verdict for experiments with a built-in check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    /// SHA-256 over every observable trace of the run, hex encoded.
    pub transcript_digest: String,
    pub elapsed_secs: f64,
}

impl Report {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: experiment.to_string(),
            config: config.clone(),
            records: Vec::new(),
            global: BTreeMap::new(),
            pass: None,
            transcript_digest: String::new(),
            elapsed_secs: 0.0,
        }
    }

    pub fn global(&self, key: &str) -> Option<f64> {
        self.global.get(key).copied()
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.global.insert(key.to_string(), value);
    }

    /// Equality of everything a rerun must reproduce; ignores timing.
    pub fn same_results(&self, other: &Report) -> bool {
        self.experiment == other.experiment
            && self.config == other.config
            && self.records == other.records
            && self.global == other.global
            && self.pass == other.pass
            && self.transcript_digest == other.transcript_digest
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("report: {e}")))
    }

    /// CSV with a `name` column followed by the union of metric keys.
    pub fn to_csv(&self) -> String {
        let keys: BTreeSet<&String> = self.records.iter().flat_map(|r| r.metrics.keys()).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("name").chain(keys.iter().map(|k| k.as_str())).collect();
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let row: Vec<String> = std::iter::once(r.name.clone())
                .chain(keys.iter().map(|k| r.metrics.get(*k).map(|v| v.to_string()).unwrap_or_default()))
                .collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Writes `<experiment>-<seed>.json` and `.csv` into `dir`, returning
    /// the JSON path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let stem = format!("{}-{}", self.experiment, self.config.seed);
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()).map_err(|e| HarnessError::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| HarnessError::io(&csv, e))?;
        Ok(json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Incremental SHA-256 over observable traces.
#[derive(Clone, Default)]
pub struct TranscriptDigest(Sha256);

impl TranscriptDigest {
    pub fn add(&mut self, traces: &[ObservableTrace]) {
        for t in traces {
            let bytes = t.to_bytes();
            self.0.update((bytes.len() as u64).to_le_bytes());
            self.0.update(&bytes);
        }
    }

    pub fn hex(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
