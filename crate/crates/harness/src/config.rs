//! Experiment configuration: one validated, serializable struct shared by
//! every subcommand and embedded verbatim in each report.

use std::path::{Path, PathBuf};

use privdist::ksdp::{DbSampler, RandomRows};
use privdist::nmf::NmfParams;
use privdist::nss::{NssBackend, NssMode};
use privdist::secsum::{FixedCodec, SumPath};
use privdist::svd::SvdConfig;
use serde::{Deserialize, Serialize};

use crate::data::PartitionMode;
use crate::error::{HarnessError, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PRIVDIST_OUT_DIR";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    Nmf,
    Svd,
    Pca,
}

/// How secure sums are carried out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumKind {
    /// Plain float summation, for exactness experiments.
    #[default]
    Float,
    /// Additive sharing over the fixed-point ring.
    Fixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    #[default]
    Csv,
    MatrixMarket,
}

/// Where the data matrix comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum DataSource {
    /// A seeded synthetic corpus: `rank` shared latent factors plus noise.
    Synthetic { rows: usize, cols: usize, rank: usize, noise: f64 },
    /// i.i.d. `U[0,1]` entries.
    Uniform { rows: usize, cols: usize },
    /// A file on disk, optionally tf-idf transformed with per-party IDF.
    File {
        path: PathBuf,
        #[serde(default)]
        format: MatrixFormat,
        #[serde(default)]
        tfidf: bool,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { rows: 300, cols: 40, rank: 5, noise: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularization {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self { alpha: 0.0, beta: 0.0, gamma: 0.0, delta: 0.0 }
    }
}

/// The mechanism whose leakage `privacy` measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    /// The configured algorithm run distributed over the database rows.
    #[default]
    Algorithm,
    /// Secure sum of the database rows.
    Secsum,
    /// Reveals whether the document is present. A calibration fixture.
    Leaky,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrivacyConfig {
    pub mechanism: MechanismKind,
    /// Number of documents of interest, drawn at random from the database.
    pub documents: usize,
    /// Mechanism runs per side per document.
    pub samples: usize,
    pub sampler: DbSampler,
    /// Rows of the adversary's own data used to estimate singular values.
    pub adversary_rows: usize,
    pub threads: usize,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            mechanism: MechanismKind::Algorithm,
            documents: 20,
            samples: 200,
            sampler: DbSampler::Synthetic { n_sub: 200, rows: RandomRows::Uniform },
            adversary_rows: 200,
            threads: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self { epsilon: 0.25, delta: 0.01, sensitivity: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpliftConfig {
    /// Party sizes to compare, as fractions of the corpus.
    pub fractions: Vec<f64>,
    /// Fraction of rows held out for evaluation.
    pub holdout: f64,
}

impl Default for UpliftConfig {
    fn default() -> Self {
        Self { fractions: vec![0.03, 0.1, 0.3], holdout: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Vector length.
    pub dim: usize,
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { dim: 1000, reps: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    /// Number of parties `M`.
    pub parties: usize,
    /// Rows per party as a fraction of the corpus.
    pub fraction: f64,
    pub partition: PartitionMode,
    pub k: usize,
    /// NMF sweeps or power iterations.
    pub iters: usize,
    pub regularization: Regularization,
    pub project_simplex: bool,
    pub sum_path: SumKind,
    pub backend: NssMode,
    pub frac_bits: u32,
    /// Magnitude bound of the fixed-point secure sums.
    pub fixed_bound: f64,
    pub seed: u64,
    /// Acceptance threshold for `equivalence`.
    pub tolerance: f64,
    pub data: DataSource,
    /// Output directory. Falls back to `$PRIVDIST_OUT_DIR`, then
    /// `privdist-out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub privacy: PrivacyConfig,
    pub dp: DpConfig,
    pub uplift: UpliftConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Nmf,
            parties: 3,
            fraction: 1.0 / 3.0,
            partition: PartitionMode::Disjoint,
            k: 5,
            iters: 50,
            regularization: Regularization::default(),
            project_simplex: false,
            sum_path: SumKind::Float,
            backend: NssMode::Float,
            frac_bits: 31,
            fixed_bound: 1e6,
            seed: 1,
            tolerance: 1e-6,
            data: DataSource::default(),
            output: None,
            privacy: PrivacyConfig::default(),
            dp: DpConfig::default(),
            uplift: UpliftConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(HarnessError::Config(msg()))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    check(v > 0.0 && v <= 1.0, || format!("{name} must lie in (0, 1], got {v}"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.parties >= 1, || "need at least one party".into())?;
        check(self.parties <= u16::MAX as usize, || format!("{} parties is too many", self.parties))?;
        unit_interval("fraction", self.fraction)?;
        check(self.k >= 1, || "k must be at least 1".into())?;
        check(self.iters >= 1, || "iters must be at least 1".into())?;
        let r = &self.regularization;
        for (name, v) in [("alpha", r.alpha), ("beta", r.beta), ("gamma", r.gamma), ("delta", r.delta)] {
            check(v >= 0.0 && v.is_finite(), || format!("{name} must be a nonnegative number, got {v}"))?;
        }
        check((1..=62).contains(&self.frac_bits), || format!("frac_bits must lie in 1..=62, got {}", self.frac_bits))?;
        check(self.fixed_bound > 0.0 && self.fixed_bound.is_finite(), || "fixed_bound must be positive".into())?;
        check(self.tolerance >= 0.0, || "tolerance must be nonnegative".into())?;
        match &self.data {
            DataSource::Synthetic { rows, cols, rank, noise } => {
                check(*rows >= 1 && *cols >= 1, || "synthetic data needs rows and cols".into())?;
                check(*rank >= 1 && *rank <= *cols, || format!("synthetic rank {rank} must lie in 1..={cols}"))?;
                check(*noise >= 0.0, || "synthetic noise must be nonnegative".into())?;
            }
            DataSource::Uniform { rows, cols } => {
                check(*rows >= 1 && *cols >= 1, || "uniform data needs rows and cols".into())?;
            }
            DataSource::File { path, .. } => {
                check(!path.as_os_str().is_empty(), || "data path is empty".into())?;
            }
        }
        let p = &self.privacy;
        check(p.documents >= 1, || "privacy.documents must be at least 1".into())?;
        check(p.samples >= privdist::ksdp::MIN_SAMPLES, || {
            format!("privacy.samples must be at least {}", privdist::ksdp::MIN_SAMPLES)
        })?;
        check(p.threads >= 1, || "privacy.threads must be at least 1".into())?;
        check(self.dp.epsilon > 0.0 && self.dp.sensitivity > 0.0, || "dp epsilon and sensitivity must be positive".into())?;
        check(self.dp.delta > 0.0 && self.dp.delta < 1.0, || "dp delta must lie in (0, 1)".into())?;
        check(!self.uplift.fractions.is_empty(), || "uplift.fractions is empty".into())?;
        for &f in &self.uplift.fractions {
            unit_interval("uplift fraction", f)?;
        }
        check(self.uplift.holdout > 0.0 && self.uplift.holdout < 1.0, || "uplift.holdout must lie in (0, 1)".into())?;
        check(self.bench.dim >= 1 && self.bench.reps >= 1, || "bench dim and reps must be at least 1".into())?;
        self.nmf_params().validate()?;
        Ok(())
    }

    pub fn nmf_params(&self) -> NmfParams {
        let r = self.regularization;
        NmfParams {
            alpha: r.alpha,
            beta: r.beta,
            gamma: r.gamma,
            delta: r.delta,
            max_iters: self.iters,
            project_simplex: self.project_simplex,
            ..NmfParams::new(self.k)
        }
    }

    pub fn sum_path(&self) -> Result<SumPath> {
        Ok(match self.sum_path {
            SumKind::Float => SumPath::Float,
            SumKind::Fixed => SumPath::Fixed(FixedCodec::new(self.frac_bits, self.fixed_bound)?),
        })
    }

    pub fn svd_config(&self) -> Result<SvdConfig> {
        Ok(SvdConfig {
            sum_path: self.sum_path()?,
            backend: NssBackend::new(self.backend, self.frac_bits),
            ..SvdConfig::new(self.k, self.iters, self.seed)
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("privdist-out"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Layers `overrides` (flags) over the defaults, then the file at `path`
    /// over both, and validates the result.
    pub fn resolve(overrides: toml::Table, path: Option<&Path>) -> Result<Self> {
        let mut merged = toml::Table::try_from(Self::default()).expect("config serializes");
        merge(&mut merged, overrides);
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let file: toml::Table =
                text.parse().map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut merged, file);
        }
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Deep merge of TOML tables. A `source`/`mode` tag change replaces the
/// whole table so stale variant fields do not leak across.
fn merge(into: &mut toml::Table, from: toml::Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) if same_variant(a, &b) => merge(a, b),
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

fn same_variant(a: &toml::Table, b: &toml::Table) -> bool {
    ["source", "mode"].iter().all(|tag| b.get(*tag).is_none() || a.get(*tag) == b.get(*tag))
}

/// Sets a dotted `key` such as `privacy.samples` in a TOML table.
pub fn set_key(table: &mut toml::Table, key: &str, value: impl Into<toml::Value>) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("intermediate key is a table");
    }
    cur.insert(last.to_string(), value.into());
}
