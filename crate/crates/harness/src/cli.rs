//! Command-line interface. Flags mirror [`ExperimentConfig`] fields; a
//! `--config` file is applied on top of them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{set_key, ExperimentConfig};
use crate::error::Result;
use crate::experiments;
use crate::report::Report;

#[derive(Debug, Parser)]
#[command(name = "privdist", version, about = "Private distributed NMF and SVD experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distributed vs centralized outputs from one seed.
    Equivalence(CommonArgs),
    /// Held-out improvement of the joint model over local models.
    Uplift(CommonArgs),
    /// KSDP leakage measurement over documents of interest.
    Privacy(CommonArgs),
    /// Noised vs noiseless distributed NMF.
    DpBaseline(CommonArgs),
    /// Timing of one secure sum invocation.
    SecsumBench(CommonArgs),
    /// Timing of one shared-circuit normalized secure sum invocation.
    NssBench(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Equivalence(_) => "equivalence",
            Command::Uplift(_) => "uplift",
            Command::Privacy(_) => "privacy",
            Command::DpBaseline(_) => "dp-baseline",
            Command::SecsumBench(_) => "secsum-bench",
            Command::NssBench(_) => "nss-bench",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Equivalence(a)
            | Command::Uplift(a)
            | Command::Privacy(a)
            | Command::DpBaseline(a)
            | Command::SecsumBench(a)
            | Command::NssBench(a) => a,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlgorithmArg {
    Nmf,
    Svd,
    Pca,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackendArg {
    Float,
    Ideal,
    SharedCircuit,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SumArg {
    Float,
    Fixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    MatrixMarket,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PartitionArg {
    Disjoint,
    Independent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MechanismArg {
    Algorithm,
    Secsum,
    Leaky,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; its values override flags.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Number of parties.
    #[arg(long, short = 'm')]
    pub parties: Option<usize>,
    /// Rows per party as a fraction of the corpus.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub partition: Option<PartitionArg>,
    #[arg(long, short)]
    pub k: Option<usize>,
    /// NMF sweeps or power iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub project_simplex: bool,
    #[arg(long, value_enum)]
    pub sum_path: Option<SumArg>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub frac_bits: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Data file; synthetic data when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Apply tf-idf with per-party IDF to the data file.
    #[arg(long)]
    pub tfidf: bool,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismArg>,
    #[arg(long)]
    pub documents: Option<usize>,
    /// Mechanism runs per side per document.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "dp-delta")]
    pub dp_delta: Option<f64>,
    #[arg(long)]
    pub sensitivity: Option<f64>,
    /// Comma-separated party-size fractions for uplift.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
}

fn name(v: impl ValueEnum) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

impl CommonArgs {
    /// The flags that were given, as a TOML table in config layout.
    pub fn overrides(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let int = |v: usize| v as i64;
        if let Some(v) = self.algorithm {
            set_key(&mut t, "algorithm", name(v));
        }
        if let Some(v) = self.parties {
            set_key(&mut t, "parties", int(v));
        }
        if let Some(v) = self.fraction {
            set_key(&mut t, "fraction", v);
        }
        if let Some(v) = self.partition {
            set_key(&mut t, "partition", name(v));
        }
        if let Some(v) = self.k {
            set_key(&mut t, "k", int(v));
        }
        if let Some(v) = self.iters {
            set_key(&mut t, "iters", int(v));
        }
        for (key, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if let Some(v) = v {
                set_key(&mut t, &format!("regularization.{key}"), v);
            }
        }
        if self.project_simplex {
            set_key(&mut t, "project_simplex", true);
        }
        if let Some(v) = self.sum_path {
            set_key(&mut t, "sum_path", name(v));
        }
        if let Some(v) = self.backend {
            set_key(&mut t, "backend", name(v));
        }
        if let Some(v) = self.frac_bits {
            set_key(&mut t, "frac_bits", i64::from(v));
        }
        if let Some(v) = self.seed {
            set_key(&mut t, "seed", v as i64);
        }
        if let Some(v) = self.tolerance {
            set_key(&mut t, "tolerance", v);
        }
        if let Some(path) = &self.data {
            let mut d = toml::Table::new();
            d.insert("source".into(), "file".into());
            d.insert("path".into(), path.display().to_string().into());
            d.insert("format".into(), name(self.format.unwrap_or(FormatArg::Csv)).into());
            d.insert("tfidf".into(), self.tfidf.into());
            t.insert("data".into(), d.into());
        }
        if let Some(v) = &self.output {
            set_key(&mut t, "output", v.display().to_string());
        }
        if let Some(v) = self.mechanism {
            set_key(&mut t, "privacy.mechanism", name(v));
        }
        if let Some(v) = self.documents {
            set_key(&mut t, "privacy.documents", int(v));
        }
        if let Some(v) = self.samples {
            set_key(&mut t, "privacy.samples", int(v));
        }
        if let Some(v) = self.threads {
            set_key(&mut t, "privacy.threads", int(v));
        }
        if let Some(v) = self.epsilon {
            set_key(&mut t, "dp.epsilon", v);
        }
        if let Some(v) = self.dp_delta {
            set_key(&mut t, "dp.delta", v);
        }
        if let Some(v) = self.sensitivity {
            set_key(&mut t, "dp.sensitivity", v);
        }
        if let Some(v) = &self.fractions {
            set_key(&mut t, "uplift.fractions", toml::Value::Array(v.iter().map(|&f| f.into()).collect()));
        }
        if let Some(v) = self.dim {
            set_key(&mut t, "bench.dim", int(v));
        }
        if let Some(v) = self.reps {
            set_key(&mut t, "bench.reps", int(v));
        }
        t
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::resolve(self.overrides(), self.config.as_deref())
    }
}

/// Runs the named experiment.
pub fn dispatch(name: &str, cfg: &ExperimentConfig) -> Result<Report> {
    match name {
        "equivalence" => experiments::run_equivalence(cfg),
        "uplift" => experiments::run_uplift(cfg),
        "privacy" => experiments::run_privacy(cfg),
        "dp-baseline" => experiments::run_dp_baseline(cfg),
        "secsum-bench" => experiments::run_secsum_bench(cfg),
        "nss-bench" => experiments::run_nss_bench(cfg),
        other => Err(crate::error::HarnessError::Config(format!("unknown experiment {other}"))),
    }
}

/// Runs a parsed command line and writes its report. Returns the report and
/// its path, or `None` for `--print-config`.
pub fn execute(cli: &Cli) -> Result<Option<(Report, PathBuf)>> {
    let args = cli.command.args();
    let cfg = args.resolve()?;
    if args.print_config {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let name = cli.command.name();
    let dir = cfg.output_dir();
    let report = if name == "privacy" {
        let (report, samples) = experiments::run_privacy_with_samples(&cfg)?;
        let sample_dir = dir.join(format!("privacy-{}-samples", cfg.seed));
        std::fs::create_dir_all(&sample_dir).map_err(|e| crate::error::HarnessError::io(&sample_dir, e))?;
        for s in &samples {
            let path = sample_dir.join(format!("document-{}.ksdp", s.document));
            let mut f = std::fs::File::create(&path).map_err(|e| crate::error::HarnessError::io(&path, e))?;
            s.samples.write_to(&mut f).map_err(|e| crate::error::HarnessError::io(&path, e))?;
        }
        report
    } else {
        dispatch(name, &cfg)?
    };
    let path = report.write(&dir)?;
    Ok(Some((report, path)))
}
