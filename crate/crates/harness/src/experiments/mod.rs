//! Experiment drivers behind the CLI subcommands.

mod bench;
mod dp;
mod equivalence;
mod privacy;
mod uplift;

pub use bench::{run_nss_bench, run_secsum_bench};
pub use dp::run_dp_baseline;
pub use equivalence::run_equivalence;
pub use privacy::{run_privacy, run_privacy_with_samples, DocumentSamples};
pub use uplift::{mean_uplifts, run_uplift};

use privdist::net::{NetworkConfig, ObservableTrace, PartyHandle, SimNetwork};
use privdist::nss::{NssContext, NssMode};
use privdist::{Matrix, SeededRng};

use crate::config::{Algorithm, DataSource, ExperimentConfig};
use crate::data::{load_matrix, partition, require_nonnegative, shared_subspace, tfidf, topic_corpus};
use crate::error::Result;

/// Independent random streams of one experiment, all derived from its seed.
pub(crate) mod stream {
    pub const DATA: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const START: u64 = 3;
    pub const NETWORK: u64 = 4;
    pub const DOCUMENTS: u64 = 5;
    pub const KSDP: u64 = 6;
    pub const ADVERSARY: u64 = 7;
}

pub(crate) fn rng(cfg: &ExperimentConfig, stream: u64) -> SeededRng {
    SeededRng::new(cfg.seed, stream)
}

/// The full data matrix named by the configuration.
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Matrix> {
    match &cfg.data {
        DataSource::Synthetic { rows, cols, rank, noise } => {
            let mut r = rng(cfg, stream::DATA);
            Ok(match cfg.algorithm {
                Algorithm::Nmf => topic_corpus(*rows, *cols, *rank, *noise, &mut r),
                Algorithm::Svd | Algorithm::Pca => shared_subspace(*rows, *cols, *rank, *noise, &mut r),
            })
        }
        DataSource::Uniform { rows, cols } => Ok(Matrix::uniform(*rows, *cols, &mut rng(cfg, stream::DATA))),
        DataSource::File { path, format, .. } => load_matrix(path, *format),
    }
}

/// Per-party transform: local tf-idf when configured, and the NMF
/// nonnegativity check.
pub(crate) fn prepare_party(cfg: &ExperimentConfig, x: Matrix) -> Result<Matrix> {
    let x = match &cfg.data {
        DataSource::File { tfidf: true, .. } => tfidf(&x),
        _ => x,
    };
    if cfg.algorithm == Algorithm::Nmf {
        require_nonnegative(&x)?;
    }
    Ok(x)
}

/// Loads the corpus and splits it into the configured parties.
pub fn load_parties(cfg: &ExperimentConfig) -> Result<Vec<Matrix>> {
    let x = load_corpus(cfg)?;
    let parts = partition(&x, cfg.parties, cfg.fraction, cfg.partition, &mut rng(cfg, stream::PARTITION))?;
    parts.into_iter().map(|p| prepare_party(cfg, p)).collect()
}

/// Runs `body` once per party on a fresh in-memory network and returns the
/// per-party results with the observable traces.
pub(crate) fn run_network<R: Send>(
    parties: usize,
    seed: u64,
    body: impl Fn(&mut PartyHandle) -> privdist::Result<R> + Sync,
) -> Result<(Vec<R>, Vec<ObservableTrace>)> {
    let mut net = SimNetwork::with_config(NetworkConfig::new(parties).seed(seed).record_envelopes(false))?;
    let out = net.run(body)?;
    Ok((out, net.traces()))
}

/// Offline material source for the configured NSS backend.
pub(crate) fn nss_context(cfg: &ExperimentConfig, seed: u64) -> NssContext {
    let backend = privdist::nss::NssBackend::new(cfg.backend, cfg.frac_bits);
    match cfg.backend {
        NssMode::SharedCircuit => NssContext::simulated_dealer(backend, seed),
        NssMode::Float | NssMode::Ideal => NssContext::without_store(backend),
    }
}

/// Splits `x` into `parties` contiguous row blocks of near-equal size.
pub(crate) fn split_even(x: &Matrix, parties: usize) -> Vec<Matrix> {
    let n = x.rows();
    (0..parties)
        .map(|m| {
            let (lo, hi) = (m * n / parties, (m + 1) * n / parties);
            x.select_rows(&(lo..hi).collect::<Vec<_>>())
        })
        .collect()
}

/// Largest absolute entry difference after putting every column of both
/// matrices in canonical sign.
pub(crate) fn max_abs_dev_canonical(a: &Matrix, b: &Matrix) -> Result<f64> {
    let canon = |m: &Matrix| {
        let mut out = m.clone();
        for j in 0..m.cols() {
            let mut col = m.column(j);
            privdist::linalg::canonicalize_sign(&mut col);
            out.set_column(j, &col);
        }
        out
    };
    Ok(canon(a).max_abs_diff(&canon(b))?)
}
