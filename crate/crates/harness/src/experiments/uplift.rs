use std::time::Instant;

use privdist::nmf::{best_fit_error, pd_nmf, PartyNmfState};
use privdist::svd::{lra_error, pd_pca, pd_svd, scale_inputs, Centering, PartySvdState};
use privdist::Matrix;

use super::{load_corpus, nss_context, prepare_party, rng, run_network, stream};
use crate::config::{Algorithm, ExperimentConfig};
use crate::data::{party_rows, partition};
use crate::error::{HarnessError, Result};
use crate::report::{Record, Report, TranscriptDigest};

/// Trains the configured pipeline on all parties jointly and on each party
/// alone, for each configured party size, and reports the held-out
/// improvement of the joint model over each local one in percent.
pub fn run_uplift(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let x = load_corpus(cfg)?;
    let n = x.rows();
    let n_test = party_rows(n, cfg.uplift.holdout);
    if n_test >= n {
        return Err(HarnessError::Config(format!("holdout leaves no training rows out of {n}")));
    }
    let order = rng(cfg, stream::PARTITION).sample_indices(n, n);
    let test = prepare_party(cfg, x.select_rows(&order[..n_test]))?;
    let pool = x.select_rows(&order[n_test..]);
    let test = match cfg.algorithm {
        Algorithm::Pca => center(&test),
        _ => test,
    };

    let mut report = Report::new("uplift", cfg);
    let mut digest = TranscriptDigest::default();
    let mut seeds = rng(cfg, stream::NETWORK);
    for (size_idx, &fraction) in cfg.uplift.fractions.iter().enumerate() {
        let mut prng = rng(cfg, stream::PARTITION).fork(100 + size_idx as u64);
        let parts = partition(&pool, cfg.parties, fraction, cfg.partition, &mut prng)?
            .into_iter()
            .map(|p| prepare_party(cfg, p))
            .collect::<Result<Vec<_>>>()?;
        let seed = seeds.next_seed();
        let global = train(cfg, &parts, seed, &mut digest)?;
        let global_err = held_out_error(cfg, &test, &global)?;
        let mut uplifts = Vec::with_capacity(parts.len());
        for (m, part) in parts.iter().enumerate() {
            let local = train(cfg, std::slice::from_ref(part), seed, &mut digest)?;
            let local_err = held_out_error(cfg, &test, &local)?;
            let uplift = if local_err > 0.0 { 100.0 * (local_err - global_err) / local_err } else { 0.0 };
            uplifts.push(uplift);
            report.records.push(
                Record::new(format!("size-{size_idx}/party-{m}"))
                    .with("fraction", fraction)
                    .with("rows", part.rows() as f64)
                    .with("local_error", local_err)
                    .with("global_error", global_err)
                    .with("uplift_percent", uplift),
            );
        }
        let mean = uplifts.iter().sum::<f64>() / uplifts.len() as f64;
        report.set(&format!("mean_uplift_percent/{size_idx}"), mean);
        report.set(&format!("min_uplift_percent/{size_idx}"), uplifts.iter().copied().fold(f64::INFINITY, f64::min));
        report.set(&format!("party_rows/{size_idx}"), parts[0].rows() as f64);
    }
    report.transcript_digest = digest.hex();
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Means of `uplift_percent` per party size, in configured order.
pub fn mean_uplifts(report: &Report) -> Vec<f64> {
    (0..report.config.uplift.fractions.len())
        .filter_map(|i| report.global(&format!("mean_uplift_percent/{i}")))
        .collect()
}

fn center(x: &Matrix) -> Matrix {
    let n = x.rows() as f64;
    let mu: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
    x.sub_row_vector(&mu).expect("mean has one entry per column")
}

/// The model the pipeline outputs: topics for NMF, right singular vectors
/// or principal axes otherwise.
fn train(cfg: &ExperimentConfig, parts: &[Matrix], seed: u64, digest: &mut TranscriptDigest) -> Result<Matrix> {
    let (mut out, traces) = match cfg.algorithm {
        Algorithm::Nmf => {
            let params = cfg.nmf_params();
            let path = cfg.sum_path()?;
            run_network(parts.len(), seed, |h| {
                let mut state = PartyNmfState::new(parts[h.id().index()].clone(), params);
                pd_nmf(h, &mut state, &path)
            })?
        }
        Algorithm::Svd | Algorithm::Pca => {
            let svd = cfg.svd_config()?;
            run_network(parts.len(), seed, |h| {
                let mut state = PartySvdState::new(parts[h.id().index()].clone())?;
                let mut ctx = nss_context(cfg, seed);
                if cfg.algorithm == Algorithm::Pca {
                    pd_pca(h, &mut state, &svd, &mut ctx, Centering::Global)
                } else {
                    scale_inputs(h, &mut state, &svd.sum_path)?;
                    pd_svd(h, &mut state, &svd, &mut ctx)
                }
            })?
        }
    };
    digest.add(&traces);
    Ok(out.swap_remove(0))
}

/// Relative held-out reconstruction error of a model.
fn held_out_error(cfg: &ExperimentConfig, test: &Matrix, model: &Matrix) -> Result<f64> {
    let norm = test.frobenius_norm();
    let err = match cfg.algorithm {
        Algorithm::Nmf => (2.0 * best_fit_error(test, model)?).sqrt(),
        Algorithm::Svd | Algorithm::Pca => lra_error(test, model)?,
    };
    Ok(if norm > 0.0 { err / norm } else { err })
}
