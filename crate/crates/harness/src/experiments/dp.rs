use std::time::Instant;

use privdist::nmf::{dp_noised_pd_nmf, dp_sigma, objective, pd_nmf, PartyNmfState};
use privdist::{DenseMatrix, Matrix};

use super::{load_parties, rng, run_network, stream};
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::report::{Record, Report, TranscriptDigest};

/// Runs distributed NMF with and without Gaussian noise on every revealed
/// sum, from the same seeds, and reports the objective gap.
pub fn run_dp_baseline(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Nmf {
        return Err(HarnessError::Config("dp-baseline supports algorithm = \"nmf\" only".into()));
    }
    let start = Instant::now();
    let parts = load_parties(cfg)?;
    let x = DenseMatrix::vstack(&parts)?;
    let params = cfg.nmf_params();
    let path = cfg.sum_path()?;
    let dp = cfg.dp;
    let sigma = dp_sigma(dp.epsilon, dp.delta, dp.sensitivity)?;
    let seed = rng(cfg, stream::NETWORK).next_seed();
    let mut digest = TranscriptDigest::default();

    let run = |noised: bool, digest: &mut TranscriptDigest| -> Result<(Matrix, Matrix)> {
        let (out, traces) = run_network(parts.len(), seed, |h| {
            let mut state = PartyNmfState::new(parts[h.id().index()].clone(), params);
            let t = if noised {
                dp_noised_pd_nmf(h, &mut state, dp.epsilon, dp.delta, dp.sensitivity, &path)?
            } else {
                pd_nmf(h, &mut state, &path)?
            };
            Ok((t, state.w))
        })?;
        digest.add(&traces);
        let t = out[0].0.clone();
        let w = DenseMatrix::vstack(&out.into_iter().map(|(_, w)| w).collect::<Vec<_>>())?;
        Ok((t, w))
    };
    let (t_plain, w_plain) = run(false, &mut digest)?;
    let (t_noised, w_noised) = run(true, &mut digest)?;
    let plain = objective(&x, &w_plain, &t_plain, &params)?;
    let noised = objective(&x, &w_noised, &t_noised, &params)?;

    let mut report = Report::new("dp-baseline", cfg);
    report.records.push(Record::new("noiseless").with("objective", plain));
    report.records.push(Record::new("noised").with("objective", noised).with("sigma", sigma));
    report.set("sigma", sigma);
    report.set("epsilon", dp.epsilon);
    report.set("delta", dp.delta);
    report.set("objective_noiseless", plain);
    report.set("objective_noised", noised);
    report.set("gap", noised - plain);
    report.set("topic_max_abs_dev", t_noised.max_abs_diff(&t_plain)?);
    report.transcript_digest = digest.hex();
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
