use std::time::Instant;

use privdist::nmf::{pd_nmf_iter, random_init, rri_nmf, PartyNmfState};
use privdist::svd::{block_power_iteration_from, pd_pca, pd_svd, scale_inputs, Centering, PartySvdState};
use privdist::{DenseMatrix, Matrix};

use super::{load_parties, max_abs_dev_canonical, nss_context, rng, run_network, stream};
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::report::{Record, Report, TranscriptDigest};

/// Runs the distributed and centralized pipelines from one seed and
/// reports the largest entry deviation of their outputs.
pub fn run_equivalence(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let parts = load_parties(cfg)?;
    let mut report = Report::new("equivalence", cfg);
    let mut digest = TranscriptDigest::default();
    let seed = rng(cfg, stream::NETWORK).next_seed();

    let (distributed, central) = match cfg.algorithm {
        Algorithm::Nmf => {
            let params = cfg.nmf_params();
            let t0: Matrix = random_init(cfg.k, parts[0].cols(), &mut rng(cfg, stream::START));
            let path = cfg.sum_path()?;
            let (out, traces) = run_network(parts.len(), seed, |h| {
                let mut state = PartyNmfState::new(parts[h.id().index()].clone(), params);
                pd_nmf_iter(h, &mut state, &t0, &path)
            })?;
            digest.add(&traces);
            let central = rri_nmf(&DenseMatrix::vstack(&parts)?, &params, &t0)?.t;
            (out, central)
        }
        Algorithm::Svd | Algorithm::Pca => {
            let svd = cfg.svd_config()?;
            let pca = cfg.algorithm == Algorithm::Pca;
            let (out, traces) = run_network(parts.len(), seed, |h| {
                let mut state = PartySvdState::new(parts[h.id().index()].clone())?;
                let mut ctx = nss_context(cfg, seed);
                if pca {
                    pd_pca(h, &mut state, &svd, &mut ctx, Centering::Global)
                } else {
                    scale_inputs(h, &mut state, &svd.sum_path)?;
                    pd_svd(h, &mut state, &svd, &mut ctx)
                }
            })?;
            digest.add(&traces);
            let trace = &traces[0];
            let revealed = |label: &str| {
                trace.last(label).ok_or_else(|| HarnessError::Protocol(format!("transcript lacks {label}")))
            };
            let scale = revealed("scale")?[0];
            let mut x = DenseMatrix::vstack(&parts)?;
            if pca {
                let n = x.rows() as f64;
                let mu: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
                x = x.sub_row_vector(&mu)?;
            }
            let s = x.t_matmul(&x)?.scale(1.0 / scale);
            let v0 = Matrix::from_vec(x.cols(), cfg.k, revealed("V0")?.to_vec())?;
            (out, block_power_iteration_from(&s, &v0, cfg.iters)?)
        }
    };

    let mut worst: f64 = 0.0;
    for (m, out) in distributed.iter().enumerate() {
        let dev = max_abs_dev_canonical(out, &central)?;
        worst = worst.max(dev);
        report.records.push(Record::new(format!("party-{m}")).with("rows", parts[m].rows() as f64).with("max_abs_dev", dev));
    }
    report.set("max_abs_dev", worst);
    report.set("tolerance", cfg.tolerance);
    report.pass = Some(worst <= cfg.tolerance);
    report.transcript_digest = digest.hex();
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
