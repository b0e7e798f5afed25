use std::time::Instant;

use privdist::ksdp::{measure_ksdp, nmf_trace_statistic, svd_statistics, SampleCache, SigmaSource, Statistic, SVD_STATISTIC_NAMES};
use privdist::net::ObservableTrace;
use privdist::nmf::{pd_nmf, PartyNmfState};
use privdist::secsum::secure_sum;
use privdist::svd::{block_power_iteration, pd_pca, pd_svd, scale_inputs, Centering, PartySvdState};
use privdist::{dot, Error, Matrix, SeededRng};

use super::{load_corpus, nss_context, prepare_party, rng, run_network, split_even, stream};
use crate::config::{Algorithm, ExperimentConfig, MechanismKind};
use crate::error::{HarnessError, Result};
use crate::report::{mean_std, median, Record, Report};

/// The statistic samples behind one document's measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct DocumentSamples {
    /// Row of the database.
    pub document: usize,
    pub samples: SampleCache,
}

pub fn run_privacy(cfg: &ExperimentConfig) -> Result<Report> {
    Ok(run_privacy_with_samples(cfg)?.0)
}

/// Measures KSDP leakage of the configured mechanism for randomly chosen
/// documents of interest and reports per-document `π` with aggregates.
/// For the SVD mechanisms the statistics are evaluated twice, with the true
/// singular values the mechanism reveals and with the adversary's estimate,
/// giving `pi_revealed` and `pi_estimated`.
pub fn run_privacy_with_samples(cfg: &ExperimentConfig) -> Result<(Report, Vec<DocumentSamples>)> {
    cfg.validate()?;
    let start = Instant::now();
    let corpus = prepare_party(cfg, load_corpus(cfg)?)?;
    let svd_like = cfg.privacy.mechanism == MechanismKind::Algorithm && cfg.algorithm != Algorithm::Nmf;
    let (db, adversary) = if svd_like {
        let n = corpus.rows();
        let a = cfg.privacy.adversary_rows;
        if a == 0 || a >= n {
            return Err(HarnessError::Config(format!("adversary_rows = {a} must lie in 1..{n}")));
        }
        let idx: Vec<usize> = (0..n).collect();
        (corpus.select_rows(&idx[..n - a]), Some(corpus.select_rows(&idx[n - a..])))
    } else {
        (corpus, None)
    };
    let p = &cfg.privacy;
    if p.documents > db.rows() {
        return Err(HarnessError::Config(format!("{} documents requested from {} rows", p.documents, db.rows())));
    }
    let docs = rng(cfg, stream::DOCUMENTS).sample_indices(db.rows(), p.documents);
    let n_v = p.sampler.n_sub(db.rows());

    let mut report = Report::new("privacy", cfg);
    let mut all = Vec::with_capacity(docs.len());
    let (mut pis, mut revealed, mut estimated) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &doc) in docs.iter().enumerate() {
        let mut r = rng(cfg, stream::KSDP).fork(i as u64);
        let (stats, pi_parts) = match cfg.privacy.mechanism {
            MechanismKind::Secsum => {
                let mech = secsum_mechanism(cfg)?;
                let res = measure_ksdp(&mech, &mech, &[sum_statistic()], &db, doc, p.samples, &p.sampler, &mut r, p.threads)?;
                (res, None)
            }
            MechanismKind::Leaky => {
                let x = db.row(doc).to_vec();
                let mech = move |s: &Matrix, _: &mut SeededRng| -> privdist::Result<ObservableTrace> {
                    let present = (0..s.rows()).any(|i| s.row(i) == x.as_slice());
                    let mut t = ObservableTrace::new();
                    t.push("flag", vec![f64::from(u8::from(present))]);
                    Ok(t)
                };
                let flag = Statistic::new("flag", |t: &ObservableTrace, _x: &[f64]| first(t, "flag"));
                (measure_ksdp(&mech, &mech, &[flag], &db, doc, p.samples, &p.sampler, &mut r, p.threads)?, None)
            }
            MechanismKind::Algorithm if cfg.algorithm == Algorithm::Nmf => {
                let mech = nmf_mechanism(cfg)?;
                let stat = nmf_trace_statistic(cfg.k, db.cols());
                (measure_ksdp(&mech, &mech, &[stat], &db, doc, p.samples, &p.sampler, &mut r, p.threads)?, None)
            }
            MechanismKind::Algorithm => {
                let adversary = adversary.as_ref().expect("split above");
                let sigma_a_sq = adversary_sigma_sq(cfg, adversary)?;
                let mech = svd_mechanism(cfg, adversary.clone())?;
                let stats = svd_statistic_set(cfg.k, db.cols(), n_v, adversary.rows(), sigma_a_sq);
                let res = measure_ksdp(&mech, &mech, &stats, &db, doc, p.samples, &p.sampler, &mut r, p.threads)?;
                let half = SVD_STATISTIC_NAMES.len();
                let min = |ps: &[f64]| ps.iter().copied().fold(1.0, f64::min);
                let parts = (min(&res.p_values[..half]), min(&res.p_values[half..]));
                (res, Some(parts))
            }
        };
        let mut rec = Record::new(format!("document-{doc}")).with("row", doc as f64).with("pi", stats.pi);
        if let Some((rv, est)) = pi_parts {
            rec = rec.with("pi_revealed", rv).with("pi_estimated", est);
            revealed.push(rv);
            estimated.push(est);
        }
        for (s, pv) in stats.samples.statistics.iter().zip(&stats.p_values) {
            rec = rec.with(&format!("p/{s}"), *pv);
        }
        pis.push(stats.pi);
        report.records.push(rec);
        all.push(DocumentSamples { document: doc, samples: stats.samples });
    }
    let (mean, std) = mean_std(&pis);
    report.set("median_pi", median(&pis));
    report.set("mean_pi", mean);
    report.set("std_pi", std);
    report.set("n_sub", n_v as f64);
    if !revealed.is_empty() {
        report.set("median_pi_revealed", median(&revealed));
        report.set("median_pi_estimated", median(&estimated));
    }
    report.transcript_digest = sample_digest(&all);
    report.elapsed_secs = start.elapsed().as_secs_f64();
    Ok((report, all))
}

/// The privacy driver has no single transcript; the digest covers every
/// cached statistic sample instead.
fn sample_digest(all: &[DocumentSamples]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for d in all {
        let mut buf = Vec::new();
        d.samples.write_to(&mut buf).expect("in-memory write");
        h.update((d.document as u64).to_le_bytes());
        h.update(&buf);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn first(t: &ObservableTrace, label: &str) -> privdist::Result<f64> {
    t.last(label).and_then(|v| v.first().copied()).ok_or_else(|| Error::Domain(format!("trace has no {label}")))
}

fn revealed<'a>(t: &'a ObservableTrace, label: &str) -> privdist::Result<&'a [f64]> {
    t.last(label).ok_or_else(|| Error::Domain(format!("trace has no {label}")))
}

fn sum_statistic() -> Statistic {
    Statistic::new("sum_inner_product", |t: &ObservableTrace, x: &[f64]| Ok(dot(revealed(t, "sum")?, x)))
}

type MechFn = Box<dyn Fn(&Matrix, &mut SeededRng) -> privdist::Result<ObservableTrace> + Sync>;

fn to_core(e: HarnessError) -> Error {
    match e {
        HarnessError::Config(m) => Error::Parameter(m),
        HarnessError::Data(m) | HarnessError::Io { path: m, .. } => Error::Domain(m),
        HarnessError::Protocol(m) => Error::Protocol(m),
    }
}

/// Secure sum of the database rows, split evenly over the parties.
fn secsum_mechanism(cfg: &ExperimentConfig) -> Result<MechFn> {
    let path = cfg.sum_path()?;
    let parties = cfg.parties;
    Ok(Box::new(move |db, r| {
        let parts = split_even(db, parties);
        let (_, mut traces) =
            run_network(parties, r.next_u64(), |h| secure_sum(h, "sum", &parts[h.id().index()].column_sums(), &path))
                .map_err(to_core)?;
        Ok(traces.swap_remove(0))
    }))
}

fn nmf_mechanism(cfg: &ExperimentConfig) -> Result<MechFn> {
    let path = cfg.sum_path()?;
    let (parties, params) = (cfg.parties, cfg.nmf_params());
    Ok(Box::new(move |db, r| {
        let parts = split_even(db, parties);
        let (_, mut traces) = run_network(parties, r.next_u64(), |h| {
            let mut state = PartyNmfState::new(parts[h.id().index()].clone(), params);
            pd_nmf(h, &mut state, &path)
        })
        .map_err(to_core)?;
        Ok(traces.swap_remove(0))
    }))
}

/// Distributed SVD (or PCA) over the database rows plus the adversary's
/// rows as one more party. After the run the parties also reveal the
/// squared singular values `σ_j² = Σ_m v_jᵀ S_m v_j` as `sigma_sq` and the
/// final basis as `V`.
fn svd_mechanism(cfg: &ExperimentConfig, adversary: Matrix) -> Result<MechFn> {
    let svd = cfg.svd_config()?;
    let cfg = cfg.clone();
    Ok(Box::new(move |db, r| {
        let mut parts = split_even(db, cfg.parties);
        parts.push(adversary.clone());
        let seed = r.next_u64();
        let (_, mut traces) = run_network(parts.len(), seed, |h| {
            let mut state = PartySvdState::new(parts[h.id().index()].clone())?;
            let cfg_seeded = privdist::svd::SvdConfig { seed, ..svd };
            let mut ctx = nss_context(&cfg, seed);
            let v = if cfg.algorithm == Algorithm::Pca {
                pd_pca(h, &mut state, &cfg_seeded, &mut ctx, Centering::Global)?
            } else {
                scale_inputs(h, &mut state, &svd.sum_path)?;
                pd_svd(h, &mut state, &cfg_seeded, &mut ctx)?
            };
            let scale = first(h.trace(), "scale")?;
            let mine: Vec<f64> = (0..v.cols())
                .map(|j| {
                    let col = v.column(j);
                    Ok(scale * dot(&col, &state.s.mul_vec(&col)?))
                })
                .collect::<privdist::Result<_>>()?;
            secure_sum(h, "sigma_sq", &mine, &svd.sum_path)?;
            h.publish("V", v.into_vec());
            Ok(())
        })
        .map_err(to_core)?;
        Ok(traces.swap_remove(0))
    }))
}

/// The adversary's own top-`k` squared singular values.
fn adversary_sigma_sq(cfg: &ExperimentConfig, xa: &Matrix) -> Result<Vec<f64>> {
    let xa = if cfg.algorithm == Algorithm::Pca {
        let n = xa.rows() as f64;
        let mu: Vec<f64> = xa.column_sums().iter().map(|s| s / n).collect();
        xa.sub_row_vector(&mu)?
    } else {
        xa.clone()
    };
    let s = xa.t_matmul(&xa)?;
    let v = block_power_iteration(&s, cfg.k, cfg.iters, &mut rng(cfg, stream::ADVERSARY))?;
    (0..cfg.k)
        .map(|j| {
            let col = v.column(j);
            Ok(dot(&col, &s.mul_vec(&col)?))
        })
        .collect()
}

/// Six statistics with the revealed singular values followed by the same six
/// with the adversary's estimate.
fn svd_statistic_set(k: usize, d: usize, n_v: usize, n_a: usize, sigma_a_sq: Vec<f64>) -> Vec<Statistic> {
    let mut out = Vec::with_capacity(2 * SVD_STATISTIC_NAMES.len());
    for (idx, name) in SVD_STATISTIC_NAMES.iter().enumerate() {
        out.push(Statistic::new(format!("revealed/{name}"), move |t: &ObservableTrace, x: &[f64]| {
            let v = Matrix::from_vec(d, k, revealed(t, "V")?.to_vec())?;
            let sigma = SigmaSource::Revealed(revealed(t, "sigma_sq")?.to_vec());
            Ok(svd_statistics(&v, &sigma, x)?[idx])
        }));
    }
    for (idx, name) in SVD_STATISTIC_NAMES.iter().enumerate() {
        let sigma = SigmaSource::Estimated { n_v, n_a, sigma_a_sq: sigma_a_sq.clone() };
        out.push(Statistic::new(format!("estimated/{name}"), move |t: &ObservableTrace, x: &[f64]| {
            let v = Matrix::from_vec(d, k, revealed(t, "V")?.to_vec())?;
            Ok(svd_statistics(&v, &sigma, x)?[idx])
        }));
    }
    out
}
