use std::time::Instant;

use privdist::nss::{dealer_offline, normed_secsum, NssBackend, NssContext, NssMode};
use privdist::secsum::{secsum, FixedCodec};

use super::{rng, run_network, stream};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{mean_std, Record, Report, TranscriptDigest};

fn inputs(cfg: &ExperimentConfig, scale: f64) -> Vec<Vec<f64>> {
    let mut r = rng(cfg, stream::DATA);
    (0..cfg.parties).map(|_| (0..cfg.bench.dim).map(|_| scale * (2.0 * r.uniform() - 1.0)).collect()).collect()
}

fn finish(mut report: Report, times: &[f64], digest: TranscriptDigest, start: Instant) -> Report {
    let (mean, std) = mean_std(times);
    report.set("mean_secs", mean);
    report.set("std_secs", std);
    report.set("min_secs", times.iter().copied().fold(f64::INFINITY, f64::min));
    report.set("dim", report.config.bench.dim as f64);
    report.set("parties", report.config.parties as f64);
    report.transcript_digest = digest.hex();
    report.elapsed_secs = start.elapsed().as_secs_f64();
    report
}

/// Wall-clock time of one fixed-point secure sum invocation.
pub fn run_secsum_bench(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let codec = FixedCodec::new(cfg.frac_bits, cfg.fixed_bound)?;
    let data = inputs(cfg, 1.0);
    let mut report = Report::new("secsum-bench", cfg);
    let mut digest = TranscriptDigest::default();
    let mut seeds = rng(cfg, stream::NETWORK);
    let mut times = Vec::with_capacity(cfg.bench.reps);
    for rep in 0..cfg.bench.reps {
        let t = Instant::now();
        let (_, traces) = run_network(cfg.parties, seeds.next_seed(), |h| secsum(h, "sum", &data[h.id().index()], &codec))?;
        let secs = t.elapsed().as_secs_f64();
        digest.add(&traces);
        times.push(secs);
        report.records.push(Record::new(format!("rep-{rep}")).with("secs", secs));
    }
    Ok(finish(report, &times, digest, start))
}

/// Wall-clock time of one shared-circuit normalized secure sum, with the
/// offline dealing timed separately.
pub fn run_nss_bench(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let backend = NssBackend::new(NssMode::SharedCircuit, cfg.frac_bits);
    let budget = backend.budget(&[cfg.bench.dim])?;
    let data = inputs(cfg, 1.0);
    let mut report = Report::new("nss-bench", cfg);
    let mut digest = TranscriptDigest::default();
    let mut seeds = rng(cfg, stream::NETWORK);
    let mut times = Vec::with_capacity(cfg.bench.reps);
    for rep in 0..cfg.bench.reps {
        let t = Instant::now();
        let stores = dealer_offline(&budget, cfg.frac_bits, cfg.parties, &mut rng(cfg, stream::START).fork(rep as u64))?;
        let offline = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (_, traces) = run_network(cfg.parties, seeds.next_seed(), |h| {
            let mut ctx = NssContext::new(backend, stores[h.id().index()].clone());
            normed_secsum(h, "normalized", &data[h.id().index()], &mut ctx)
        })?;
        let online = t.elapsed().as_secs_f64();
        digest.add(&traces);
        times.push(online);
        report.records.push(Record::new(format!("rep-{rep}")).with("secs", online).with("offline_secs", offline));
    }
    report.set("triples", budget.triples as f64);
    Ok(finish(report, &times, digest, start))
}
