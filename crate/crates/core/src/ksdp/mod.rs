//! Kolmogorov–Smirnov distributional privacy (KSDP) measurement.
//!
//! A mechanism is run on sub-databases that contain a target document and
//! on sub-databases (or synthetic databases) that do not. Each adversary
//! statistic is evaluated on both sets of outputs and compared with a
//! two-sample KS test; the smallest p-value `π` measures how well the best
//! statistic detects the document. Small `π` means leakage.

mod ks;
mod sampling;
mod stats;

pub use ks::{ks_2sample_pvalue, ks_statistic, q_ks, Ecdf, MIN_SAMPLES};
pub use sampling::{random_db, subsample_with, subsample_without, DbSampler, RandomRows, SampleCache, SampleRecord, Side};
pub use stats::{
    box_fit, covariance_estimate, nmf_statistic, svd_family_distance, svd_family_weighted, svd_statistics, SigmaSource,
    BOX_FIT_ITERS, BOX_FIT_TOL, SVD_STATISTIC_NAMES,
};

use crate::error::{ensure, Result};
use crate::net::ObservableTrace;
use crate::rng::SeededRng;
use crate::Matrix;

/// A randomized algorithm whose public output is an [`ObservableTrace`].
/// The output must depend only on the database and the supplied rng.
pub trait Mechanism: Sync {
    fn run(&self, db: &Matrix, rng: &mut SeededRng) -> Result<ObservableTrace>;
}

impl<F> Mechanism for F
where
    F: Fn(&Matrix, &mut SeededRng) -> Result<ObservableTrace> + Sync,
{
    fn run(&self, db: &Matrix, rng: &mut SeededRng) -> Result<ObservableTrace> {
        self(db, rng)
    }
}

type StatFn = dyn Fn(&ObservableTrace, &[f64]) -> Result<f64> + Send + Sync;

/// A named adversary statistic of a trace and the target document.
pub struct Statistic {
    pub name: String,
    f: Box<StatFn>,
}

impl Statistic {
    pub fn new(name: impl Into<String>, f: impl Fn(&ObservableTrace, &[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Box::new(f) }
    }

    pub fn eval(&self, trace: &ObservableTrace, x: &[f64]) -> Result<f64> {
        (self.f)(trace, x)
    }
}

impl std::fmt::Debug for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Statistic").field("name", &self.name).finish_non_exhaustive()
    }
}

/// The NMF statistic read from a trace: final topics under `T_final` and
/// the last revealed denominator per topic under `den_t` as weights.
pub fn nmf_trace_statistic(k: usize, d: usize) -> Statistic {
    Statistic::new("nmf_weighted_inner_product", move |trace, x| {
        let t = trace
            .last("T_final")
            .ok_or_else(|| crate::Error::Domain("trace has no T_final".into()))?;
        let t = Matrix::from_vec(k, d, t.to_vec())?;
        let w = (0..k)
            .map(|j| {
                trace
                    .last(&format!("den_{j}"))
                    .and_then(|v| v.first().copied())
                    .ok_or_else(|| crate::Error::Domain(format!("trace has no den_{j}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        nmf_statistic(&t, &w, x)
    })
}

/// Outcome of one KSDP measurement.
#[derive(Clone, Debug)]
pub struct KsdpResult {
    /// Minimum p-value over the statistics.
    pub pi: f64,
    /// p-value per statistic, in input order.
    pub p_values: Vec<f64>,
    /// Every mechanism run's statistic values, reusable for further tests.
    pub samples: SampleCache,
}

/// Runs the measurement for the document at `x_index` of `db` with `t`
/// samples per side. `mech` runs on with-side databases, `sim` on
/// without-side ones. Mechanism runs are spread over `threads` workers;
/// results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn measure_ksdp(
    mech: &dyn Mechanism,
    sim: &dyn Mechanism,
    stats: &[Statistic],
    db: &Matrix,
    x_index: usize,
    t: usize,
    sampler: &DbSampler,
    rng: &mut SeededRng,
    threads: usize,
) -> Result<KsdpResult> {
    ensure!(!stats.is_empty(), Parameter, "need at least one statistic");
    ensure!(t >= MIN_SAMPLES, Domain, "need at least {MIN_SAMPLES} samples per side, got {t}");
    ensure!(x_index < db.rows(), Shape, "document {x_index} outside a {}-row database", db.rows());
    let x = db.row(x_index).to_vec();

    let mut jobs = Vec::with_capacity(2 * t);
    for side in [Side::With, Side::Without] {
        for _ in 0..t {
            jobs.push((side, rng.next_seed()));
        }
    }
    let run = |&(side, seed): &(Side, u64)| -> Result<SampleRecord> {
        let mut r = SeededRng::new(seed, 0);
        let sample = sampler.draw(db, x_index, side, &mut r)?;
        let trace = match side {
            Side::With => mech.run(&sample, &mut r)?,
            Side::Without => sim.run(&sample, &mut r)?,
        };
        let values = stats.iter().map(|s| s.eval(&trace, &x)).collect::<Result<Vec<_>>>()?;
        Ok(SampleRecord { side, seed, values })
    };
    let records = parallel_map(&jobs, threads.max(1), run)?;

    let samples = SampleCache { statistics: stats.iter().map(|s| s.name.clone()).collect(), records };
    let p_values = samples.p_values()?;
    let pi = p_values.iter().copied().fold(1.0, f64::min);
    Ok(KsdpResult { pi, p_values, samples })
}

fn parallel_map<I: Sync, O: Send>(items: &[I], threads: usize, f: impl Fn(&I) -> Result<O> + Sync) -> Result<Vec<O>> {
    if threads == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let results: Vec<Result<Vec<O>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Result<Vec<O>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("KSDP worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
