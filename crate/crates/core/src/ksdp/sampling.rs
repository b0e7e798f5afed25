//! Database sampling for the two sides of a KSDP measurement, and the
//! on-disk sample cache.

use std::io::{BufRead, Write};

use super::ks::ks_2sample_pvalue;
use crate::error::{ensure, Error, Result};
use crate::rng::SeededRng;
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Databases that contain the target document.
    With,
    /// Databases that do not.
    Without,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::With => "with",
            Side::Without => "without",
        }
    }
}

/// How synthetic rows are drawn for the random-database simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomRows {
    /// i.i.d. `U[0,1]` entries.
    Uniform,
    /// Each entry drawn independently from the values of its column in the
    /// source database.
    #[default]
    ColumnMarginals,
}

/// Which databases the without-side mechanism runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DbSampler {
    /// Sub-samples of the source database, `n_sub` rows each (default
    /// `⌈0.8·n⌉`).
    Subsample { n_sub: Option<usize> },
    /// With-side sub-samples as above; without-side databases synthesized.
    RandomDb { n_sub: Option<usize>, rows: RandomRows },
    /// Both sides synthesized: `n_sub − 1` synthetic rows plus the document
    /// on the with-side, `n_sub` synthetic rows on the without-side.
    Synthetic { n_sub: usize, rows: RandomRows },
}

impl Default for DbSampler {
    fn default() -> Self {
        DbSampler::Subsample { n_sub: None }
    }
}

impl DbSampler {
    pub fn n_sub(&self, n: usize) -> usize {
        let explicit = match self {
            DbSampler::Subsample { n_sub } | DbSampler::RandomDb { n_sub, .. } => *n_sub,
            DbSampler::Synthetic { n_sub, .. } => Some(*n_sub),
        };
        explicit.unwrap_or_else(|| (0.8 * n as f64).ceil() as usize)
    }

    pub fn draw(&self, db: &Matrix, x_index: usize, side: Side, rng: &mut SeededRng) -> Result<Matrix> {
        let n_sub = self.n_sub(db.rows());
        match (side, self) {
            (_, DbSampler::Synthetic { rows, .. }) => {
                ensure!(n_sub >= 1, Domain, "synthetic databases need at least one row");
                if side == Side::Without {
                    return Ok(random_db(db, n_sub, *rows, rng));
                }
                let syn = random_db(db, n_sub - 1, *rows, rng);
                let at = rng.below(n_sub);
                Ok(Matrix::from_fn(n_sub, db.cols(), |i, j| match i.cmp(&at) {
                    std::cmp::Ordering::Less => syn[(i, j)],
                    std::cmp::Ordering::Equal => db[(x_index, j)],
                    std::cmp::Ordering::Greater => syn[(i - 1, j)],
                }))
            }
            (Side::With, _) => Ok(subsample_with(db, x_index, n_sub, rng)?.0),
            (Side::Without, DbSampler::Subsample { .. }) => Ok(subsample_without(db, x_index, n_sub, rng)?.0),
            (Side::Without, DbSampler::RandomDb { rows, .. }) => {
                check_n_sub(db, n_sub)?;
                Ok(random_db(db, n_sub, *rows, rng))
            }
        }
    }
}

fn check_n_sub(db: &Matrix, n_sub: usize) -> Result<()> {
    ensure!(
        n_sub >= 1 && n_sub < db.rows(),
        Domain,
        "sub-sample size {n_sub} must lie in 1..{} for a {}-row database",
        db.rows(),
        db.rows()
    );
    Ok(())
}

/// `n_sub − 1` rows drawn without replacement from the rows other than
/// `x_index`, plus row `x_index`, in random order. Returns the rows and
/// their source indices.
pub fn subsample_with(db: &Matrix, x_index: usize, n_sub: usize, rng: &mut SeededRng) -> Result<(Matrix, Vec<usize>)> {
    check_n_sub(db, n_sub)?;
    let mut idx: Vec<usize> = others(db, x_index, n_sub - 1, rng);
    idx.push(x_index);
    rng.shuffle(&mut idx);
    Ok((db.select_rows(&idx), idx))
}

/// `n_sub` rows drawn without replacement from the rows other than
/// `x_index`.
pub fn subsample_without(db: &Matrix, x_index: usize, n_sub: usize, rng: &mut SeededRng) -> Result<(Matrix, Vec<usize>)> {
    check_n_sub(db, n_sub)?;
    let idx = others(db, x_index, n_sub, rng);
    Ok((db.select_rows(&idx), idx))
}

fn others(db: &Matrix, x_index: usize, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    rng.sample_indices(db.rows() - 1, count).into_iter().map(|i| if i >= x_index { i + 1 } else { i }).collect()
}

/// A synthetic `rows × d` database.
pub fn random_db(source: &Matrix, rows: usize, kind: RandomRows, rng: &mut SeededRng) -> Matrix {
    let d = source.cols();
    match kind {
        RandomRows::Uniform => Matrix::uniform(rows, d, rng),
        RandomRows::ColumnMarginals => {
            let n = source.rows();
            Matrix::from_fn(rows, d, |_, j| source[(rng.below(n), j)])
        }
    }
}

/// Statistic values from one mechanism run.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub side: Side,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// All runs of a measurement. Stored as text: a header line
/// `# ksdp-samples v1 statistics=<name>,<name>,...` followed by one line
/// per run, `side,seed,value,value,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCache {
    pub statistics: Vec<String>,
    pub records: Vec<SampleRecord>,
}

const HEADER: &str = "# ksdp-samples v1 statistics=";

impl SampleCache {
    /// Values of statistic `stat` on `side`, in run order.
    pub fn values(&self, side: Side, stat: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.side == side).map(|r| r.values[stat]).collect()
    }

    /// KS p-value per statistic.
    pub fn p_values(&self) -> Result<Vec<f64>> {
        (0..self.statistics.len())
            .map(|s| ks_2sample_pvalue(&self.values(Side::With, s), &self.values(Side::Without, s)))
            .collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{HEADER}{}", self.statistics.join(","))?;
        for r in &self.records {
            write!(w, "{},{}", r.side.as_str(), r.seed)?;
            for v in &r.values {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let bad = |what: String| Error::Domain(format!("sample cache: {what}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| bad(e.to_string()))?;
        let names = header.strip_prefix(HEADER).ok_or_else(|| bad(format!("unrecognized header {header:?}")))?;
        let statistics: Vec<String> =
            if names.is_empty() { Vec::new() } else { names.split(',').map(str::to_string).collect() };
        let mut records = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            ensure!(
                fields.len() == 2 + statistics.len(),
                Domain,
                "sample cache line {}: expected {} fields, found {}",
                no + 2,
                2 + statistics.len(),
                fields.len()
            );
            let side = match fields[0] {
                "with" => Side::With,
                "without" => Side::Without,
                other => return Err(bad(format!("unknown side {other:?}"))),
            };
            let seed = fields[1].parse().map_err(|e| bad(format!("seed: {e}")))?;
            let values = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("value {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            records.push(SampleRecord { side, seed, values });
        }
        Ok(Self { statistics, records })
    }
}
