//! Data ingestion, preprocessing, party partitioning and synthetic corpora.

use std::io::BufRead;
use std::path::Path;

use privdist::{Matrix, SeededRng};
use serde::{Deserialize, Serialize};

use crate::config::MatrixFormat;
use crate::error::{HarnessError, Result};

fn data_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Data(msg.into())
}

fn parse_entry(text: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| data_err(format!("line {line}, column {col}: cannot parse {:?} as a number", text.trim())))?;
    if v.is_nan() {
        return Err(data_err(format!("line {line}, column {col}: NaN entry")));
    }
    if v.is_infinite() {
        return Err(data_err(format!("line {line}, column {col}: infinite entry")));
    }
    Ok(v)
}

/// Reads a dense matrix from a headerless CSV file or a Matrix Market file.
/// Line and column numbers in errors are 1-based.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    match format {
        MatrixFormat::Csv => read_csv(reader),
        MatrixFormat::MatrixMarket => read_matrix_market(reader),
    }
}

pub fn read_csv(r: impl std::io::Read) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(format!("line {}: {e}", i + 1)))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec.iter().enumerate().map(|(j, f)| parse_entry(f, line, j + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(data_err(format!("line {line}: {} columns, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err("empty matrix file"));
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Coordinate (`real`, `integer` or `pattern`; `general` or `symmetric`)
/// and dense `array` Matrix Market files.
pub fn read_matrix_market(r: impl BufRead) -> Result<Matrix> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| data_err("empty matrix file"))?;
    let banner = banner.map_err(|e| data_err(e.to_string()))?.to_ascii_lowercase();
    let words: Vec<&str> = banner.split_whitespace().collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(data_err("line 1: not a Matrix Market matrix banner"));
    }
    let coordinate = match words[2] {
        "coordinate" => true,
        "array" => false,
        other => return Err(data_err(format!("line 1: unsupported layout {other}"))),
    };
    let pattern = match words[3] {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(data_err(format!("line 1: unsupported field {other}"))),
    };
    let symmetric = match words[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(data_err(format!("line 1: unsupported symmetry {other}"))),
    };

    let mut body = lines.filter_map(|(n, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('%') => None,
        Ok(l) => Some(Ok((n, l))),
        Err(e) => Some(Err(data_err(format!("line {n}: {e}")))),
    });
    let (n, size) = body.next().ok_or_else(|| data_err("missing size line"))??;
    let dims = size
        .split_whitespace()
        .enumerate()
        .map(|(j, t)| t.parse::<usize>().map_err(|_| data_err(format!("line {n}, column {}: bad size {t:?}", j + 1))))
        .collect::<Result<Vec<_>>>()?;
    let (rows, cols) = match (coordinate, dims.as_slice()) {
        (true, [r, c, _]) | (false, [r, c]) => (*r, *c),
        _ => return Err(data_err(format!("line {n}: malformed size line"))),
    };
    let mut m = Matrix::zeros(rows, cols);
    if coordinate {
        let nnz = dims[2];
        let mut seen = 0;
        for entry in body {
            let (n, l) = entry?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if toks.len() != want {
                return Err(data_err(format!("line {n}: expected {want} fields, found {}", toks.len())));
            }
            let idx = |j: usize, bound: usize| -> Result<usize> {
                match toks[j].parse::<usize>() {
                    Ok(v) if v >= 1 && v <= bound => Ok(v - 1),
                    _ => Err(data_err(format!("line {n}, column {}: bad index {:?}", j + 1, toks[j]))),
                }
            };
            let (i, j) = (idx(0, rows)?, idx(1, cols)?);
            let v = if pattern { 1.0 } else { parse_entry(toks[2], n, 3)? };
            m[(i, j)] = v;
            if symmetric {
                m[(j, i)] = v;
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(data_err(format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        let mut values = Vec::with_capacity(rows * cols);
        for entry in body {
            let (n, l) = entry?;
            values.push(parse_entry(&l, n, 1)?);
        }
        let expected = if symmetric { rows * (rows + 1) / 2 } else { rows * cols };
        if values.len() != expected {
            return Err(data_err(format!("expected {expected} entries, found {}", values.len())));
        }
        // Column-major; symmetric arrays list the lower triangle.
        let mut it = values.into_iter();
        for j in 0..cols {
            let start = if symmetric { j } else { 0 };
            for i in start..rows {
                let v = it.next().expect("count checked");
                m[(i, j)] = v;
                if symmetric {
                    m[(j, i)] = v;
                }
            }
        }
    }
    Ok(m)
}

pub fn require_nonnegative(x: &Matrix) -> Result<()> {
    for i in 0..x.rows() {
        if let Some(j) = x.row(i).iter().position(|&v| v < 0.0) {
            return Err(data_err(format!("row {}, column {}: negative entry in NMF input", i + 1, j + 1)));
        }
    }
    Ok(())
}

/// Term-frequency times smoothed inverse document frequency,
/// `idf_j = ln((1 + n)/(1 + df_j)) + 1`, computed from `x`'s own rows.
/// Applied per party this gives local IDF weights.
pub fn tfidf(x: &Matrix) -> Matrix {
    let n = x.rows() as f64;
    let idf: Vec<f64> = (0..x.cols())
        .map(|j| {
            let df = (0..x.rows()).filter(|&i| x[(i, j)] != 0.0).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] * idf[j])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    /// Parties receive pairwise disjoint rows.
    #[default]
    Disjoint,
    /// Each party samples its rows independently; parties may overlap.
    Independent,
}

/// Rows per party: `⌈fraction·n⌉`.
pub fn party_rows(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).ceil() as usize
}

/// Row indices for `parties` parties, each `⌈fraction·n⌉` rows drawn
/// without replacement. Disjoint parties whose fractions add up to the
/// whole corpus split every row between them, sizes differing by at most one.
pub fn partition_indices(
    n: usize,
    parties: usize,
    fraction: f64,
    mode: PartitionMode,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    let size = party_rows(n, fraction);
    if size == 0 || size > n {
        return Err(HarnessError::Config(format!("fraction {fraction} gives {size} rows out of {n}")));
    }
    match mode {
        PartitionMode::Disjoint => {
            if parties * size > n && fraction * parties as f64 <= 1.0 + 1e-9 && parties <= n {
                let all = rng.sample_indices(n, n);
                return Ok((0..parties).map(|m| all[m * n / parties..(m + 1) * n / parties].to_vec()).collect());
            }
            if parties * size > n {
                return Err(HarnessError::Config(format!(
                    "{parties} disjoint parties of {size} rows need {} rows, corpus has {n}",
                    parties * size
                )));
            }
            let all = rng.sample_indices(n, parties * size);
            Ok(all.chunks(size).map(<[usize]>::to_vec).collect())
        }
        PartitionMode::Independent => Ok((0..parties).map(|_| rng.sample_indices(n, size)).collect()),
    }
}

pub fn partition(x: &Matrix, parties: usize, fraction: f64, mode: PartitionMode, rng: &mut SeededRng) -> Result<Vec<Matrix>> {
    Ok(partition_indices(x.rows(), parties, fraction, mode, rng)?.iter().map(|idx| x.select_rows(idx)).collect())
}

/// `rows × cols` nonnegative corpus `W·T + noise` with `rank` sparse-ish
/// topics shared by all rows.
pub fn topic_corpus(rows: usize, cols: usize, rank: usize, noise: f64, rng: &mut SeededRng) -> Matrix {
    let topics = Matrix::uniform(rank, cols, rng).map(|v| v.powi(3));
    let weights = Matrix::uniform(rows, rank, rng).map(|v| v * v);
    let mut x = weights.matmul(&topics).expect("shapes agree");
    x.as_mut_slice().iter_mut().for_each(|v| *v += noise * rng.uniform());
    x
}

/// `rows × cols` Gaussian data concentrated near a shared `rank`-dimensional
/// subspace with decaying spread, plus isotropic noise.
pub fn shared_subspace(rows: usize, cols: usize, rank: usize, noise: f64, rng: &mut SeededRng) -> Matrix {
    let basis = privdist::linalg::orthonormalize(&Matrix::gaussian(cols, rank, 1.0, rng).expect("valid stddev"))
        .expect("random basis has full rank");
    let spread: Vec<f64> = (0..rank).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let coords = Matrix::from_fn(rows, rank, |_, j| spread[j] * rng.standard_normal());
    let mut x = coords.matmul(&basis.transpose()).expect("shapes agree");
    x.as_mut_slice().iter_mut().for_each(|v| *v += noise * rng.standard_normal());
    x
}
