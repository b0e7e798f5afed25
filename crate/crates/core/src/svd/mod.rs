//! Truncated right singular vectors by block power iteration, centralized
//! and private distributed, plus distributed PCA and the downstream error
//! measures.

use crate::error::{ensure, Result};
use crate::linalg::{cholesky_solve, orthonormalize};
use crate::matrix::{norm2, DenseMatrix};
use crate::net::PartyHandle;
use crate::nss::{normed_secsum_batch, NssBackend, NssBudget, NssContext};
use crate::rng::SeededRng;
use crate::scalar::Real;
use crate::secsum::{secure_sum, SumPath};
use crate::Matrix;

/// Ridge added to the PCR normal equations when they are singular.
pub const PCR_RIDGE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvdConfig {
    /// Truncation rank.
    pub k: usize,
    /// Power iterations.
    pub tau: usize,
    /// Agreed seed for the random start.
    pub seed: u64,
    /// How the random start and the scale bound are summed.
    pub sum_path: SumPath,
    pub backend: NssBackend,
}

impl SvdConfig {
    pub fn new(k: usize, tau: usize, seed: u64) -> Self {
        Self { k, tau, seed, sum_path: SumPath::Float, backend: NssBackend::default() }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        ensure!(self.k >= 1 && self.k <= d, Parameter, "rank k = {} must lie in 1..={d}", self.k);
        ensure!(self.tau >= 1, Parameter, "need at least one power iteration");
        Ok(())
    }

    /// Offline material for a full [`pd_svd`] run in dimension `d`.
    pub fn nss_budget(&self, d: usize) -> Result<NssBudget> {
        Ok(self.backend.budget(&vec![d; self.k])?.times(self.tau))
    }
}

/// How [`pd_pca`] centers the data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Subtract the exact global column mean.
    #[default]
    Global,
    /// Subtract `(n_m/n)·Σ_i X_{i:}` as the distributed PCA listing prints
    /// it. Kept for comparison; it does not center the data.
    Literal,
}

/// One party's rows, its local covariance `S_m = X_mᵀX_m` and the replicated
/// iterate.
#[derive(Clone, Debug)]
pub struct PartySvdState {
    pub x: Matrix,
    pub s: Matrix,
    pub v: Matrix,
}

impl PartySvdState {
    pub fn new(x: Matrix) -> Result<Self> {
        let s = x.t_matmul(&x)?;
        Ok(Self { v: DenseMatrix::zeros(x.cols(), 0), x, s })
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// Block power iteration from a random `N(0, 1/d²)` start (standard
/// deviation `1/d`).
pub fn block_power_iteration<T: Real>(s: &DenseMatrix<T>, k: usize, tau: usize, rng: &mut SeededRng) -> Result<DenseMatrix<T>> {
    let d = s.rows();
    ensure!(k >= 1 && k <= d, Parameter, "rank k = {k} must lie in 1..={d}");
    let v0 = DenseMatrix::gaussian(d, k, T::one() / T::of(d as f64), rng)?;
    block_power_iteration_from(s, &v0, tau)
}

/// Block power iteration from `v0`: `τ` times, `V ← S·V`, normalize each
/// column, orthonormalize.
///
/// The column normalization does not change the result mathematically; it
/// mirrors what the distributed version reveals so both agree bit for bit
/// when run by a single party.
pub fn block_power_iteration_from<T: Real>(s: &DenseMatrix<T>, v0: &DenseMatrix<T>, tau: usize) -> Result<DenseMatrix<T>> {
    let d = s.rows();
    ensure!(s.cols() == d, Shape, "S is {:?}, expected square", s.shape());
    let scale = s.max_abs().max(T::one());
    ensure!(s.is_symmetric(T::of(1e-8) * scale), Domain, "power iteration needs a symmetric matrix");
    ensure!(v0.rows() == d, Shape, "start block has {} rows, expected {d}", v0.rows());
    let mut v = v0.clone();
    for _ in 0..tau {
        let mut y = s.matmul(&v)?;
        for j in 0..y.cols() {
            let mut col = y.column(j);
            let norm = norm2(&col);
            ensure!(norm > T::zero(), Degenerate, "column {j} of S·V vanished");
            col.iter_mut().for_each(|x| *x /= norm);
            y.set_column(j, &col);
        }
        v = orthonormalize(&y)?;
    }
    Ok(v)
}

/// Securely sums `‖S_m‖_F`, an upper bound on `‖Σ_m S_m‖₂`. Revealed as
/// `scale`.
pub fn scale_bound(net: &mut PartyHandle, my_s: &Matrix, path: &SumPath) -> Result<f64> {
    let s = secure_sum(net, "scale", &[my_s.frobenius_norm()], path)?[0];
    ensure!(s > 0.0, Degenerate, "all parties hold zero data");
    Ok(s)
}

/// Divides the party's covariance by the jointly computed [`scale_bound`]
/// so that `‖Σ_m S_m v‖₂ <= 1` for unit `v`. Returns the bound.
pub fn scale_inputs(net: &mut PartyHandle, state: &mut PartySvdState, path: &SumPath) -> Result<f64> {
    let s = scale_bound(net, &state.s, path)?;
    state.s = state.s.scale(1.0 / s);
    Ok(s)
}

/// Distributed block power iteration on `Σ_m S_m`. The random start is a
/// secure sum of per-party `N(0, 1/(M d²))` draws (revealed as `V0`); each
/// iteration reveals only the normalized columns of `Σ_m S_m V` (as
/// `V_{i}`), which every party orthonormalizes identically.
pub fn pd_svd(net: &mut PartyHandle, state: &mut PartySvdState, cfg: &SvdConfig, ctx: &mut NssContext) -> Result<Matrix> {
    let d = state.dim();
    cfg.validate(d)?;
    ensure!(state.s.shape() == (d, d), Shape, "S is {:?}, expected {d}x{d}", state.s.shape());
    let mut rng = SeededRng::new(cfg.seed, net.id().index() as u64);
    let stddev = 1.0 / ((net.parties() as f64).sqrt() * d as f64);
    let mine = DenseMatrix::gaussian(d, cfg.k, stddev, &mut rng)?;
    let v0 = secure_sum(net, "V0", mine.as_slice(), &cfg.sum_path)?;
    let mut v = DenseMatrix::from_vec(d, cfg.k, v0)?;
    for it in 0..cfg.tau {
        let y = state.s.matmul(&v)?;
        let cols: Vec<Vec<f64>> = (0..cfg.k).map(|j| y.column(j)).collect();
        let normalized = normed_secsum_batch(net, &format!("V_{it}"), &cols, ctx)?;
        let mut n = DenseMatrix::zeros(d, cfg.k);
        for (j, col) in normalized.iter().enumerate() {
            n.set_column(j, col);
        }
        v = orthonormalize(&n)?;
    }
    state.v = v.clone();
    Ok(v)
}

/// Distributed PCA: centers every party's rows with the jointly computed
/// column mean, rescales, and runs [`pd_svd`].
pub fn pd_pca(
    net: &mut PartyHandle,
    state: &mut PartySvdState,
    cfg: &SvdConfig,
    ctx: &mut NssContext,
    centering: Centering,
) -> Result<Matrix> {
    let n_m = state.x.rows() as f64;
    let n = secure_sum(net, "n", &[n_m], &cfg.sum_path)?[0];
    ensure!(n > 0.0, Degenerate, "no rows across parties");
    let sums = state.x.column_sums();
    let mu: Vec<f64> = match centering {
        Centering::Global => {
            let total = secure_sum(net, "column_sums", &sums, &cfg.sum_path)?;
            total.iter().map(|s| s / n).collect()
        }
        Centering::Literal => sums.iter().map(|s| n_m / n * s).collect(),
    };
    state.x = state.x.sub_row_vector(&mu)?;
    state.s = state.x.t_matmul(&state.x)?;
    scale_inputs(net, state, &cfg.sum_path)?;
    pd_svd(net, state, cfg, ctx)
}

/// `‖X − X V Vᵀ‖_F`.
pub fn lra_error<T: Real>(x: &DenseMatrix<T>, v: &DenseMatrix<T>) -> Result<T> {
    let projected = x.matmul(v)?.matmul(&v.transpose())?;
    Ok(x.sub(&projected)?.frobenius_norm())
}

/// Principal component regression: least squares of `y − mean(y)` on
/// `X V`. Falls back to a [`PCR_RIDGE`] ridge when `X V` is rank deficient.
pub fn pcr_fit<T: Real>(x: &DenseMatrix<T>, y: &[T], v: &DenseMatrix<T>) -> Result<Vec<T>> {
    ensure!(y.len() == x.rows(), Shape, "y has {} entries, X has {} rows", y.len(), x.rows());
    ensure!(!y.is_empty(), Shape, "no observations");
    let xh = x.matmul(v)?;
    let mean = y.iter().copied().sum::<T>() / T::of(y.len() as f64);
    let y0: Vec<T> = y.iter().map(|&v| v - mean).collect();
    let gram = xh.t_matmul(&xh)?;
    let rhs = xh.t_mul_vec(&y0)?;
    match cholesky_solve(&gram, &rhs) {
        Ok(beta) => Ok(beta),
        Err(_) => {
            let k = gram.rows();
            let ridged = DenseMatrix::from_fn(k, k, |i, j| gram[(i, j)] + if i == j { T::of(PCR_RIDGE) } else { T::zero() });
            cholesky_solve(&ridged, &rhs)
        }
    }
}

/// PCR predictions `X V β + mean(y_train)`.
pub fn pcr_predict<T: Real>(x: &DenseMatrix<T>, v: &DenseMatrix<T>, beta: &[T], y_mean: T) -> Result<Vec<T>> {
    Ok(x.matmul(v)?.mul_vec(beta)?.into_iter().map(|p| p + y_mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_axis() {
        let s = Matrix::from_rows(&[vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let v = block_power_iteration(&s, 1, 30, &mut SeededRng::new(1, 0)).unwrap();
        assert!(v[(0, 0)].abs() >= 1.0 - 1e-8);
    }

    #[test]
    fn asymmetric_rejected() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(block_power_iteration(&s, 1, 3, &mut SeededRng::new(1, 0)), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn lra_with_canonical_basis() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let expected = (4.0f64 + 9.0 + 25.0 + 36.0).sqrt();
        assert!((lra_error::<f64>(&x, &v).unwrap() - expected).abs() < 1e-12);
    }
}
