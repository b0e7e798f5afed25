//! Adversary statistics for NMF and SVD outputs.

use crate::error::{ensure, Result};
use crate::linalg::spectral_norm_psd;
use crate::matrix::{dot, DenseMatrix};
use crate::Matrix;

/// Iteration cap for the box-constrained fit.
pub const BOX_FIT_ITERS: usize = 500;
/// Stop the box-constrained fit once no coordinate moves by more than this.
pub const BOX_FIT_TOL: f64 = 1e-8;

/// `argmin_{u ∈ [0,1]^k} ‖x − uT‖²` by projected gradient with step
/// `1/‖TTᵀ‖₂`.
pub fn box_fit(t: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    ensure!(t.cols() == x.len(), Shape, "T has {} columns, x has {} entries", t.cols(), x.len());
    let gram = t.matmul(&t.transpose())?;
    let tx = t.mul_vec(x)?;
    let lipschitz = spectral_norm_psd(&gram, 200)?;
    let k = t.rows();
    let mut u = vec![0.0; k];
    if lipschitz <= 0.0 {
        return Ok(u);
    }
    let step = 1.0 / lipschitz;
    for _ in 0..BOX_FIT_ITERS {
        let gu = gram.mul_vec(&u)?;
        let mut moved: f64 = 0.0;
        for j in 0..k {
            let next = (u[j] - step * (gu[j] - tx[j])).clamp(0.0, 1.0);
            moved = moved.max((next - u[j]).abs());
            u[j] = next;
        }
        if moved < BOX_FIT_TOL {
            break;
        }
    }
    Ok(u)
}

/// The weighted inner product `Σ_j a_j w_j²` of the document's box fit `a`
/// against the topic weights `w`.
pub fn nmf_statistic(t: &Matrix, w: &[f64], x: &[f64]) -> Result<f64> {
    ensure!(w.len() == t.rows(), Shape, "{} topic weights for {} topics", w.len(), t.rows());
    let a = box_fit(t, x)?;
    Ok(a.iter().zip(w).map(|(a, w)| a * w * w).sum())
}

/// Where the squared singular values used by [`svd_statistics`] come from.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaSource {
    /// The true global values.
    Revealed(Vec<f64>),
    /// An adversary holding `n_a` of the `n_v + n_a` rows scales up its own
    /// values by `(n_v + n_a)/n_a`.
    Estimated { n_v: usize, n_a: usize, sigma_a_sq: Vec<f64> },
}

impl SigmaSource {
    pub fn sigma_sq(&self) -> Result<Vec<f64>> {
        match self {
            SigmaSource::Revealed(s) => Ok(s.clone()),
            SigmaSource::Estimated { n_v, n_a, sigma_a_sq } => {
                ensure!(*n_a > 0, Parameter, "adversary must hold at least one row");
                let factor = (n_v + n_a) as f64 / *n_a as f64;
                Ok(sigma_a_sq.iter().map(|s| factor * s).collect())
            }
        }
    }
}

/// `Ŝ = V diag(σ²) Vᵀ`.
pub fn covariance_estimate(v: &Matrix, sigma_sq: &[f64]) -> Result<Matrix> {
    ensure!(sigma_sq.len() == v.cols(), Shape, "{} values for rank {}", sigma_sq.len(), v.cols());
    let scaled = DenseMatrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * sigma_sq[j]);
    scaled.matmul(&v.transpose())
}

fn reductions(values: impl Iterator<Item = f64>) -> [f64; 3] {
    values.fold([0.0f64, 0.0, 0.0], |[mx, s, sq], v| [mx.max(v), s + v, sq + v * v])
}

/// Max, sum and sum of squares of `|Ŝ ∘ xxᵀ|`.
pub fn svd_family_weighted(s_hat: &Matrix, x: &[f64]) -> Result<[f64; 3]> {
    let d = x.len();
    ensure!(s_hat.shape() == (d, d), Shape, "Ŝ is {:?}, x has {d} entries", s_hat.shape());
    Ok(reductions((0..d * d).map(|p| (s_hat[(p / d, p % d)] * x[p / d] * x[p % d]).abs())))
}

/// Max, sum and sum of squares of `|Ŝ/‖Ŝ‖_F − xxᵀ/‖x‖|`.
pub fn svd_family_distance(s_hat: &Matrix, x: &[f64]) -> Result<[f64; 3]> {
    let d = x.len();
    ensure!(s_hat.shape() == (d, d), Shape, "Ŝ is {:?}, x has {d} entries", s_hat.shape());
    let xn = dot(x, x).sqrt();
    ensure!(xn > 0.0, Domain, "distance statistics need a nonzero document");
    let sn = s_hat.frobenius_norm();
    ensure!(sn > 0.0, Degenerate, "estimated covariance is zero");
    Ok(reductions((0..d * d).map(|p| (s_hat[(p / d, p % d)] / sn - x[p / d] * x[p % d] / xn).abs())))
}

/// The six SVD statistics: the weighted family followed by the distance
/// family, each as (max, sum, sum of squares).
pub fn svd_statistics(v: &Matrix, sigma: &SigmaSource, x: &[f64]) -> Result<[f64; 6]> {
    let s_hat = covariance_estimate(v, &sigma.sigma_sq()?)?;
    let a = svd_family_weighted(&s_hat, x)?;
    let b = svd_family_distance(&s_hat, x)?;
    Ok([a[0], a[1], a[2], b[0], b[1], b[2]])
}

/// Names of the [`svd_statistics`] entries, in order.
pub const SVD_STATISTIC_NAMES: [&str; 6] =
    ["weighted_max", "weighted_sum", "weighted_sumsq", "distance_max", "distance_sum", "distance_sumsq"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_instance() {
        let v = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let s = covariance_estimate(&v, &[4.0]).unwrap();
        assert_eq!(svd_family_weighted(&s, &[1.0, 1.0]).unwrap(), [4.0, 4.0, 16.0]);
        assert_eq!(svd_family_weighted(&s, &[0.0, 0.0]).unwrap(), [0.0; 3]);
        assert!(svd_family_distance(&s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn estimation_factor() {
        let src = SigmaSource::Estimated { n_v: 30, n_a: 30, sigma_a_sq: vec![1.5, 0.25] };
        assert_eq!(src.sigma_sq().unwrap(), vec![3.0, 0.5]);
    }

    #[test]
    fn orthogonal_fit() {
        let t = DenseMatrix::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let a = box_fit(&t, &[0.5, 0.5, 0.0]).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-7 && a[1].abs() < 1e-12, "{a:?}");
        assert!((nmf_statistic(&t, &[2.0, 3.0], &[0.5, 0.5, 0.0]).unwrap() - 4.0).abs() < 1e-6);
        assert_eq!(nmf_statistic(&t, &[2.0, 3.0], &[0.0; 3]).unwrap(), 0.0);
    }
}
