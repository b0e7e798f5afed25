//! Nonnegative matrix factorization `X ≈ WT`: the centralized RRI-NMF
//! solver and its private distributed counterpart.

mod pd;
mod rri;

pub use pd::{
    centralized_merge_init, dp_noised_pd_nmf, DEAD_TOPIC_SIGMAS, dp_sigma, pd_nmf, pd_nmf_init, pd_nmf_iter, DpNoise, PartyNmfState,
};
pub use rri::{
    best_fit_error, initial_w, nnls, nnls_fit, nnsvd_init, normalize_rows, objective, random_init, relative_change, residual,
    residual_from_product, rri_nmf, rri_nmf_observed, shrink, simplex_project, t_row_from_sums, update_t_row,
    update_w_column, NmfStep, DENOMINATOR_GUARD,
};

use crate::error::{ensure, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Real;

/// Sweeps allowed for the merge phase of distributed initialization.
pub const INIT_MAX_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NmfParams {
    pub k: usize,
    /// L1 weight on T.
    pub alpha: f64,
    /// Squared-Frobenius weight on T.
    pub beta: f64,
    /// L1 weight on W.
    pub gamma: f64,
    /// Squared-Frobenius weight on W.
    pub delta: f64,
    pub max_iters: usize,
    /// Stop once the relative Frobenius change of T in a sweep is below this.
    pub tol: f64,
    pub project_simplex: bool,
}

impl Default for NmfParams {
    fn default() -> Self {
        Self { k: 5, alpha: 0.0, beta: 0.0, gamma: 0.0, delta: 0.0, max_iters: 100, tol: 1e-6, project_simplex: true }
    }
}

impl NmfParams {
    pub fn new(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.k >= 1, Parameter, "rank k must be at least 1");
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            ensure!(v >= 0.0 && v.is_finite(), Parameter, "{name} must be a nonnegative number, got {v}");
        }
        ensure!(self.tol >= 0.0, Parameter, "tolerance must be nonnegative");
        Ok(())
    }

    /// Settings for the merge phase of distributed initialization: same
    /// regularization, longer run.
    pub fn init_phase(&self) -> Self {
        Self { max_iters: INIT_MAX_ITERS, tol: 1e-6, ..*self }
    }
}

/// Factors `W` (n×k) and `T` (k×d).
#[derive(Clone, Debug, PartialEq)]
pub struct NmfModel<T = f64> {
    pub w: DenseMatrix<T>,
    pub t: DenseMatrix<T>,
}

impl<T: Real> NmfModel<T> {
    pub fn objective(&self, x: &DenseMatrix<T>, params: &NmfParams) -> Result<T> {
        objective(x, &self.w, &self.t, params)
    }
}
