//! Private distributed matrix factorization over lightweight secure
//! aggregation.
//!
//! Parties holding row-partitions of a data matrix jointly compute NMF topics,
//! truncated right singular vectors or principal components while revealing
//! only sums ([`secsum`]) or normalized sums ([`nss`]) of local statistics.
//! The centralized solvers double as exactness oracles for the distributed
//! protocols, and [`ksdp`] measures empirical leakage of any mechanism with
//! Kolmogorov–Smirnov two-sample tests.
//!
//! Dense kernels are generic over [`Real`] (`f32`/`f64`); the protocol layers
//! exchange `f64` or fixed-point ring values.

mod error;
pub mod ksdp;
pub mod linalg;
mod matrix;
pub mod net;
pub mod nmf;
pub mod nss;
mod rng;
mod scalar;
pub mod secsum;
pub mod svd;

pub use error::{Error, Result};
pub use matrix::{dot, norm2, DenseMatrix};
pub use rng::SeededRng;
pub use scalar::Real;

/// Double-precision matrix, the carrier for all protocol data.
pub type Matrix = DenseMatrix<f64>;
/// Single-precision matrix for the centralized kernels.
pub type Matrix32 = DenseMatrix<f32>;
