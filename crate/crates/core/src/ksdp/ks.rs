//! Empirical CDFs and the two-sample Kolmogorov–Smirnov test.

use crate::error::{ensure, Result};

/// Smallest sample size per side for which the asymptotic p-value is used.
pub const MIN_SAMPLES: usize = 8;

/// Empirical distribution function of a finite sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        ensure!(!samples.is_empty(), Domain, "ECDF of an empty sample");
        ensure!(samples.iter().all(|v| !v.is_nan()), Domain, "ECDF sample contains NaN");
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// `#{samples <= x} / n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// `sup_x |F(x) − G(x)|` over the merged sample points.
pub fn ks_statistic(f: &Ecdf, g: &Ecdf) -> f64 {
    let (a, b) = (f.samples(), g.samples());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// The Kolmogorov distribution tail `Q_KS(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²λ²}`,
/// clamped to `[0, 1]`. Below `λ = 1.18` the equivalent theta-function form
/// `1 − (√(2π)/λ) Σ_{j≥1} e^{−(2j−1)²π²/(8λ²)}` is summed instead, since the
/// alternating series converges slowly there.
pub fn q_ks(lambda: f64) -> f64 {
    use std::f64::consts::PI;
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let mut sum = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            let term = (-k * k * PI * PI / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
        }
        return (1.0 - (2.0 * PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic two-sample KS p-value with the usual small-sample correction
/// `λ = (√n_e + 0.12 + 0.11/√n_e)·D`.
pub fn ks_2sample_pvalue(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure!(
        a.len() >= MIN_SAMPLES && b.len() >= MIN_SAMPLES,
        Domain,
        "KS test needs at least {MIN_SAMPLES} samples per side, got {} and {}",
        a.len(),
        b.len()
    );
    let d = ks_statistic(&Ecdf::new(a)?, &Ecdf::new(b)?);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let root = ne.sqrt();
    Ok(q_ks((root + 0.12 + 0.11 / root) * d))
}
