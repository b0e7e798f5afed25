//! Centralized rank-one residual iteration NMF.

use crate::error::{ensure, Result};
use crate::linalg::symmetric_eigen;
use crate::matrix::{dot, norm2, DenseMatrix};
use crate::rng::SeededRng;
use crate::scalar::Real;

use super::{NmfModel, NmfParams};

/// Replaces a zero update denominator, which only arises for a dead topic.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// `0.5‖X−WT‖_F² + α‖T‖₁ + (β/2)‖T‖_F² + γ‖W‖₁ + (δ/2)‖W‖_F²`.
pub fn objective<T: Real>(x: &DenseMatrix<T>, w: &DenseMatrix<T>, t: &DenseMatrix<T>, params: &NmfParams) -> Result<T> {
    ensure!(
        w.rows() == x.rows() && t.cols() == x.cols() && w.cols() == t.rows(),
        Shape,
        "X is {:?}, W is {:?}, T is {:?}",
        x.shape(),
        w.shape(),
        t.shape()
    );
    let half = T::of(0.5);
    let fit = x.sub(&w.matmul(t)?)?.frobenius_norm_sq();
    Ok(half * fit
        + T::of(params.alpha) * t.l1_norm()
        + half * T::of(params.beta) * t.frobenius_norm_sq()
        + T::of(params.gamma) * w.l1_norm()
        + half * T::of(params.delta) * w.frobenius_norm_sq())
}

/// `R_t = X − Σ_{l≠t} W_{:l} T_{l:}` (topics are 0-based here).
pub fn residual<T: Real>(x: &DenseMatrix<T>, w: &DenseMatrix<T>, t: &DenseMatrix<T>, topic: usize) -> Result<DenseMatrix<T>> {
    check_factors(x, w, t, topic)?;
    let mut r = x.clone();
    for l in (0..t.rows()).filter(|&l| l != topic) {
        subtract_outer(&mut r, &w.column(l), t.row(l), T::one());
    }
    Ok(r)
}

/// The same residual written as `X − WT + W_{:t} T_{t:}`.
pub fn residual_from_product<T: Real>(
    x: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    t: &DenseMatrix<T>,
    topic: usize,
) -> Result<DenseMatrix<T>> {
    check_factors(x, w, t, topic)?;
    let mut r = x.sub(&w.matmul(t)?)?;
    subtract_outer(&mut r, &w.column(topic), t.row(topic), -T::one());
    Ok(r)
}

fn check_factors<T: Real>(x: &DenseMatrix<T>, w: &DenseMatrix<T>, t: &DenseMatrix<T>, topic: usize) -> Result<()> {
    ensure!(
        w.rows() == x.rows() && t.cols() == x.cols() && w.cols() == t.rows(),
        Shape,
        "X is {:?}, W is {:?}, T is {:?}",
        x.shape(),
        w.shape(),
        t.shape()
    );
    ensure!(topic < t.rows(), Shape, "topic {topic} out of range for rank {}", t.rows());
    Ok(())
}

/// `r −= s · u vᵀ`.
pub(crate) fn subtract_outer<T: Real>(r: &mut DenseMatrix<T>, u: &[T], v: &[T], s: T) {
    for (i, &ui) in u.iter().enumerate() {
        let c = s * ui;
        if c == T::zero() {
            continue;
        }
        for (x, &vj) in r.row_mut(i).iter_mut().zip(v) {
            *x -= c * vj;
        }
    }
}

/// `max(num − λ, 0) / (den + μ)` elementwise, guarding a zero denominator.
pub fn shrink<T: Real>(num: &[T], den: T, lambda: f64, mu: f64) -> Vec<T> {
    let mut denom = den + T::of(mu);
    if denom <= T::zero() {
        denom = T::of(DENOMINATOR_GUARD);
    }
    let lambda = T::of(lambda);
    num.iter().map(|&v| (v - lambda).max(T::zero()) / denom).collect()
}

/// `[R_t T_{t:}ᵀ − γ1_n]_+ / (‖T_{t:}‖₂² + δ)`.
pub fn update_w_column<T: Real>(r: &DenseMatrix<T>, t_row: &[T], gamma: f64, delta: f64) -> Result<Vec<T>> {
    let num = r.mul_vec(t_row)?;
    Ok(shrink(&num, dot(t_row, t_row), gamma, delta))
}

/// `[W_{:t}ᵀ R_t − α1_d]_+ / (‖W_{:t}‖₂² + β)`.
pub fn update_t_row<T: Real>(w_col: &[T], r: &DenseMatrix<T>, alpha: f64, beta: f64) -> Result<Vec<T>> {
    let num = r.t_mul_vec(w_col)?;
    Ok(shrink(&num, dot(w_col, w_col), alpha, beta))
}

/// Euclidean projection onto the probability simplex by sorting.
pub fn simplex_project<T: Real>(v: &[T]) -> Vec<T> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - T::one()) / T::of((i + 1) as f64);
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

/// Which factor an [`rri_nmf_observed`] callback has just seen updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NmfStep {
    WColumn(usize),
    TRow(usize),
}

/// The starting `W` for a given `T0`: `argmin_{W ≥ 0} ‖X − W T0‖_F`, so an
/// exact factorization is a fixed point.
pub fn initial_w<T: Real>(x: &DenseMatrix<T>, t0: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    Ok(nnls_fit(&x.cast(), &t0.cast())?.cast())
}

/// Runs RRI-NMF from `t0` until the relative Frobenius change of T falls
/// below `params.tol` or `params.max_iters` sweeps have run.
pub fn rri_nmf<T: Real>(x: &DenseMatrix<T>, params: &NmfParams, t0: &DenseMatrix<T>) -> Result<NmfModel<T>> {
    rri_nmf_observed(x, params, t0, |_, _| {})
}

/// [`rri_nmf`] calling `observe` after every factor update.
pub fn rri_nmf_observed<T: Real>(
    x: &DenseMatrix<T>,
    params: &NmfParams,
    t0: &DenseMatrix<T>,
    mut observe: impl FnMut(NmfStep, &NmfModel<T>),
) -> Result<NmfModel<T>> {
    params.validate()?;
    ensure!(x.is_nonnegative(), Domain, "NMF input must be nonnegative");
    ensure!(t0.is_nonnegative(), Domain, "initial T must be nonnegative");
    ensure!(
        t0.rows() == params.k && t0.cols() == x.cols(),
        Shape,
        "T0 is {:?}, expected {}x{}",
        t0.shape(),
        params.k,
        x.cols()
    );
    let w = initial_w(x, t0)?;
    let mut sweeper = Sweeper::new(x.clone(), &w, t0)?;
    let mut model = NmfModel { w, t: t0.clone() };
    for _ in 0..params.max_iters {
        let previous = model.t.clone();
        for topic in 0..params.k {
            let (num, den) = sweeper.local_step(&mut model.w, &model.t, topic, params)?;
            observe(NmfStep::WColumn(topic), &model);
            let row = t_row_from_sums(&num, den, params);
            sweeper.finish_step(&model.w, &row, topic);
            model.t.set_row(topic, &row);
            observe(NmfStep::TRow(topic), &model);
        }
        if relative_change(&model.t, &previous) < T::of(params.tol) {
            break;
        }
    }
    Ok(model)
}

/// The T-row update from the (possibly aggregated) sums `W_{:t}ᵀR_t` and
/// `‖W_{:t}‖²`, projected onto the simplex when enabled.
pub fn t_row_from_sums<T: Real>(num: &[T], den: T, params: &NmfParams) -> Vec<T> {
    let row = shrink(num, den, params.alpha, params.beta);
    if params.project_simplex {
        simplex_project(&row)
    } else {
        row
    }
}

/// `‖A − B‖_F / ‖B‖_F`, or the absolute change when `B` is zero.
pub fn relative_change<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> T {
    let diff = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt();
    let base = b.frobenius_norm();
    if base > T::zero() {
        diff / base
    } else {
        diff
    }
}

/// Incremental residual bookkeeping for one party's rows: keeps
/// `E = X − WT` so each topic costs `O(nd)`.
pub(crate) struct Sweeper<T> {
    error: DenseMatrix<T>,
    residual: DenseMatrix<T>,
}

impl<T: Real> Sweeper<T> {
    pub fn new(x: DenseMatrix<T>, w: &DenseMatrix<T>, t: &DenseMatrix<T>) -> Result<Self> {
        let error = x.sub(&w.matmul(t)?)?;
        Ok(Self { error, residual: DenseMatrix::zeros(0, 0) })
    }

    /// Forms `R_t`, updates `W_{:t}` in place and returns the local sums
    /// `W_{:t}ᵀR_t` and `‖W_{:t}‖²`.
    pub fn local_step(
        &mut self,
        w: &mut DenseMatrix<T>,
        t: &DenseMatrix<T>,
        topic: usize,
        params: &NmfParams,
    ) -> Result<(Vec<T>, T)> {
        self.residual = self.error.clone();
        subtract_outer(&mut self.residual, &w.column(topic), t.row(topic), -T::one());
        let col = update_w_column(&self.residual, t.row(topic), params.gamma, params.delta)?;
        w.set_column(topic, &col);
        let num = self.residual.t_mul_vec(&col)?;
        Ok((num, dot(&col, &col)))
    }

    /// Sets `E = R_t − W_{:t} T_{t:}` for the new row.
    pub fn finish_step(&mut self, w: &DenseMatrix<T>, new_row: &[T], topic: usize) {
        self.error = std::mem::replace(&mut self.residual, DenseMatrix::zeros(0, 0));
        subtract_outer(&mut self.error, &w.column(topic), new_row, T::one());
    }
}

/// Normalizes each row to sum 1; an all-zero row becomes uniform.
pub fn normalize_rows<T: Real>(m: &mut DenseMatrix<T>) {
    let d = m.cols();
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let s: T = row.iter().copied().sum();
        if s > T::zero() {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.iter_mut().for_each(|v| *v = T::one() / T::of(d as f64));
        }
    }
}

/// i.i.d. `U[0,1]` entries with rows normalized to sum 1.
pub fn random_init<T: Real>(k: usize, d: usize, rng: &mut SeededRng) -> DenseMatrix<T> {
    let mut t = DenseMatrix::uniform(k, d, rng);
    normalize_rows(&mut t);
    t
}

/// Nonnegative SVD-based initialization: the leading right singular vector
/// in absolute value, then for each further pair the dominant of its
/// positive and negative parts; rows normalized to sum 1.
pub fn nnsvd_init<T: Real>(x: &DenseMatrix<T>, k: usize) -> Result<DenseMatrix<T>> {
    ensure!(x.is_nonnegative(), Domain, "nnsvd needs a nonnegative matrix");
    let (n, d) = x.shape();
    ensure!(k >= 1 && k <= n.min(d), Rank, "rank {k} exceeds min(n, d) = {}", n.min(d));
    let (left, right) = top_singular_vectors(x, k)?;
    let mut t = DenseMatrix::zeros(k, d);
    for j in 0..k {
        let (u, v) = (&left[j], &right[j]);
        let row: Vec<T> = if j == 0 {
            v.iter().map(|x| x.abs()).collect()
        } else {
            let pos = |s: &[T]| s.iter().map(|&x| x.max(T::zero())).collect::<Vec<T>>();
            let neg = |s: &[T]| s.iter().map(|&x| (-x).max(T::zero())).collect::<Vec<T>>();
            let (up, un, vp, vn) = (pos(u), neg(u), pos(v), neg(v));
            if norm2(&up) * norm2(&vp) >= norm2(&un) * norm2(&vn) {
                vp
            } else {
                vn
            }
        };
        t.set_row(j, &row);
    }
    normalize_rows(&mut t);
    Ok(t)
}

/// Leading `k` singular vector pairs `(u_j, v_j)` through the eigen
/// decomposition of the smaller Gram matrix.
fn top_singular_vectors<T: Real>(x: &DenseMatrix<T>, k: usize) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> {
    let (n, d) = x.shape();
    let tiny = T::of(1e-300).max(T::min_positive_value());
    let mut us = Vec::with_capacity(k);
    let mut vs = Vec::with_capacity(k);
    if d <= n {
        let eig = symmetric_eigen(&x.t_matmul(x)?)?;
        for j in 0..k {
            let v = eig.vectors.column(j);
            let xv = x.mul_vec(&v)?;
            let s = norm2(&xv);
            us.push(if s > tiny { xv.iter().map(|&a| a / s).collect() } else { xv });
            vs.push(v);
        }
    } else {
        let eig = symmetric_eigen(&x.matmul(&x.transpose())?)?;
        for j in 0..k {
            let u = eig.vectors.column(j);
            let xu = x.t_mul_vec(&u)?;
            let s = norm2(&xu);
            vs.push(if s > tiny { xu.iter().map(|&a| a / s).collect() } else { xu });
            us.push(u);
        }
    }
    Ok((us, vs))
}

/// Nonnegative least squares `min_{w ≥ 0} ‖y − Aw‖₂` by the Lawson–Hanson
/// active-set method. `a` is `m×k`.
pub fn nnls(a: &DenseMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = a.shape();
    ensure!(y.len() == m, Shape, "right-hand side has {} entries, matrix has {m} rows", y.len());
    let gram = a.t_matmul(a)?;
    let aty = a.t_mul_vec(y)?;
    let scale = aty.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale * k.max(1) as f64;
    let mut x = vec![0.0; k];
    let mut passive = vec![false; k];
    let gradient = |x: &[f64]| -> Vec<f64> {
        let gx = gram.mul_vec(x).expect("square gram");
        aty.iter().zip(gx).map(|(a, g)| a - g).collect()
    };
    for _ in 0..3 * k + 10 {
        let g = gradient(&x);
        let candidate = (0..k).filter(|&i| !passive[i] && g[i] > tol).max_by(|&i, &j| g[i].total_cmp(&g[j]));
        let Some(enter) = candidate else { break };
        passive[enter] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z = solve_passive(&gram, &aty, &idx)?;
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in idx.iter().zip(&z) {
                    x[i] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &v) in idx.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - v));
                }
            }
            for (&i, &v) in idx.iter().zip(&z) {
                x[i] += alpha * (v - x[i]);
                if x[i] <= 1e-15 * scale {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Ok(x)
}

fn solve_passive(gram: &DenseMatrix<f64>, aty: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    let sub = DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| gram[(idx[i], idx[j])]);
    let rhs: Vec<f64> = idx.iter().map(|&i| aty[i]).collect();
    match crate::linalg::cholesky_solve(&sub, &rhs) {
        Ok(z) => Ok(z),
        Err(_) => {
            let ridge = 1e-12 * (0..idx.len()).map(|i| sub[(i, i)]).fold(1.0f64, f64::max);
            let reg = DenseMatrix::from_fn(idx.len(), idx.len(), |i, j| sub[(i, j)] + if i == j { ridge } else { 0.0 });
            crate::linalg::cholesky_solve(&reg, &rhs)
        }
    }
}

/// `W = argmin_{W ≥ 0} ‖Y − WZ‖_F`, one NNLS problem per row of `Y`.
pub fn nnls_fit(y: &DenseMatrix<f64>, z: &DenseMatrix<f64>) -> Result<DenseMatrix<f64>> {
    ensure!(y.cols() == z.cols(), Shape, "Y has {} columns, Z has {}", y.cols(), z.cols());
    let zt = z.transpose();
    let mut w = DenseMatrix::zeros(y.rows(), z.rows());
    for i in 0..y.rows() {
        w.set_row(i, &nnls(&zt, y.row(i))?);
    }
    Ok(w)
}

/// `E_Y(Z) = min_{W ≥ 0} 0.5‖Y − WZ‖_F²`.
pub fn best_fit_error(y: &DenseMatrix<f64>, z: &DenseMatrix<f64>) -> Result<f64> {
    let w = nnls_fit(y, z)?;
    Ok(0.5 * y.sub(&w.matmul(z)?)?.frobenius_norm_sq())
}
