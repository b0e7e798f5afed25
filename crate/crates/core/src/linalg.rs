//! Small dense linear-algebra routines: Gram–Schmidt, a Jacobi symmetric
//! eigensolver and Cholesky solves.

use crate::error::{ensure, Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Modified Gram–Schmidt on the columns of `v`.
///
/// Each output column is flipped so that its first nonzero component is
/// positive; eigenvectors are otherwise only defined up to sign.
pub fn orthonormalize<T: Real>(v: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let (n, k) = v.shape();
    ensure!(k <= n, Rank, "cannot orthonormalize {k} columns in dimension {n}");
    let mut cols: Vec<Vec<T>> = (0..k).map(|j| v.column(j)).collect();
    for j in 0..k {
        let original = crate::matrix::norm2(&cols[j]);
        let (done, rest) = cols.split_at_mut(j);
        let cur = &mut rest[0];
        for q in done.iter() {
            let r = dot(q, cur);
            for (c, &qi) in cur.iter_mut().zip(q) {
                *c -= r * qi;
            }
        }
        let norm = crate::matrix::norm2(cur);
        if !(norm > T::of(1e-10) * original) || norm == T::zero() {
            return Err(Error::Degenerate(format!("column {j} is linearly dependent on earlier columns")));
        }
        for c in cur.iter_mut() {
            *c /= norm;
        }
    }
    for col in &mut cols {
        canonicalize_sign(col);
    }
    let mut out = DenseMatrix::zeros(n, k);
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, col);
    }
    Ok(out)
}

/// Flips `v` so that its first nonzero entry is positive.
pub fn canonicalize_sign<T: Real>(v: &mut [T]) {
    if let Some(&first) = v.iter().find(|x| **x != T::zero()) {
        if first < T::zero() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Matching unit eigenvectors as columns, sign-canonicalized.
    pub vectors: DenseMatrix<T>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen<T: Real>(s: &DenseMatrix<T>) -> Result<SymmetricEigen<T>> {
    let n = s.rows();
    ensure!(s.cols() == n, Shape, "eigen of non-square {}x{}", n, s.cols());
    let scale = s.max_abs().max(T::min_positive_value());
    ensure!(s.is_symmetric(T::of(1e-8) * scale), Domain, "matrix is not symmetric");
    let mut a = s.clone();
    let mut v = DenseMatrix::<T>::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= eps * scale * T::of(1e-2) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let sn = t * c;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - sn * arq;
                    a[(r, q)] = sn * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - sn * aqr;
                    a[(q, r)] = sn * apr + c * aqr;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - sn * vrq;
                    v[(r, q)] = sn * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        canonicalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
pub fn cholesky_solve<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    ensure!(a.cols() == n && b.len() == n, Shape, "cholesky_solve {}x{} with rhs {}", n, a.cols(), b.len());
    let mut l = DenseMatrix::<T>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for p in 0..j {
                sum -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return Err(Error::Rank("matrix is not positive definite".into()));
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for p in 0..i {
            sum -= l[(i, p)] * y[p];
        }
        y[i] = sum / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for p in i + 1..n {
            sum -= l[(p, i)] * x[p];
        }
        x[i] = sum / l[(i, i)];
    }
    Ok(x)
}

/// Largest singular value of a symmetric PSD matrix by power iteration.
pub fn spectral_norm_psd<T: Real>(s: &DenseMatrix<T>, iters: usize) -> Result<T> {
    let n = s.rows();
    ensure!(s.cols() == n, Shape, "spectral norm of non-square matrix");
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::of(i as f64 * 1e-3)).collect();
    let mut lambda = T::zero();
    for _ in 0..iters {
        let w = s.mul_vec(&v)?;
        let norm = crate::matrix::norm2(&w);
        if norm == T::zero() {
            return Ok(T::zero());
        }
        lambda = norm / crate::matrix::norm2(&v);
        v = w.into_iter().map(|x| x / norm).collect();
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    type M = DenseMatrix<f64>;

    fn orth_error(q: &M) -> f64 {
        q.t_matmul(q).unwrap().sub(&M::identity(q.cols())).unwrap().max_abs()
    }

    fn projector(q: &M) -> M {
        q.matmul(&q.transpose()).unwrap()
    }

    #[test]
    fn hand_case_gram_schmidt() {
        let v = M::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let q = orthonormalize(&v).unwrap();
        assert!(q.max_abs_diff(&M::identity(2)).unwrap() <= 1e-15);
    }

    #[test]
    fn orthonormal_input_unchanged() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let v = M::from_rows(&[vec![c, c], vec![c, -c], vec![0.0, 0.0]]).unwrap();
        let q = orthonormalize(&v).unwrap();
        assert!(q.max_abs_diff(&v).unwrap() <= 1e-12);
    }

    #[test]
    fn fuzzed_orthonormality_and_span() {
        let mut rng = SeededRng::new(17, 0);
        for _ in 0..100 {
            let v = M::gaussian(12, 4, 1.0, &mut rng).unwrap();
            let q = orthonormalize(&v).unwrap();
            assert!(orth_error(&q) <= 1e-12);
            // Projector of span(v) computed through the normal equations.
            let gram = v.t_matmul(&v).unwrap();
            let mut p_oracle = M::zeros(12, 12);
            let inv_cols: Vec<Vec<f64>> = (0..4)
                .map(|j| {
                    let e: Vec<f64> = (0..4).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
                    cholesky_solve(&gram, &e).unwrap()
                })
                .collect();
            let mut gram_inv = M::zeros(4, 4);
            for (j, c) in inv_cols.iter().enumerate() {
                gram_inv.set_column(j, c);
            }
            let p = v.matmul(&gram_inv).unwrap().matmul(&v.transpose()).unwrap();
            p_oracle = p_oracle.add(&p).unwrap();
            assert!(projector(&q).max_abs_diff(&p_oracle).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn dependent_columns_rejected() {
        let v = M::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(orthonormalize(&v), Err(Error::Degenerate(_))));
    }

    #[test]
    fn jacobi_diagonal() {
        let s = M::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&s).unwrap();
        assert_eq!(e.values, vec![4.0, 2.0, 1.0]);
        assert_eq!(e.vectors.column(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = SeededRng::new(4, 0);
        let x = M::gaussian(20, 6, 1.0, &mut rng).unwrap();
        let s = x.t_matmul(&x).unwrap();
        let e = symmetric_eigen(&s).unwrap();
        let mut lam = M::zeros(6, 6);
        for i in 0..6 {
            lam[(i, i)] = e.values[i];
        }
        let rebuilt = e.vectors.matmul(&lam).unwrap().matmul(&e.vectors.transpose()).unwrap();
        assert!(rebuilt.max_abs_diff(&s).unwrap() <= 1e-10 * s.max_abs());
        assert!(orth_error(&e.vectors) <= 1e-12);
    }

    #[test]
    fn cholesky_solves() {
        let a = M::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-15 && (x[1] - 7.0 / 11.0).abs() < 1e-15);
        assert!(cholesky_solve(&M::zeros(2, 2), &[1.0, 1.0]).is_err());
    }
}
