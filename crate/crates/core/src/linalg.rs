//! Linear solvers: ridge-regularized dense Cholesky for Gram systems and
//! Jacobi-preconditioned conjugate gradients for large or sparse ones.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Above this dimension Gram systems are solved iteratively.
pub const DENSE_LIMIT: usize = 2000;

/// Relative ridge used when none is requested explicitly.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Solves `(A + eps * tr(A)/n * I) x = b` for symmetric positive
/// semi-definite `A`, for each right-hand side column of `b`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let shift = ridge * a.trace() / n as f64;
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += shift;
    }
    if n <= DENSE_LIMIT {
        if let Some(chol) = reg.clone().cholesky() {
            return Ok(chol.solve(b));
        }
        // one rescue attempt with a stronger ridge
        let rescue = 1e-8 * a.trace().abs().max(1e-300) / n as f64;
        for i in 0..n {
            reg[(i, i)] += rescue;
        }
        return reg.cholesky().map(|c| c.solve(b)).ok_or(Error::SingularSystem { dim: n });
    }
    let mut out = DMatrix::zeros(n, b.ncols());
    for c in 0..b.ncols() {
        let rhs: Vec<f64> = b.column(c).iter().copied().collect();
        let diag: Vec<f64> = (0..n).map(|i| reg[(i, i)]).collect();
        let x = conjugate_gradient(
            |x, y| {
                let v = &reg * DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            },
            &rhs,
            &diag,
            1e-12,
            20 * n,
        )?;
        out.set_column(c, &DVector::from_vec(x));
    }
    Ok(out)
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator given as
/// a matrix-vector closure. Stops when `|r| <= tol * |b|`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], diag: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem { dim: n });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = norm(&r);
        if rn <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            return Err(Error::NoConvergence {
                iterations: max_iter,
                residual: rn / bnorm,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compressed sparse row matrix assembled from triplets.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds an `n x n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1])
                    .find(|&k| self.indices[k] == i)
                    .map(|k| self.values[k])
                    .unwrap_or(0.0)
            })
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve_cg(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let diag = self.diagonal();
        conjugate_gradient(|x, y| self.matvec(x, y), b, &diag, tol, 50 * self.n + 100)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_cg_agree() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let b = DMatrix::from_fn(n, 1, |i, _| i as f64 - 2.0);
        let x = solve_spd(&a, &b, 0.0).unwrap();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        let y = conjugate_gradient(
            |x, y| {
                let v = &a * DVector::from_column_slice(x);
                y.copy_from_slice(v.as_slice());
            },
            b.column(0).as_slice(),
            &diag,
            1e-14,
            100,
        )
        .unwrap();
        for i in 0..n {
            assert!((x[(i, 0)] - y[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn csr_laplacian_solve() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        let m = Csr::from_triplets(n, t);
        let b = vec![1.0; n];
        let x = m.solve_cg(&b, 1e-12).unwrap();
        let mut r = vec![0.0; n];
        m.matvec(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_is_rescued_by_ridge() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(solve_spd(&a, &b, 1e-10).is_ok());
    }
}
