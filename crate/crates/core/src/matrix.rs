//! Small symmetric matrices (`d <= 2`).

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::{Point, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    pub dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            m: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, s: f64) -> Self {
        let mut out = Self::zeros(dim);
        for k in 0..dim {
            out.m[k][k] = s;
        }
        out
    }

    pub fn diagonal(dim: usize, diag: &[f64]) -> Self {
        let mut out = Self::zeros(dim);
        for k in 0..dim {
            out.m[k][k] = diag[k];
        }
        out
    }

    /// Builds from the upper triangle and mirrors it.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = 0.5 * (rows[i][j] + rows[j][i]);
                out.m[i][j] = v;
                out.m[j][i] = v;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
        self.m[j][i] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.m[i][j] * v[j];
            }
        }
        out
    }

    /// `xi . M eta`
    pub fn bilinear(&self, xi: &Point, eta: &Point) -> f64 {
        let mv = self.mul_vec(eta);
        (0..self.dim).map(|k| xi[k] * mv[k]).sum()
    }

    pub fn quad(&self, xi: &Point) -> f64 {
        self.bilinear(xi, xi)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|k| self.m[k][k]).sum()
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.m[0][0]],
            _ => {
                let (a, b, c) = (self.m[0][0], self.m[0][1], self.m[1][1]);
                let mean = 0.5 * (a + c);
                let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                vec![mean - r, mean + r]
            }
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |a, e| a.max(e.abs()))
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.abs() < 1e-300 {
            return None;
        }
        let mut out = Self::zeros(self.dim);
        match self.dim {
            1 => out.m[0][0] = 1.0 / det,
            _ => {
                out.m[0][0] = self.m[1][1] / det;
                out.m[1][1] = self.m[0][0] / det;
                out.m[0][1] = -self.m[0][1] / det;
                out.m[1][0] = -self.m[1][0] / det;
            }
        }
        Some(out)
    }

    /// Lower Cholesky factor `L` with `L L^T = self`, for positive definite input.
    pub fn cholesky(&self) -> Option<[[f64; MAX_DIM]; MAX_DIM]> {
        let mut l = [[0.0; MAX_DIM]; MAX_DIM];
        if self.m[0][0] <= 0.0 {
            return None;
        }
        l[0][0] = self.m[0][0].sqrt();
        if self.dim == 2 {
            l[1][0] = self.m[1][0] / l[0][0];
            let rest = self.m[1][1] - l[1][0] * l[1][0];
            if rest <= 0.0 {
                return None;
            }
            l[1][1] = rest.sqrt();
        }
        Some(l)
    }

    /// `self * b * self`, symmetric for symmetric inputs.
    pub fn sandwich(&self, b: &Self) -> Self {
        let n = self.dim;
        let mut t = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..n {
            for j in 0..n {
                t[i][j] = (0..n).map(|k| self.m[i][k] * b.m[k][j]).sum();
            }
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| t[i][k] * self.m[k][j]).sum();
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| (self.m[i][j] - self.m[j][i]).abs() <= tol))
    }

    /// Entrywise max-abs difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) || rows.iter().any(|r| r.len() != dim) {
            return Err(serde::de::Error::custom("expected a square matrix of size 1 or 2"));
        }
        Ok(SymMatrix::from_rows(dim, &rows))
    }
}
