use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::grid::GridFunction;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, Point, MAX_DIM};
use crate::matrix::SymMatrix;
use crate::report::{fmt_f64, CsvTable};

/// Fraction of the L^1 mass a box convolution may push outside the grid.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// Gaussian kernel of `d_t - (1/2) div(abar grad)`: covariance `abar t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub abar: SymMatrix,
    pub dim: usize,
}

impl HeatKernel {
    pub fn new(abar: SymMatrix) -> Result<Self> {
        let dim = abar.dim;
        if abar.det() <= 0.0 || abar.min_eigenvalue() <= 0.0 {
            return Err(invalid("abar", "must be positive definite"));
        }
        Ok(Self { abar, dim })
    }

    pub fn isotropic(dim: usize, a: f64) -> Result<Self> {
        Self::new(SymMatrix::scalar(dim, a))
    }

    pub fn density(&self, t: f64, x: &Point) -> Result<f64> {
        if !(t > 0.0) {
            return Err(invalid("t", "must be positive"));
        }
        let inv = self.abar.inverse().ok_or(Error::SingularSystem { dim: self.dim })?;
        let d = self.dim as f64;
        let norm = (2.0 * std::f64::consts::PI * t).powf(d / 2.0) * self.abar.det().sqrt();
        Ok((-inv.quad(x) / (2.0 * t)).exp() / norm)
    }

    /// Fourier multiplier `exp(-t k.abar k / 2)`.
    fn symbol(&self, t: f64, k: &Point) -> f64 {
        (-0.5 * t * self.abar.quad(k)).exp()
    }
}

pub fn heat_kernel(hk: &HeatKernel, t: f64, x: &Point) -> Result<f64> {
    hk.density(t, x)
}

fn fft_axis(data: &mut [Complex<f64>], n: [usize; 2], axis: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let len = n[axis];
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    if axis == 0 {
        for row in data.chunks_mut(len) {
            fft.process(row);
        }
    } else {
        let mut col = vec![Complex::new(0.0, 0.0); len];
        for i in 0..n[0] {
            for j in 0..len {
                col[j] = data[i + n[0] * j];
            }
            fft.process(&mut col);
            for j in 0..len {
                data[i + n[0] * j] = col[j];
            }
        }
    }
}

/// Periodic heat semigroup on an `n[0] x n[1]` array of spacing `h`.
fn periodic_flow(values: &[f64], n: [usize; 2], dim: usize, h: f64, t: f64, hk: &HeatKernel) -> Vec<f64> {
    let mut data: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    for axis in 0..dim {
        fft_axis(&mut data, n, axis, false);
    }
    let freq = |j: usize, len: usize| {
        let s = if j <= len / 2 { j as f64 } else { j as f64 - len as f64 };
        2.0 * std::f64::consts::PI * s / (len as f64 * h)
    };
    for (idx, c) in data.iter_mut().enumerate() {
        let mut k = [0.0; MAX_DIM];
        k[0] = freq(idx % n[0], n[0]);
        if dim == 2 {
            k[1] = freq(idx / n[0], n[1]);
        }
        *c *= hk.symbol(t, &k);
    }
    for axis in 0..dim {
        fft_axis(&mut data, n, axis, true);
    }
    let scale = (n[0] * if dim == 2 { n[1] } else { 1 }) as f64;
    data.iter().map(|c| c.re / scale).collect()
}

/// `Psi_t * g`, exact for trigonometric interpolants on a torus. On a box
/// the function is zero-extended and padded; returns the fraction of L^1
/// mass that left the box along with the result.
pub fn apply_homog_semigroup_with(g: &GridFunction, t: f64, hk: &HeatKernel, tol: f64) -> Result<(GridFunction, f64)> {
    if t < 0.0 {
        return Err(invalid("t", "must be nonnegative"));
    }
    if hk.dim != g.dim() {
        return Err(Error::Inconsistent("kernel and grid dimensions differ".into()));
    }
    if t == 0.0 {
        return Ok((g.clone(), 0.0));
    }
    let dim = g.dim();
    let h = g.spacing();
    let mut out = g.clone();
    out.zero_boundary = false;
    if g.domain.is_torus() {
        let n = [g.cells, if dim == 2 { g.cells } else { 1 }];
        out.values = periodic_flow(&g.values, n, dim, h, t, hk);
        return Ok((out, 0.0));
    }
    let sigma = (hk.abar.max_eigenvalue() * t).sqrt();
    let pad = (8.0 * sigma / h).ceil() as usize + 1;
    let inner = g.per_axis();
    let len = inner + 2 * pad;
    let n = [len, if dim == 2 { len } else { 1 }];
    let mut big = vec![0.0; n[0] * n[1]];
    for k in 0..g.len() {
        let [i, j] = g.multi_index(k);
        let jj = if dim == 2 { j + pad } else { 0 };
        big[i + pad + len * jj] = g.values[k];
    }
    let flowed = periodic_flow(&big, n, dim, h, t, hk);
    let mut outside = 0.0;
    for (idx, v) in flowed.iter().enumerate() {
        let (i, j) = (idx % len, idx / len);
        let inside_i = (pad..pad + inner).contains(&i);
        let inside_j = dim == 1 || (pad..pad + inner).contains(&j);
        if !(inside_i && inside_j) {
            outside += v.abs();
        }
    }
    let mass: f64 = g.values.iter().map(|v| v.abs()).sum();
    for k in 0..g.len() {
        let [i, j] = g.multi_index(k);
        let jj = if dim == 2 { j + pad } else { 0 };
        out.values[k] = flowed[i + pad + len * jj];
    }
    let lost = if mass > 0.0 { outside / mass } else { 0.0 };
    if lost > tol {
        return Err(Error::Truncation {
            error: lost,
            tolerance: tol,
        });
    }
    Ok((out, lost))
}

pub fn apply_homog_semigroup(g: &GridFunction, t: f64, hk: &HeatKernel) -> Result<GridFunction> {
    apply_homog_semigroup_with(g, t, hk, TRUNCATION_TOL).map(|(out, _)| out)
}

/// `sqrt(t) ||grad(Psi_t * g)|| / ||g||`, the measured constant of the
/// first-order heat-kernel smoothing estimate.
pub fn smoothing_constant(g: &GridFunction, t: f64, hk: &HeatKernel) -> Result<f64> {
    let norm = g.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(t.sqrt() * apply_homog_semigroup(g, t, hk)?.gradient_l2() / norm)
}

/// `rho int int f(x) Psi_{lag}(x - y) g(y) dx dy`; `rho int f g` at lag 0.
pub fn two_point_prediction(f: &GridFunction, g: &GridFunction, lag: f64, hk: &HeatKernel, rho: f64) -> Result<f64> {
    if lag < 0.0 {
        return Err(invalid("lag", "t - s must be nonnegative"));
    }
    let flowed = apply_homog_semigroup(g, lag, hk)?;
    Ok(rho * f.inner(&flowed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub lag: f64,
    pub value: f64,
    /// Richardson estimate from the grid coarsened by two; NaN if unavailable.
    pub quadrature_error: f64,
}

pub fn prediction_table(f: &GridFunction, g: &GridFunction, lags: &[f64], hk: &HeatKernel, rho: f64) -> Result<Vec<PredictionRow>> {
    let coarse = f.coarsened().ok().zip(g.coarsened().ok());
    lags.iter()
        .map(|&lag| {
            let value = two_point_prediction(f, g, lag, hk, rho)?;
            let quadrature_error = match &coarse {
                Some((fc, gc)) => (value - two_point_prediction(fc, gc, lag, hk, rho)?).abs() / 3.0,
                None => f64::NAN,
            };
            Ok(PredictionRow {
                lag,
                value,
                quadrature_error,
            })
        })
        .collect()
}

pub fn prediction_csv(rows: &[PredictionRow], domain: &Domain, rho: f64) -> CsvTable {
    let mut t = CsvTable::new(&["t_minus_s", "value", "quadrature_error"])
        .meta("d", domain.dim)
        .meta("side", fmt_f64(domain.side))
        .meta("rho", fmt_f64(rho));
    for r in rows {
        t.push(vec![fmt_f64(r.lag), fmt_f64(r.value), fmt_f64(r.quadrature_error)]);
    }
    t
}
