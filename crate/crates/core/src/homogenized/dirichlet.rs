use super::grid::GridFunction;
use crate::error::{invalid, Error, Result};
use crate::linalg::Csr;
use crate::matrix::SymMatrix;

/// Discrete solution of `-div(abar grad u) = f` with `u = 0` on the boundary.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub solution: GridFunction,
    /// `||grad u||_{L^2}` of the interpolant.
    pub h1_seminorm: f64,
    /// `||grad^2 u||_{L^2}` from second differences at interior nodes.
    pub h2_seminorm: f64,
    /// `||L_h u - f|| / ||f||` over interior nodes.
    pub relative_residual: f64,
}

/// Five-point (nine-point when `abar` has an off-diagonal entry) central
/// difference stencil of `-div(abar grad)` at interior node `(i, j)`.
fn stencil(abar: &SymMatrix, dim: usize, h: f64) -> Vec<([isize; 2], f64)> {
    let h2 = h * h;
    let mut s = Vec::new();
    let a11 = abar.get(0, 0);
    s.push(([-1, 0], -a11 / h2));
    s.push(([1, 0], -a11 / h2));
    let mut center = 2.0 * a11 / h2;
    if dim == 2 {
        let a22 = abar.get(1, 1);
        let a12 = abar.get(0, 1);
        s.push(([0, -1], -a22 / h2));
        s.push(([0, 1], -a22 / h2));
        center += 2.0 * a22 / h2;
        if a12 != 0.0 {
            let c = a12 / (2.0 * h2);
            s.push(([1, 1], -c));
            s.push(([-1, -1], -c));
            s.push(([1, -1], c));
            s.push(([-1, 1], c));
        }
    }
    s.push(([0, 0], center));
    s
}

pub fn solve_homog_dirichlet(f: &GridFunction, abar: &SymMatrix) -> Result<DirichletSolution> {
    if f.domain.is_torus() {
        return Err(Error::Unsupported("the Dirichlet problem lives on a box".into()));
    }
    let dim = f.dim();
    if abar.dim != dim {
        return Err(Error::Inconsistent("matrix and grid dimensions differ".into()));
    }
    if abar.min_eigenvalue() <= 0.0 {
        return Err(invalid("abar", "must be positive definite"));
    }
    let n = f.cells;
    let h = f.spacing();
    let interior = n - 1;
    let unknown = |idx: [usize; 2]| -> Option<usize> {
        let inside = |i: usize| i >= 1 && i <= interior;
        if !inside(idx[0]) || (dim == 2 && !inside(idx[1])) {
            return None;
        }
        Some(if dim == 1 {
            idx[0] - 1
        } else {
            (idx[0] - 1) + interior * (idx[1] - 1)
        })
    };
    let total = interior.pow(dim as u32);
    let st = stencil(abar, dim, h);
    let mut triplets = Vec::with_capacity(total * st.len());
    let mut rhs = vec![0.0; total];
    for k in 0..f.len() {
        let idx = f.multi_index(k);
        let Some(row) = unknown(idx) else { continue };
        rhs[row] = f.values[k];
        for (off, w) in &st {
            let ni = idx[0] as isize + off[0];
            let nj = idx[1] as isize + off[1];
            if let Some(col) = unknown([ni as usize, nj as usize]) {
                triplets.push((row, col, *w));
            }
        }
    }
    let a = Csr::from_triplets(total, triplets);
    let c = if rhs.iter().all(|v| *v == 0.0) {
        vec![0.0; total]
    } else {
        a.solve_cg(&rhs, 1e-13)?
    };
    let mut u = GridFunction::zeros(f.domain, n)?;
    for k in 0..u.len() {
        if let Some(row) = unknown(u.multi_index(k)) {
            u.values[k] = c[row];
        }
    }
    u.zero_boundary = true;

    let mut ac = vec![0.0; total];
    a.matvec(&c, &mut ac);
    let rnorm = ac.iter().zip(&rhs).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let fnorm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let relative_residual = if fnorm > 0.0 { rnorm / fnorm } else { rnorm };

    let hd = h.powi(dim as i32);
    let at = |i: usize, j: usize| u.values[u.index([i, j])];
    let mut h2 = 0.0;
    for k in 0..u.len() {
        let [i, j] = u.multi_index(k);
        if unknown([i, j]).is_none() {
            continue;
        }
        let dxx = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / (h * h);
        let mut s = dxx * dxx;
        if dim == 2 {
            let dyy = (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (h * h);
            let dxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h * h);
            s += dyy * dyy + 2.0 * dxy * dxy;
        }
        h2 += hd * s;
    }
    Ok(DirichletSolution {
        h1_seminorm: u.gradient_l2(),
        h2_seminorm: h2.sqrt(),
        relative_residual,
        solution: u,
    })
}
