//! Uniform cubic B-spline bumps on a box-aligned grid.

use serde::{Deserialize, Serialize};

use crate::geometry::{Domain, Point, MAX_DIM};

/// Peak-normalized cubic B-spline on `[0, 4]`, maximum 1 at `u = 2`.
pub fn bump(u: f64) -> f64 {
    let v = if !(0.0..4.0).contains(&u) {
        0.0
    } else if u < 1.0 {
        u * u * u / 6.0
    } else if u < 2.0 {
        (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0
    } else if u < 3.0 {
        (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0
    } else {
        let w = 4.0 - u;
        w * w * w / 6.0
    };
    1.5 * v
}

pub fn bump_deriv(u: f64) -> f64 {
    let v = if !(0.0..4.0).contains(&u) {
        0.0
    } else if u < 1.0 {
        u * u / 2.0
    } else if u < 2.0 {
        (-9.0 * u * u + 24.0 * u - 12.0) / 6.0
    } else if u < 3.0 {
        (9.0 * u * u - 48.0 * u + 60.0) / 6.0
    } else {
        let w = 4.0 - u;
        -w * w / 2.0
    };
    1.5 * v
}

/// Tensor-product bumps `B_k(x) = prod_d bump((x_d - lower_d)/h - k_d)` for
/// `k_d` in `-3..cells`, i.e. every bump whose support meets the box.
/// Bumps with all `k_d` in `0..=cells-4` are supported inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub dim: usize,
    pub lower: Point,
    pub spacing: f64,
    pub cells: usize,
}

/// One bump active at a point: id, value, gradient.
#[derive(Debug, Clone, Copy)]
pub struct ActiveBump {
    pub id: usize,
    pub value: f64,
    pub grad: Point,
}

impl SplineGrid {
    /// Grid over the box `window` with spacing close to `target` and at least 4 cells.
    pub fn over(window: &Domain, target: f64) -> Self {
        let cells = ((window.side / target).round() as usize).max(4);
        Self {
            dim: window.dim,
            lower: window.lower,
            spacing: window.side / cells as f64,
            cells,
        }
    }

    fn per_dim(&self) -> usize {
        self.cells + 3
    }

    pub fn len(&self) -> usize {
        self.per_dim().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index `k` of bump `id`.
    pub fn index(&self, id: usize) -> [i64; MAX_DIM] {
        let n = self.per_dim();
        let mut k = [0i64; MAX_DIM];
        let mut rest = id;
        for kd in k.iter_mut().take(self.dim) {
            *kd = (rest % n) as i64 - 3;
            rest /= n;
        }
        k
    }

    fn id_of(&self, k: &[i64; MAX_DIM]) -> usize {
        let n = self.per_dim();
        let mut id = 0;
        for d in (0..self.dim).rev() {
            id = id * n + (k[d] + 3) as usize;
        }
        id
    }

    pub fn center(&self, id: usize) -> Point {
        let k = self.index(id);
        let mut c = [0.0; MAX_DIM];
        for d in 0..self.dim {
            c[d] = self.lower[d] + (k[d] as f64 + 2.0) * self.spacing;
        }
        c
    }

    /// Support inside the closed box, so the bump and its derivative vanish on the boundary.
    pub fn is_interior(&self, id: usize) -> bool {
        let k = self.index(id);
        (0..self.dim).all(|d| k[d] >= 0 && k[d] + 4 <= self.cells as i64)
    }

    pub fn value(&self, id: usize, x: &Point) -> f64 {
        let k = self.index(id);
        (0..self.dim)
            .map(|d| bump((x[d] - self.lower[d]) / self.spacing - k[d] as f64))
            .product()
    }

    /// Appends the bumps that are nonzero at `x` to `out`.
    pub fn active(&self, x: &Point, out: &mut Vec<ActiveBump>) {
        let mut vals = [[0.0; 4]; MAX_DIM];
        let mut ders = [[0.0; 4]; MAX_DIM];
        let mut first = [0i64; MAX_DIM];
        for d in 0..self.dim {
            let u = (x[d] - self.lower[d]) / self.spacing;
            let f = u.floor() as i64;
            first[d] = f - 3;
            for j in 0..4 {
                let k = first[d] + j as i64;
                vals[d][j] = bump(u - k as f64);
                ders[d][j] = bump_deriv(u - k as f64) / self.spacing;
            }
        }
        let hi = self.cells as i64 - 1;
        let valid = |k: i64| (-3..=hi).contains(&k);
        match self.dim {
            1 => {
                for j in 0..4 {
                    let k = first[0] + j as i64;
                    if valid(k) && vals[0][j] != 0.0 {
                        out.push(ActiveBump {
                            id: self.id_of(&[k, 0]),
                            value: vals[0][j],
                            grad: [ders[0][j], 0.0],
                        });
                    }
                }
            }
            _ => {
                for j1 in 0..4 {
                    let k1 = first[0] + j1 as i64;
                    if !valid(k1) || vals[0][j1] == 0.0 {
                        continue;
                    }
                    for j2 in 0..4 {
                        let k2 = first[1] + j2 as i64;
                        if !valid(k2) || vals[1][j2] == 0.0 {
                            continue;
                        }
                        out.push(ActiveBump {
                            id: self.id_of(&[k1, k2]),
                            value: vals[0][j1] * vals[1][j2],
                            grad: [ders[0][j1] * vals[1][j2], vals[0][j1] * ders[1][j2]],
                        });
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_and_linear_precision() {
        let w = Domain::centered_box(1, 3.0).unwrap();
        let g = SplineGrid::over(&w, 1.0 / 3.0);
        let mut act = Vec::new();
        for &x in &[-1.4, -0.3, 0.0, 0.77, 1.49] {
            act.clear();
            g.active(&[x, 0.0], &mut act);
            let sum: f64 = act.iter().map(|b| b.value).sum();
            let lin: f64 = act.iter().map(|b| b.value * g.center(b.id)[0]).sum();
            assert!((sum - 1.5).abs() < 1e-12);
            assert!((lin - 1.5 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_difference() {
        for i in 0..40 {
            let u = 0.05 + i as f64 * 0.1;
            let h = 1e-6;
            let fd = (bump(u + h) - bump(u - h)) / (2.0 * h);
            assert!((fd - bump_deriv(u)).abs() < 1e-8);
        }
        assert_eq!(bump(2.0), 1.0);
    }

    #[test]
    fn interior_bumps_vanish_at_boundary() {
        let w = Domain::centered_box(2, 3.0).unwrap();
        let g = SplineGrid::over(&w, 0.5);
        for id in (0..g.len()).filter(|&id| g.is_interior(id)) {
            assert_eq!(g.value(id, &[-1.5, 0.2]), 0.0);
            assert_eq!(g.value(id, &[0.3, 1.5]), 0.0);
        }
    }
}
