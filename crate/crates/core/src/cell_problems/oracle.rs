//! Brute-force cell problems in one dimension under the law conditioned on
//! at most `K <= 2` particles in the window.
//!
//! Given the window configuration, the coefficient is averaged over the
//! Poisson exterior in closed form, which leaves a deterministic variational
//! problem for the sector functions `v_1(x)` and `v_2(x, y)` on `U` and `U^2`.
//! These are discretized with P1 elements on a uniform grid (the square split
//! along its main diagonal, so the jumps of the coefficient on `|x - y| = 1`
//! fall on element edges when `1/h` is an integer).

use crate::configuration::truncated_poisson_pmf;
use crate::error::{invalid, Error, Result};
use crate::function_space::SectorGridFunctional;
use crate::geometry::{Domain, INTERACTION_RADIUS};
use crate::linalg::Csr;
use crate::model::{CoefficientModel, ModelKind};
use statrs::distribution::{DiscreteCDF, Poisson};

/// Which problem the oracle solves.
pub enum OracleMode<'a> {
    /// Minimization over `p x + v` with compatible zero-boundary sectors.
    Nu { p: f64 },
    /// Maximization over unconstrained sectors.
    NuStar { q: f64 },
    /// `E[grad V . a grad U] = E[V F]` for all zero-boundary `V`, with
    /// `F = sum f(x_i)`; the solution is centered.
    Source { f: &'a dyn Fn(f64) -> f64 },
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Normalized value (`nu`, `nu*`) or the minimal energy functional (source mode).
    pub value: f64,
    /// The sector functions (corrector for `Nu`, maximizer for `NuStar`, solution for `Source`).
    pub functional: SectorGridFunctional,
    pub expected_count: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SectorOracle {
    pub window: Domain,
    pub rho: f64,
    pub model: CoefficientModel,
    pub max_particles: usize,
    pub cells: usize,
}

/// `P(X >= k)` for `X ~ Poisson(mean)`.
fn poisson_tail(mean: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if mean <= 0.0 {
        return 0.0;
    }
    let p = Poisson::new(mean).expect("positive mean");
    1.0 - p.cdf(k as u64 - 1)
}

/// A difference quotient `(u_r - u_s) / h` in terms of unknowns; fixed
/// nodes (value zero) are dropped.
#[derive(Clone, Copy)]
struct Diff {
    r: Option<usize>,
    s: Option<usize>,
}

struct Assembly {
    h: f64,
    triplets: Vec<(usize, usize, f64)>,
    load: Vec<f64>,
    constant: f64,
}

impl Assembly {
    /// Adds `w d^2 + g d` with `d = (u_r - u_s)/h`.
    fn term(&mut self, d: Diff, w: f64, g: f64) {
        let (r, s) = match (d.r, d.s) {
            (Some(r), Some(s)) if r == s => return,
            other => other,
        };
        let k = 2.0 * w / (self.h * self.h);
        if let Some(r) = r {
            self.triplets.push((r, r, k));
            self.load[r] += g / self.h;
        }
        if let Some(s) = s {
            self.triplets.push((s, s, k));
            self.load[s] -= g / self.h;
        }
        if let (Some(r), Some(s)) = (r, s) {
            self.triplets.push((r, s, -k));
            self.triplets.push((s, r, -k));
        }
    }
}

const TRI_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

impl SectorOracle {
    /// Grid spacing `1/64` by default.
    pub fn new(window: Domain, rho: f64, model: CoefficientModel, max_particles: usize) -> Result<Self> {
        let cells = (window.side * 64.0).round() as usize;
        Self::with_cells(window, rho, model, max_particles, cells)
    }

    pub fn with_cells(window: Domain, rho: f64, model: CoefficientModel, max_particles: usize, cells: usize) -> Result<Self> {
        if window.dim != 1 || window.is_torus() {
            return Err(Error::Unsupported("the sector oracle handles one-dimensional boxes only".into()));
        }
        if !(1..=2).contains(&max_particles) {
            return Err(invalid("max_particles", "must be 1 or 2"));
        }
        if matches!(model.kind, ModelKind::SmoothCount { .. }) {
            return Err(Error::Unsupported(
                "no closed-form exterior average for the smooth-count model".into(),
            ));
        }
        if !(rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        let h = window.side / cells as f64;
        if cells < 4 || ((1.0 / h) - (1.0 / h).round()).abs() > 1e-9 {
            return Err(invalid("cells", "the spacing must divide the interaction radius"));
        }
        Ok(Self {
            window,
            rho,
            model,
            max_particles,
            cells,
        })
    }

    fn spacing(&self) -> f64 {
        self.window.side / self.cells as f64
    }

    fn node(&self, i: usize) -> f64 {
        self.window.lower[0] + i as f64 * self.spacing()
    }

    /// Coefficient at a particle at `x` averaged over the exterior Poisson
    /// configuration, given the other window particles.
    pub fn exterior_average(&self, x: f64, others: &[f64]) -> f64 {
        let lo = self.window.lower[0];
        let hi = lo + self.window.side;
        let excess = self.model.lambda - 1.0;
        let r = INTERACTION_RADIUS;
        match self.model.kind {
            ModelKind::Identity => 1.0,
            ModelKind::CountIndicator { threshold } => {
                let inside = 1 + others.iter().filter(|y| (*y - x).abs() < r).count();
                let ext = (x + r - hi).max(0.0) + (lo - (x - r)).max(0.0);
                let need = threshold.saturating_sub(inside);
                1.0 + excess * poisson_tail(self.rho * ext, need)
            }
            ModelKind::AnisotropicCount => {
                if others.iter().any(|y| *y > x && *y - x < r) {
                    self.model.lambda
                } else {
                    let ext = (x + r - hi).max(0.0);
                    1.0 + excess * (1.0 - (-self.rho * ext).exp())
                }
            }
            ModelKind::SmoothCount { .. } => unreachable!("rejected at construction"),
        }
    }

    pub fn sector_probabilities(&self) -> Vec<f64> {
        truncated_poisson_pmf(self.rho * self.window.side, self.max_particles)
    }

    pub fn solve(&self, mode: &OracleMode<'_>) -> Result<OracleSolution> {
        let n = self.cells;
        let h = self.spacing();
        let len = self.window.side;
        let probs = self.sector_probabilities();
        let z: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let constrained = !matches!(mode, OracleMode::NuStar { .. });
        let k2 = self.max_particles >= 2;
        let nn = n + 1;
        // unknown numbering
        let map1: Vec<Option<usize>> = if constrained {
            (0..nn).map(|i| (i > 0 && i < n).then(|| i - 1)).collect()
        } else {
            (0..nn).map(|i| (i > 0).then(|| i - 1)).collect()
        };
        let n1 = map1.iter().flatten().count();
        let mut map2: Vec<Option<usize>> = vec![None; if k2 { nn * nn } else { 0 }];
        let mut n2 = 0;
        if k2 {
            for j in 0..nn {
                for i in 0..nn {
                    let bi = i == 0 || i == n;
                    let bj = j == 0 || j == n;
                    map2[i + nn * j] = if constrained && (bi || bj) {
                        match (bi, bj) {
                            (true, true) => None,
                            (true, false) => map1[j],
                            _ => map1[i],
                        }
                    } else if !constrained && i == 0 && j == 0 {
                        None
                    } else {
                        n2 += 1;
                        Some(n1 + n2 - 1)
                    };
                }
            }
        }
        let total = n1 + n2;
        let mut asm = Assembly {
            h,
            triplets: Vec::new(),
            load: vec![0.0; total],
            constant: 0.0,
        };
        let (slope, q) = match mode {
            OracleMode::Nu { p } => (*p, 0.0),
            OracleMode::NuStar { q } => (0.0, *q),
            OracleMode::Source { .. } => (0.0, 0.0),
        };
        let source = match mode {
            OracleMode::Source { f } => Some(*f),
            _ => None,
        };
        // one-particle sector
        let w1 = probs.get(1).copied().unwrap_or(0.0) / len;
        for i in 0..n {
            let a_int: f64 = GAUSS2
                .iter()
                .map(|t| 0.5 * h * self.exterior_average(self.node(i) + t * h, &[]))
                .sum();
            let w = 0.5 * w1 * a_int;
            let d = Diff {
                r: map1[i + 1],
                s: map1[i],
            };
            let g = 2.0 * w * slope - w1 * q * h;
            asm.term(d, w, g);
            asm.constant += w * slope * slope;
            if let Some(f) = source {
                for t in GAUSS2 {
                    let fx = f(self.node(i) + t * h) * 0.5 * h * w1;
                    if let Some(r) = map1[i] {
                        asm.load[r] -= fx * (1.0 - t);
                    }
                    if let Some(r) = map1[i + 1] {
                        asm.load[r] -= fx * t;
                    }
                }
            }
        }
        // two-particle sector
        if k2 {
            let w2 = probs[2] / (len * len);
            let area = 0.5 * h * h;
            let id = |i: usize, j: usize| map2[i + nn * j];
            for j in 0..n {
                for i in 0..n {
                    let (x0, y0) = (self.node(i), self.node(j));
                    // lower triangle (i,j),(i+1,j),(i+1,j+1); upper (i,j),(i+1,j+1),(i,j+1)
                    let tris = [
                        (
                            [(x0, y0), (x0 + h, y0), (x0 + h, y0 + h)],
                            [id(i, j), id(i + 1, j), id(i + 1, j + 1)],
                            Diff {
                                r: id(i + 1, j),
                                s: id(i, j),
                            },
                            Diff {
                                r: id(i + 1, j + 1),
                                s: id(i + 1, j),
                            },
                        ),
                        (
                            [(x0, y0), (x0 + h, y0 + h), (x0, y0 + h)],
                            [id(i, j), id(i + 1, j + 1), id(i, j + 1)],
                            Diff {
                                r: id(i + 1, j + 1),
                                s: id(i, j + 1),
                            },
                            Diff {
                                r: id(i, j + 1),
                                s: id(i, j),
                            },
                        ),
                    ];
                    for (verts, ids, dx, dy) in tris {
                        let mut ax = 0.0;
                        let mut ay = 0.0;
                        for bary in TRI_BARY {
                            let x = (0..3).map(|v| bary[v] * verts[v].0).sum::<f64>();
                            let y = (0..3).map(|v| bary[v] * verts[v].1).sum::<f64>();
                            ax += area / 3.0 * self.exterior_average(x, &[y]);
                            ay += area / 3.0 * self.exterior_average(y, &[x]);
                            if let Some(f) = source {
                                let fx = (f(x) + f(y)) * area / 3.0 * w2;
                                for v in 0..3 {
                                    if let Some(r) = ids[v] {
                                        asm.load[r] -= fx * bary[v];
                                    }
                                }
                            }
                        }
                        for (d, a) in [(dx, ax), (dy, ay)] {
                            let w = 0.5 * w2 * a;
                            asm.term(d, w, 2.0 * w * slope - w2 * q * area);
                            asm.constant += w * slope * slope;
                        }
                    }
                }
            }
        }
        let k = Csr::from_triplets(total, asm.triplets);
        let rhs: Vec<f64> = asm.load.iter().map(|v| -v).collect();
        let c = if rhs.iter().all(|v| *v == 0.0) {
            vec![0.0; total]
        } else {
            k.solve_cg(&rhs, 1e-12)?
        };
        let half_fc = 0.5 * asm.load.iter().zip(&c).map(|(f, c)| f * c).sum::<f64>();
        let value = match mode {
            OracleMode::Nu { .. } => (asm.constant + half_fc) / z,
            OracleMode::NuStar { .. } => -half_fc / z,
            OracleMode::Source { .. } => asm.constant + half_fc,
        };
        let val = |m: Option<usize>| m.map_or(0.0, |u| c[u]);
        let mut sectors = vec![vec![0.0], map1.iter().map(|m| val(*m)).collect::<Vec<f64>>()];
        if k2 {
            sectors.push(map2.iter().map(|m| val(*m)).collect());
        }
        if source.is_some() {
            // E[V] with P1 quadrature: trapezoid in one dimension, vertex rule on triangles
            let mut mean = probs[0] * sectors[0][0];
            let trap: f64 = (0..nn)
                .map(|i| sectors[1][i] * if i == 0 || i == n { 0.5 } else { 1.0 })
                .sum::<f64>()
                * h;
            mean += probs[1] * trap / len;
            if k2 {
                let mut integral = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        let v = |a: usize, b: usize| sectors[2][a + nn * b];
                        integral += h * h / 6.0 * (2.0 * v(i, j) + v(i + 1, j) + 2.0 * v(i + 1, j + 1) + v(i, j + 1));
                    }
                }
                mean += probs[2] * integral / (len * len);
            }
            let total_p: f64 = probs.iter().sum();
            mean /= total_p;
            for s in sectors.iter_mut() {
                for v in s.iter_mut() {
                    *v -= mean;
                }
            }
        }
        Ok(OracleSolution {
            value,
            functional: SectorGridFunctional::from_sectors(&self.window, n, &sectors)?,
            expected_count: z,
            cells: n,
        })
    }
}
