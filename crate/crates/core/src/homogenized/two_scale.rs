use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::GridFunction;
use crate::cell_problems::{CellSolution, ProblemKind};
use crate::configuration::{sample_poisson, translate_restrict, Configuration, Region};
use crate::error::{invalid, Error, Result};
use crate::function_space::{ConfigFunctional, FeatureFunctional, LinearStatistic};
use crate::geometry::{mesoscopic_centers, Point, MAX_DIM};
use crate::par::{map_indexed, Exec};
use crate::rng::RandomStream;
use crate::stats::EstimatorResult;

/// `sum_x g(x) - rho int g`: centered under the Poisson law by Campbell's formula.
pub fn lift_linear_statistic(g: &GridFunction, rho: f64) -> LinearStatistic {
    let offset = rho * g.integral();
    let (gv, gg) = (Arc::new(g.clone()), Arc::new(g.clone()));
    let stat = LinearStatistic::new(move |x| gv.value_at(x), move |x| gg.gradient_at(x)).centered_by(offset);
    if g.domain.is_torus() {
        stat
    } else {
        stat.within(g.domain)
    }
}

/// Rejects sources with `int f != 0` (relative to `int |f|`).
pub fn check_centering(f: &GridFunction, tol: f64) -> Result<()> {
    let integral = f.integral();
    let scale: f64 = (0..f.len()).map(|k| f.weight(k) * f.values[k].abs()).sum();
    if integral.abs() > tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Centering { integral });
    }
    Ok(())
}

/// Where the exponent used to pick a mesoscale came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSource {
    Estimated,
    Override,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesoscale {
    pub n: u32,
    pub alpha: f64,
    pub source: AlphaSource,
}

/// `n = floor(m / (1 + alpha))`.
pub fn elliptic_mesoscale(m: u32, alpha: f64, source: AlphaSource) -> Result<Mesoscale> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", "must be a nonnegative number"));
    }
    Ok(Mesoscale {
        n: (m as f64 / (1.0 + alpha)).floor() as u32,
        alpha,
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicParameters {
    pub t: f64,
    pub tau: f64,
    pub n: u32,
    /// `min(alpha, 1) / 16`, the exponent of the resulting rate.
    pub beta: f64,
}

/// `tau = t^{3/4}` and `3^n ~ t^{1/16}`; `n` is clamped at zero for `t < 1`.
pub fn parabolic_parameters(t: f64, alpha: f64) -> Result<ParabolicParameters> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    let n = (t.ln() / (16.0 * 3f64.ln())).round().max(0.0) as u32;
    Ok(ParabolicParameters {
        t,
        tau: t.powf(0.75),
        n,
        beta: alpha.min(1.0) / 16.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTerm {
    pub center: Point,
    /// Cell average of `grad u` over `center + cube_n`.
    pub slopes: Point,
}

/// `lift(u) + sum_z sum_i (d_i u)_z phi_{e_i, z + cube_n}`.
pub struct TwoScaleExpansion {
    pub lift: LinearStatistic,
    pub m: u32,
    pub n: u32,
    pub cells: Vec<CellTerm>,
    correctors: Vec<FeatureFunctional>,
    pub zero_boundary: bool,
}

impl std::fmt::Debug for TwoScaleExpansion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoScaleExpansion")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("cells", &self.cells)
            .finish_non_exhaustive()
    }
}

/// `(1/|cell|) int_cell d_a u`, exact for the multilinear interpolant when
/// the cell faces lie on grid lines.
fn cell_slope(u: &GridFunction, center: &Point, side: f64, a: usize) -> Result<f64> {
    let h = u.spacing();
    let steps = side / h;
    let offset = (center[a] - side / 2.0 - u.domain.lower[a]) / h;
    if (steps - steps.round()).abs() > 1e-8 || (offset - offset.round()).abs() > 1e-8 {
        return Err(invalid("grid", "mesoscopic cells must be aligned with the grid"));
    }
    let lo = center[a] - side / 2.0;
    let at = |b: f64| {
        let mut x = *center;
        x[a] = b;
        x
    };
    if u.dim() == 1 {
        return Ok((u.value_at(&at(lo + side)) - u.value_at(&at(lo))) / side);
    }
    let o = 1 - a;
    let k = steps.round() as usize;
    let mut s = 0.0;
    for j in 0..=k {
        let w = if j == 0 || j == k { 0.5 } else { 1.0 };
        let mut hi_pt = at(lo + side);
        let mut lo_pt = at(lo);
        let y = center[o] - side / 2.0 + j as f64 * h;
        hi_pt[o] = y;
        lo_pt[o] = y;
        // points on the far face of a torus wrap; on a box they sit on the boundary
        s += w * h * (u.value_at(&hi_pt) - u.value_at(&lo_pt));
    }
    Ok(s / (side * side))
}

/// Assembles `W` (or `G_t` for a time slice) from the homogenized solution
/// `u` on the cube of index `m` and the minimization correctors on `cube_n`
/// along each unit direction.
pub fn build_two_scale(u: &GridFunction, rho: f64, m: u32, n: u32, correctors: &[CellSolution]) -> Result<TwoScaleExpansion> {
    let dim = u.dim();
    let side = 3f64.powi(m as i32);
    if n > m {
        return Err(invalid("n", "mesoscale exceeds the cube index"));
    }
    if (u.domain.side - side).abs() > 1e-9 * side {
        return Err(Error::Inconsistent(format!("grid side {} is not 3^{m}", u.domain.side)));
    }
    let cell_side = 3f64.powi(n as i32);
    let mut by_direction = Vec::with_capacity(dim);
    for i in 0..dim {
        let sol = correctors
            .iter()
            .find(|c| {
                c.kind == ProblemKind::Nu
                    && c.dim == dim
                    && (0..dim).all(|k| (c.direction[k] - if k == i { 1.0 } else { 0.0 }).abs() < 1e-12)
            })
            .ok_or(Error::MissingCorrector { direction: i })?;
        let w = sol.sample_set.window;
        if (w.side - cell_side).abs() > 1e-9 * cell_side {
            return Err(Error::Inconsistent(format!(
                "corrector for e_{i} lives on a cell of side {}",
                w.side
            )));
        }
        by_direction.push(sol.corrector());
    }
    let origin = u.domain.center();
    let mut cells = Vec::new();
    let mut combined = Vec::new();
    for z in mesoscopic_centers(m, n, dim) {
        let mut center = [0.0; MAX_DIM];
        for k in 0..dim {
            center[k] = origin[k] + z[k];
        }
        let mut slopes = [0.0; MAX_DIM];
        for (a, s) in slopes.iter_mut().enumerate().take(dim) {
            *s = cell_slope(u, &center, cell_side, a)?;
        }
        let mut f = by_direction[0].clone();
        for c in f.coefficients.iter_mut() {
            *c *= slopes[0];
        }
        for (i, phi) in by_direction.iter().enumerate().skip(1) {
            for (c, ci) in f.coefficients.iter_mut().zip(&phi.coefficients) {
                *c += slopes[i] * ci;
            }
        }
        f.offset = 0.0;
        cells.push(CellTerm { center, slopes });
        combined.push(f);
    }
    Ok(TwoScaleExpansion {
        lift: lift_linear_statistic(u, rho),
        m,
        n,
        cells,
        correctors: combined,
        zero_boundary: u.zero_boundary,
    })
}

/// One expansion per time slice, with the mesoscale from [`parabolic_parameters`]
/// (capped at `m`).
pub fn build_two_scale_parabolic(
    family: &[(f64, GridFunction)],
    rho: f64,
    m: u32,
    alpha: f64,
    correctors_by_scale: &dyn Fn(u32) -> Result<Vec<CellSolution>>,
) -> Result<Vec<(ParabolicParameters, TwoScaleExpansion)>> {
    family
        .iter()
        .map(|(t, g)| {
            let params = parabolic_parameters(*t, alpha)?;
            let n = params.n.min(m);
            Ok((params, build_two_scale(g, rho, m, n, &correctors_by_scale(n)?)?))
        })
        .collect()
}

impl TwoScaleExpansion {
    fn shifted(&self, mu: &Configuration, k: usize) -> Configuration {
        translate_restrict(mu, &self.cells[k].center, Region::All)
    }

    /// `W - lift`, the corrector part alone.
    pub fn correction(&self, mu: &Configuration) -> Result<f64> {
        let mut s = 0.0;
        for (k, f) in self.correctors.iter().enumerate() {
            s += f.evaluate(&self.shifted(mu, k))?;
        }
        Ok(s)
    }
}

impl ConfigFunctional for TwoScaleExpansion {
    fn evaluate(&self, mu: &Configuration) -> Result<f64> {
        Ok(self.lift.evaluate(mu)? + self.correction(mu)?)
    }

    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point> {
        let mut g = self.lift.gradient(mu, index)?;
        for (k, f) in self.correctors.iter().enumerate() {
            let gk = f.gradient(&self.shifted(mu, k), index)?;
            g[0] += gk[0];
            g[1] += gk[1];
        }
        Ok(g)
    }

    fn gradients(&self, mu: &Configuration) -> Result<Vec<Point>> {
        let mut out = self.lift.gradients(mu)?;
        for (k, f) in self.correctors.iter().enumerate() {
            for (o, gk) in out.iter_mut().zip(f.gradients(&self.shifted(mu, k))?) {
                o[0] += gk[0];
                o[1] += gk[1];
            }
        }
        Ok(out)
    }

    fn zero_boundary(&self) -> bool {
        self.zero_boundary
    }
}

/// Monte Carlo estimate of `E[(a - b)^2]` under Poisson(`rho`) on `domain`.
pub fn mc_l2_distance_sq(
    a: &dyn ConfigFunctional,
    b: &dyn ConfigFunctional,
    domain: &crate::geometry::Domain,
    rho: f64,
    samples: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<EstimatorResult> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    let values: Vec<Result<f64>> = map_indexed(exec, samples, |s| {
        let mut rng = stream.substream(s as u64).rng();
        let mu = sample_poisson(domain, rho, &mut rng)?;
        let d = a.evaluate(&mu)? - b.evaluate(&mu)?;
        Ok(d * d)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorResult::from_samples(&values, stream))
}
