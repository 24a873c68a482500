//! The sampled cell problems: the affine-constrained minimization, the
//! unconstrained maximization and the resolvent equation.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::samples::{combine_row, scatter, SampleSet, SampledSystem};
use crate::error::{invalid, Error, Result};
use crate::function_space::{BasisSpec, FeatureBasis, FeatureFunctional};
use crate::geometry::{Domain, Point, MAX_DIM};
use crate::linalg::{solve_spd, DEFAULT_RIDGE};
use crate::model::CoefficientModel;
use crate::par::Exec;
use crate::rng::RandomStream;
use crate::stats::mean_se;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Nu,
    NuStar,
    Resolvent,
}

/// Which way a sampled value can err relative to the exact cell value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundDirection {
    /// Infimum over a subspace: above the exact value up to sampling error.
    Upper,
    /// Supremum over interior-measurable features only: below the exact value.
    LowerRestricted,
    None,
}

/// Inputs of one cell problem on the cube of side `3^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProblemSpec {
    pub m: u32,
    pub dim: usize,
    pub rho: f64,
    pub model: CoefficientModel,
    /// `p` for the minimization and the resolvent, `q` for the maximization.
    pub direction: Vec<f64>,
    pub basis: BasisSpec,
    pub samples: usize,
    pub seed: u64,
    /// Relative ridge added to the Gram matrix before factorization.
    pub ridge: f64,
    pub lambda: Option<f64>,
    /// Condition the count in the cube on being at most this value.
    pub truncation: Option<usize>,
}

impl CellProblemSpec {
    pub fn new(m: u32, dim: usize, rho: f64, model: CoefficientModel, samples: usize, seed: u64) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        Self {
            m,
            dim,
            rho,
            model,
            direction,
            basis: BasisSpec::default_for(dim),
            samples,
            seed,
            ridge: DEFAULT_RIDGE,
            lambda: None,
            truncation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(invalid("dim", format!("{} not supported", self.dim)));
        }
        if self.direction.len() != self.dim {
            return Err(invalid("direction", "length must equal the dimension"));
        }
        if self.samples == 0 {
            return Err(Error::NoSamples);
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid("ridge", "must be nonnegative"));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(invalid("lambda", "must be nonnegative"));
            }
        }
        if !(self.rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<Domain> {
        Domain::cube(self.m, self.dim)
    }

    pub fn direction_point(&self) -> Point {
        let mut p = [0.0; MAX_DIM];
        p[..self.dim].copy_from_slice(&self.direction);
        p
    }

    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed).branch("cell")
    }

    /// Draws the shared sample set and assembles the system.
    pub fn system(&self, with_mass: bool, exec: Exec) -> Result<SampledSystem> {
        self.validate()?;
        let window = self.window()?;
        let samples = Arc::new(SampleSet::draw(
            &window,
            self.rho,
            self.truncation,
            self.samples,
            self.stream(),
            exec,
        )?);
        let basis = Arc::new(FeatureBasis::new(&window, &self.basis)?);
        SampledSystem::assemble(basis, self.model, samples, with_mass, exec)
    }
}

/// A solved cell problem.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub kind: ProblemKind,
    pub direction: Point,
    /// Mean-zero control shift used in the zero-boundary objectives (`A p`,
    /// `A` the sampled palm mean of the coefficient); zero for the maximization.
    pub shift: Point,
    pub dim: usize,
    pub lambda: Option<f64>,
    pub basis: Arc<FeatureBasis>,
    /// Feature indices the coefficients refer to.
    pub subset: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Normalized value (divided by the sampled mean particle count).
    pub value: f64,
    pub se: f64,
    pub samples: usize,
    pub seed: RandomStream,
    pub bound: BoundDirection,
    pub model: CoefficientModel,
    /// The frozen sample set the solution was fitted on.
    pub sample_set: Arc<SampleSet>,
    /// Normalized `sum 1/2 grad w . a grad w` for the non-affine part `w`.
    pub corrector_energy: f64,
    /// Per-sample objective values; their mean is `value`.
    pub per_sample: Vec<f64>,
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    kind: ProblemKind,
    direction: &'a [f64],
    lambda: Option<f64>,
    value: f64,
    se: f64,
    samples: usize,
    seed: RandomStream,
    bound: BoundDirection,
    corrector_energy: f64,
    basis: crate::function_space::feature::BasisDescriptor,
    subset: &'a [usize],
    coefficients: &'a [f64],
}

impl CellSolution {
    /// The non-affine part as a functional (`phi` for the minimization, `u` for the maximization).
    pub fn corrector(&self) -> FeatureFunctional {
        FeatureFunctional::from_subset(self.basis.clone(), &self.subset, &self.coefficients)
    }

    /// The optimizer: `l_p + phi` for the minimization and the resolvent, `u` otherwise.
    pub fn optimizer(&self) -> FeatureFunctional {
        match self.kind {
            ProblemKind::NuStar => self.corrector(),
            _ => self.corrector().with_affine(self.direction),
        }
    }

    pub fn full_coefficients(&self) -> Vec<f64> {
        scatter(self.basis.len(), &self.subset, &self.coefficients)
    }

    /// The solution for the direction `sum_k w_k d_k` built from solutions
    /// along `d_k` on one sample set. Exact for the sampled problems, whose
    /// optimizers are linear in the direction.
    pub fn combine(parts: &[(f64, &CellSolution)], exec: Exec) -> Result<CellSolution> {
        let (_, first) = parts.first().ok_or(Error::NoSamples)?;
        for (_, s) in parts {
            if s.kind != first.kind
                || !Arc::ptr_eq(&s.sample_set, &first.sample_set)
                || !Arc::ptr_eq(&s.basis, &first.basis)
                || s.subset != first.subset
                || s.lambda != first.lambda
            {
                return Err(Error::Inconsistent(
                    "solutions to combine must share kind, basis and samples".into(),
                ));
            }
        }
        let mut direction = [0.0; MAX_DIM];
        let mut shift = [0.0; MAX_DIM];
        let mut coef = vec![0.0; first.coefficients.len()];
        for (w, s) in parts {
            for d in 0..first.dim {
                direction[d] += w * s.direction[d];
                shift[d] += w * s.shift[d];
            }
            for (c, v) in coef.iter_mut().zip(&s.coefficients) {
                *c += w * v;
            }
        }
        let full = scatter(first.basis.len(), &first.subset, &coef);
        let rows = objective_rows(
            &first.basis,
            &first.model,
            &first.sample_set,
            first.kind,
            &full,
            &direction,
            &shift,
            exec,
        );
        let mut out = (*first).clone();
        out.direction = direction;
        out.shift = shift;
        out.coefficients = coef;
        (out.per_sample, out.value, out.se, out.corrector_energy) = summarize(&rows);
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SolutionFile {
            kind: self.kind,
            direction: &self.direction[..self.dim],
            lambda: self.lambda,
            value: self.value,
            se: self.se,
            samples: self.samples,
            seed: self.seed,
            bound: self.bound,
            corrector_energy: self.corrector_energy,
            basis: self.basis.descriptor(),
            subset: &self.subset,
            coefficients: &self.coefficients,
        })?)
    }
}

fn column(v: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Unnormalized per-sample sums over the window particles.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Row {
    /// The objective.
    pub x: f64,
    /// The particle count.
    pub n: f64,
    /// Energy of the non-affine part.
    pub corr: f64,
}

/// Per-sample objective sums. For the maximization `X_s = sum q.grad u - 1/2 grad u.a grad u`;
/// otherwise `X_s = sum 1/2 grad v.a grad v - shift.grad w` with `v = l_p + w`,
/// where the shift term has mean zero for zero-boundary `w`.
pub(crate) fn objective_rows(
    basis: &FeatureBasis,
    model: &CoefficientModel,
    samples: &SampleSet,
    kind: ProblemKind,
    coef_full: &[f64],
    direction: &Point,
    shift: &Point,
    exec: Exec,
) -> Vec<Row> {
    let dim = samples.window.dim;
    crate::par::map_indexed(exec, samples.len(), |s| {
        let v = super::samples::view(basis, model, &samples.configs[s], false);
        let mut total = 0.0;
        let mut corr = 0.0;
        for (row, a) in v.eval.grads.iter().zip(&v.a) {
            let g = combine_row(row, coef_full);
            let e = 0.5 * a.quad(&g);
            corr += e;
            if kind == ProblemKind::NuStar {
                total += (0..dim).map(|d| direction[d] * g[d]).sum::<f64>() - e;
            } else {
                let mut grad = *direction;
                for d in 0..dim {
                    grad[d] += g[d];
                }
                total += 0.5 * a.quad(&grad) - (0..dim).map(|d| shift[d] * g[d]).sum::<f64>();
            }
        }
        Row {
            x: total,
            n: v.eval.grads.len() as f64,
            corr,
        }
    })
}

fn rows_for(sys: &SampledSystem, kind: ProblemKind, coef_full: &[f64], direction: &Point, shift: &Point) -> Vec<Row> {
    objective_rows(&sys.basis, &sys.model, &sys.samples, kind, coef_full, direction, shift, sys.exec)
}

/// Self-normalized ratio `sum X / sum N` with per-sample linearized
/// residuals, so that the mean of the returned array is the ratio and its
/// standard error is the delta-method error. Normalizing by the sampled
/// count instead of its expectation removes the count noise shared by the
/// minimization and the maximization.
pub(crate) fn ratio_samples(x: &[f64], n: &[f64]) -> Vec<f64> {
    let m = x.len() as f64;
    let nbar = n.iter().sum::<f64>() / m;
    if nbar == 0.0 {
        return vec![0.0; x.len()];
    }
    let r = x.iter().sum::<f64>() / m / nbar;
    x.iter().zip(n).map(|(xs, ns)| r + (xs - r * ns) / nbar).collect()
}

/// Per-sample normalized values, their mean and SE, and the normalized
/// corrector energy.
pub(crate) fn summarize(rows: &[Row]) -> (Vec<f64>, f64, f64, f64) {
    let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.n).collect();
    let nbar = n.iter().sum::<f64>() / n.len() as f64;
    let per_sample = ratio_samples(&x, &n);
    let (value, se) = mean_se(&per_sample);
    let corrector_energy = if nbar > 0.0 {
        rows.iter().map(|r| r.corr).sum::<f64>() / rows.len() as f64 / nbar
    } else {
        0.0
    };
    (per_sample, value, se, corrector_energy)
}

fn finish(
    sys: &SampledSystem,
    kind: ProblemKind,
    p: Point,
    shift: Point,
    lambda: Option<f64>,
    subset: Vec<usize>,
    coefficients: Vec<f64>,
    rows: Vec<Row>,
) -> CellSolution {
    let (per_sample, value, se, corrector_energy) = summarize(&rows);
    CellSolution {
        kind,
        direction: p,
        shift,
        dim: sys.dim(),
        lambda,
        basis: sys.basis.clone(),
        subset,
        coefficients,
        value,
        se,
        samples: sys.samples.len(),
        seed: sys.samples.seed,
        bound: match kind {
            ProblemKind::Nu => BoundDirection::Upper,
            ProblemKind::NuStar => BoundDirection::LowerRestricted,
            ProblemKind::Resolvent => BoundDirection::None,
        },
        corrector_energy,
        per_sample,
        model: sys.model,
        sample_set: sys.samples.clone(),
    }
}

/// Minimizes the sampled energy over `l_p + span(zero-boundary features)`
/// for each direction, sharing one factorization.
pub fn solve_nu_on(sys: &SampledSystem, dirs: &[Point], ridge: f64) -> Result<Vec<CellSolution>> {
    let subset = sys.basis.interior_indices();
    let g = sys.sub_stiffness(&subset);
    let mut rhs = DMatrix::zeros(subset.len(), dirs.len());
    for (c, p) in dirs.iter().enumerate() {
        rhs.set_column(c, &sys.centered_flux(p, &subset));
    }
    let sol = solve_spd(&g, &rhs, ridge)?;
    let palm = sys.palm_matrix();
    let mut out = Vec::with_capacity(dirs.len());
    for (c, p) in dirs.iter().enumerate() {
        let coef: Vec<f64> = sol.column(c).iter().map(|v| -v).collect();
        let full = scatter(sys.basis.len(), &subset, &coef);
        let shift = palm.mul_vec(p);
        let rows = rows_for(sys, ProblemKind::Nu, &full, p, &shift);
        out.push(finish(sys, ProblemKind::Nu, *p, shift, None, subset.clone(), coef, rows));
    }
    Ok(out)
}

/// Maximizes the sampled concave objective over the span of all features.
pub fn solve_nu_star_on(sys: &SampledSystem, dirs: &[Point], ridge: f64) -> Result<Vec<CellSolution>> {
    let subset: Vec<usize> = (0..sys.basis.len()).collect();
    let g = &sys.stiffness;
    let mut rhs = DMatrix::zeros(subset.len(), dirs.len());
    for (c, q) in dirs.iter().enumerate() {
        rhs.set_column(c, &sys.slope_along(q, &subset));
    }
    let sol = solve_spd(g, &rhs, ridge)?;
    let mut out = Vec::with_capacity(dirs.len());
    for (c, q) in dirs.iter().enumerate() {
        let coef: Vec<f64> = sol.column(c).iter().copied().collect();
        let rows = rows_for(sys, ProblemKind::NuStar, &coef, q, &[0.0; MAX_DIM]);
        out.push(finish(
            sys,
            ProblemKind::NuStar,
            *q,
            [0.0; MAX_DIM],
            None,
            subset.clone(),
            coef,
            rows,
        ));
    }
    Ok(out)
}

/// Solves `lambda <V, v> + E^a(V, v) = -E^a(l_p, v)` over zero-boundary
/// features, i.e. the resolvent equation for `U = l_p + V`. At `lambda = 0`
/// the linear system is the one of the minimization.
pub fn solve_resolvent_on(sys: &SampledSystem, p: &Point, lambda: f64, ridge: f64) -> Result<CellSolution> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", "must be nonnegative"));
    }
    let subset = sys.basis.interior_indices();
    let g = sys.sub_stiffness(&subset);
    let lhs = if lambda > 0.0 {
        sys.sub_mass(&subset)? * lambda + &g * 0.5
    } else {
        &g * 0.5
    };
    let b = sys.centered_flux(p, &subset) * -0.5;
    let shift = sys.palm_matrix().mul_vec(p);
    let sol = solve_spd(&lhs, &column(&b), ridge)?;
    let coef: Vec<f64> = sol.column(0).iter().copied().collect();
    let full = scatter(sys.basis.len(), &subset, &coef);
    let rows = rows_for(sys, ProblemKind::Resolvent, &full, p, &shift);
    Ok(finish(sys, ProblemKind::Resolvent, *p, shift, Some(lambda), subset, coef, rows))
}

pub fn solve_nu(spec: &CellProblemSpec) -> Result<CellSolution> {
    let sys = spec.system(false, Exec::default())?;
    Ok(solve_nu_on(&sys, &[spec.direction_point()], spec.ridge)?.remove(0))
}

pub fn solve_nu_star(spec: &CellProblemSpec) -> Result<CellSolution> {
    let sys = spec.system(false, Exec::default())?;
    Ok(solve_nu_star_on(&sys, &[spec.direction_point()], spec.ridge)?.remove(0))
}

pub fn solve_resolvent(spec: &CellProblemSpec) -> Result<CellSolution> {
    let lambda = spec.lambda.unwrap_or(0.0);
    let sys = spec.system(lambda > 0.0, Exec::default())?;
    solve_resolvent_on(&sys, &spec.direction_point(), lambda, spec.ridge)
}
