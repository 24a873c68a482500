//! Localized Green–Kubo quantities on the cube `(-3^m/2, 3^m/2)^d`: the
//! current as a linear form on zero-boundary functionals, the resolvent value
//! of the current-current integral, the Palm flux and the assembled bracket.

use serde::{Deserialize, Serialize};

use crate::cell_problems::samples::{combine_row, view, SampledSystem};
use crate::cell_problems::{solve_resolvent_on, CellProblemSpec, CellSolution};
use crate::configuration::{palm_sample, sample_with_halo};
use crate::error::{invalid, Error, Result};
use crate::function_space::{dirichlet_energy, ConfigFunctional};
use crate::geometry::{Domain, Point, INTERACTION_RADIUS, MAX_DIM};
use crate::homogenized::AlphaSource;
use crate::matrix::SymMatrix;
use crate::model::CoefficientModel;
use crate::par::{map_indexed, Exec};
use crate::report::{fmt_f64, CsvTable};
use crate::rng::RandomStream;
use crate::stats::{mean_se, EstimatorResult};

/// The linear form `v -> E[sum_{x in cube} -1/2 p . a grad_x v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentFunctional {
    pub direction: Point,
    pub dim: usize,
    pub m: u32,
    pub model: CoefficientModel,
    pub rho: f64,
}

impl CurrentFunctional {
    pub fn new(direction: Point, dim: usize, m: u32, model: CoefficientModel, rho: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("{dim} not supported")));
        }
        if !(rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        Ok(Self {
            direction,
            dim,
            m,
            model,
            rho,
        })
    }

    pub fn window(&self) -> Result<Domain> {
        Domain::cube(self.m, self.dim)
    }
}

fn half_flux(p: &Point, a: &SymMatrix, g: &Point, dim: usize) -> f64 {
    let ag = a.mul_vec(g);
    0.5 * (0..dim).map(|d| p[d] * ag[d]).sum::<f64>()
}

/// Monte Carlo value of the current on `v`, which must vanish on the boundary of the cube.
pub fn current_apply(
    current: &CurrentFunctional,
    v: &dyn ConfigFunctional,
    samples: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<EstimatorResult> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    if !v.zero_boundary() {
        return Err(invalid("v", "the current acts on zero-boundary functionals"));
    }
    let window = current.window()?;
    let values: Vec<Result<f64>> = map_indexed(exec, samples, |s| {
        let mu = sample_with_halo(
            &window,
            current.rho,
            INTERACTION_RADIUS,
            None,
            &mut stream.substream(s as u64).rng(),
        )?;
        let grads = v.gradients(&mu)?;
        let mut total = 0.0;
        for (x, g) in mu.points.iter().zip(&grads) {
            if window.contains(x) {
                let a = current.model.eval_in(&mu.domain, &mu.points, x);
                total -= half_flux(&current.direction, &a, g, current.dim);
            }
        }
        Ok(total)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorResult::from_samples(&values, stream))
}

/// The same pairing through the corrector: `E[sum_{x in cube} 1/2 grad phi . a grad v]`.
pub fn corrector_pairing(
    current: &CurrentFunctional,
    phi: &dyn ConfigFunctional,
    v: &dyn ConfigFunctional,
    samples: usize,
    stream: RandomStream,
) -> Result<EstimatorResult> {
    let e = dirichlet_energy(phi, v, &current.model, &current.window()?, current.rho, samples, &stream, false)?;
    Ok(EstimatorResult {
        value: e.value,
        se: e.se,
        samples,
        seed: stream,
    })
}

/// `1/2 E[p . a(mu + delta_0, 0) p]`.
pub fn palm_flux(
    model: &CoefficientModel,
    rho: f64,
    direction: &Point,
    dim: usize,
    samples: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<EstimatorResult> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    let ball = Domain::centered_box(dim, 2.0 * INTERACTION_RADIUS + 1.0)?;
    let values: Vec<Result<f64>> = map_indexed(exec, samples, |s| {
        let mu = palm_sample(&ball, rho, &mut stream.substream(s as u64).rng())?;
        let a = model.eval_in(&mu.domain, &mu.points, &mu.points[0]);
        Ok(0.5 * a.quad(direction))
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorResult::from_samples(&values, stream))
}

/// Resolvent value of the time integral of the current autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkIntegral {
    pub lambda: f64,
    /// `E[sum_{x in cube} (1/2 p.a p - 1/2 p.a grad U)]`.
    pub value: f64,
    pub se: f64,
    /// `value / (rho |cube|)`, estimated as a ratio to the sampled count.
    pub normalized: f64,
    pub normalized_se: f64,
    /// Normalized energy of `U - l_p`.
    pub corrector_energy: f64,
    pub samples: usize,
}

/// Evaluates the integrand on the sample set the resolvent was fitted on.
/// With `U = l_p + V` the affine parts cancel and each particle contributes
/// `-1/2 p . a grad V`.
pub fn gk_integral_from(solution: &CellSolution, exec: Exec) -> Result<GkIntegral> {
    let lambda = solution
        .lambda
        .ok_or_else(|| Error::Inconsistent("expected a resolvent solution".into()))?;
    let set = &solution.sample_set;
    let full = solution.full_coefficients();
    let p = solution.direction;
    let dim = solution.dim;
    let rows: Vec<(f64, f64)> = map_indexed(exec, set.len(), |s| {
        let v = view(&solution.basis, &solution.model, &set.configs[s], false);
        let x: f64 = v
            .eval
            .grads
            .iter()
            .zip(&v.a)
            .map(|(row, a)| -half_flux(&p, a, &combine_row(row, &full), dim))
            .sum();
        (x, v.eval.grads.len() as f64)
    });
    let (x, n): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let per = crate::cell_problems::solve::ratio_samples(&x, &n);
    let (normalized, normalized_se) = mean_se(&per);
    let z = set.rho * set.window.volume();
    Ok(GkIntegral {
        lambda,
        value: normalized * z,
        se: normalized_se * z,
        normalized,
        normalized_se,
        corrector_energy: solution.corrector_energy,
        samples: set.len(),
    })
}

/// Solves the resolvent on an assembled system and evaluates the integral.
pub fn gk_integral_on(sys: &SampledSystem, p: &Point, lambda: f64, ridge: f64) -> Result<GkIntegral> {
    gk_integral_from(&solve_resolvent_on(sys, p, lambda, ridge)?, sys.exec)
}

pub fn gk_integral_value(spec: &CellProblemSpec) -> Result<GkIntegral> {
    let lambda = spec.lambda.unwrap_or(0.0);
    let sys = spec.system(lambda > 0.0, Exec::default())?;
    gk_integral_on(&sys, &spec.direction_point(), lambda, spec.ridge)
}

/// `3^{-2(1+alpha)m}`, below which the cube size limits the error.
pub fn gk_threshold(m: u32, alpha: f64) -> f64 {
    3f64.powf(-2.0 * (1.0 + alpha) * m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GkRegime {
    /// `lambda >= 1`.
    Constant,
    /// `3^{-2(1+alpha)m} < lambda < 1`.
    Resolvent,
    /// `lambda <= 3^{-2(1+alpha)m}`.
    CubeSize,
}

impl GkRegime {
    pub fn classify(lambda: f64, m: u32, alpha: f64) -> Self {
        if lambda >= 1.0 {
            GkRegime::Constant
        } else if lambda > gk_threshold(m, alpha) {
            GkRegime::Resolvent
        } else {
            GkRegime::CubeSize
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GkRegime::Constant => "constant",
            GkRegime::Resolvent => "λ^{α/(2(1+α))}",
            GkRegime::CubeSize => "3^{−αm}",
        }
    }

    /// The bound up to its constant, with the exponent filled in.
    pub fn bound_form(&self, alpha: f64) -> String {
        match self {
            GkRegime::Constant => "C".into(),
            GkRegime::Resolvent => format!("C λ^{}", fmt_f64(alpha / (2.0 * (1.0 + alpha)))),
            GkRegime::CubeSize => format!("C 3^(-{} m)", fmt_f64(alpha)),
        }
    }

    /// The bound with `C = 1`.
    pub fn rate(&self, lambda: f64, m: u32, alpha: f64) -> f64 {
        match self {
            GkRegime::Constant => 1.0,
            GkRegime::Resolvent => lambda.powf(alpha / (2.0 * (1.0 + alpha))),
            GkRegime::CubeSize => 3f64.powf(-alpha * m as f64),
        }
    }
}

/// `n = round(-log_3 lambda / (2(1+alpha)))`, clamped to `[0, m]`.
pub fn gk_mesoscale(lambda: f64, alpha: f64, m: u32) -> Result<u32> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", "must be a nonnegative number"));
    }
    let n = (-lambda.log(3.0) / (2.0 * (1.0 + alpha))).round();
    Ok(n.clamp(0.0, m as f64) as u32)
}

/// What the bracket is assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkInputs {
    pub direction: Point,
    pub dim: usize,
    /// Reference matrix, extrapolated or supplied, with entrywise SEs.
    pub abar: SymMatrix,
    pub abar_se: SymMatrix,
    pub palm: EstimatorResult,
    pub integral: GkIntegral,
    pub alpha: f64,
    pub alpha_source: AlphaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkReport {
    pub m: u32,
    pub lambda: f64,
    pub direction: Vec<f64>,
    /// `1/2 p . abar p` of the reference matrix.
    pub half_abar: f64,
    pub half_abar_se: f64,
    pub palm_flux: f64,
    pub palm_flux_se: f64,
    /// Normalized resolvent value.
    pub integral: f64,
    pub integral_se: f64,
    /// `1/2 p.abar p - palm flux + normalized integral`.
    pub bracket: f64,
    pub bracket_se: f64,
    pub regime: GkRegime,
    pub regime_label: String,
    pub bound_form: String,
    pub threshold: f64,
    pub alpha: f64,
    pub alpha_source: AlphaSource,
}

impl GkReport {
    /// `1/2 p.abar p` recovered from the Palm flux and the integral alone.
    pub fn reconstructed_half_abar(&self) -> (f64, f64) {
        (self.palm_flux - self.integral, self.palm_flux_se.hypot(self.integral_se))
    }
}

/// Assembles the bracket. SEs add in quadrature; the entrywise SE of the
/// reference enters through `|p|`-weighted absolute values.
pub fn gk_bracket(m: u32, lambda: f64, inputs: &GkInputs) -> Result<GkReport> {
    let dim = inputs.dim;
    if inputs.abar.dim != dim {
        return Err(Error::Inconsistent("reference matrix has the wrong dimension".into()));
    }
    if (inputs.integral.lambda - lambda).abs() > 1e-12 * (1.0 + lambda) {
        return Err(Error::Inconsistent(format!(
            "integral was computed at lambda = {}, not {lambda}",
            inputs.integral.lambda
        )));
    }
    let p = &inputs.direction;
    let half_abar = 0.5 * inputs.abar.quad(p);
    let mut var = 0.0;
    for i in 0..dim {
        for j in i..dim {
            let w = if i == j { 0.5 * p[i] * p[i] } else { p[i] * p[j] };
            var += (w * inputs.abar_se.get(i, j)).powi(2);
        }
    }
    let half_abar_se = var.sqrt();
    let bracket = half_abar - inputs.palm.value + inputs.integral.normalized;
    let bracket_se = (var + inputs.palm.se.powi(2) + inputs.integral.normalized_se.powi(2)).sqrt();
    let regime = GkRegime::classify(lambda, m, inputs.alpha);
    Ok(GkReport {
        m,
        lambda,
        direction: p[..dim].to_vec(),
        half_abar,
        half_abar_se,
        palm_flux: inputs.palm.value,
        palm_flux_se: inputs.palm.se,
        integral: inputs.integral.normalized,
        integral_se: inputs.integral.normalized_se,
        bracket,
        bracket_se,
        regime,
        regime_label: regime.label().into(),
        bound_form: regime.bound_form(inputs.alpha),
        threshold: gk_threshold(m, inputs.alpha),
        alpha: inputs.alpha,
        alpha_source: inputs.alpha_source,
    })
}

/// Rows `(m, lambda, bracket, SE, regime)`.
pub fn gk_sweep_csv(reports: &[GkReport]) -> CsvTable {
    let mut table = CsvTable::new(&["m", "lambda", "bracket", "SE", "regime"]);
    if let Some(r) = reports.first() {
        table = table
            .meta("alpha", fmt_f64(r.alpha))
            .meta("alpha_source", format!("{:?}", r.alpha_source).to_lowercase())
            .meta("direction", format!("{:?}", r.direction));
    }
    for r in reports {
        table.push(vec![
            r.m.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.bracket),
            fmt_f64(r.bracket_se),
            r.regime_label.clone(),
        ]);
    }
    table
}
