//! Fast checks with exact or closed-form answers.

use bulkdiff::cell_problems::{compute_abar, CellProblemSpec};
use bulkdiff::dynamics::{detailed_balance_defect, fluctuation_field, lattice_transition_matrix};
use bulkdiff::green_kubo::{gk_bracket, gk_integral_value, gk_mesoscale, gk_threshold, palm_flux, GkInputs, GkRegime};
use bulkdiff::homogenized::{
    apply_homog_semigroup, elliptic_mesoscale, parabolic_parameters, solve_homog_dirichlet, AlphaSource, GridFunction, HeatKernel,
};
use bulkdiff::model::{catalog, count_indicator_palm_mean, ellipticity_audit, locality_audit};
use bulkdiff::stats::mean_se;
use bulkdiff::{sample_poisson, CoefficientModel, Domain, Exec, RandomStream, SymMatrix};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type Check = (&'static str, Box<dyn Fn() -> Result<String, String>>);

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: bulkdiff::Error) -> String {
    e.to_string()
}

fn identity_cells() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for m in 0..=1 {
        let spec = CellProblemSpec::new(m, 1, 1.0, CoefficientModel::identity(), 200, 1);
        let e = compute_abar(&spec, Exec::default()).map_err(err)?.estimate;
        worst = worst
            .max((e.nu[0].0 - 0.5).abs())
            .max(e.abar.max_abs_diff(&SymMatrix::identity(1)))
            .max(e.abar_star.max_abs_diff(&SymMatrix::identity(1)))
            .max(e.j[0].value.abs());
    }
    ensure(worst < 1e-9, format!("max deviation {worst:.2e}"))
}

fn catalog_audits() -> Result<String, String> {
    let mut rng = RandomStream::new(1).rng();
    for dim in 1..=2 {
        for model in catalog(3.0).map_err(err)? {
            for r in [
                ellipticity_audit(&model, dim, 2000, &mut rng),
                locality_audit(&model, dim, 500, &mut rng),
            ] {
                if !r.passed() {
                    return Err(format!(
                        "{} d={dim}: {} failed {} of {}",
                        model.name(),
                        r.invariant,
                        r.failures,
                        r.trials
                    ));
                }
            }
        }
    }
    Ok("ellipticity and locality hold on every catalog model".into())
}

fn palm_oracle() -> Result<String, String> {
    let model = CoefficientModel::count_indicator(2.0, 2).map_err(err)?;
    let r = palm_flux(&model, 1.0, &[1.0, 0.0], 1, 20000, RandomStream::new(2), Exec::default()).map_err(err)?;
    let exact = 0.5 * count_indicator_palm_mean(2.0, 1.0, 1);
    ensure(r.within(exact, 3.0), format!("{:.5} ± {:.5} vs {exact:.5}", r.value, r.se))
}

fn heat_kernel() -> Result<String, String> {
    let torus = Domain::torus(1, 27.0).map_err(err)?;
    let hk = HeatKernel::isotropic(1, 1.3).map_err(err)?;
    let f = GridFunction::from_fn(torus, 270, |x| (-x[0] * x[0]).exp()).map_err(err)?;
    let mass = (apply_homog_semigroup(&f, 2.0, &hk).map_err(err)?.integral() - f.integral()).abs();
    let once = apply_homog_semigroup(&f, 1.5, &hk).map_err(err)?;
    let twice = apply_homog_semigroup(&apply_homog_semigroup(&f, 0.5, &hk).map_err(err)?, 1.0, &hk).map_err(err)?;
    let comp = once
        .values
        .iter()
        .zip(&twice.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(
        mass < 1e-6 && comp < 1e-6,
        format!("mass defect {mass:.1e}, composition defect {comp:.1e}"),
    )
}

fn dirichlet_rate() -> Result<String, String> {
    let l = 9.0;
    let u = |x: f64| (std::f64::consts::PI * (x + l / 2.0) / l).sin();
    let domain = Domain::cube(2, 1).map_err(err)?;
    let mut errs = Vec::new();
    for cells in [18, 36, 72] {
        let f = GridFunction::from_fn(domain, cells, |x| (std::f64::consts::PI / l).powi(2) * u(x[0])).map_err(err)?;
        let s = solve_homog_dirichlet(&f, &SymMatrix::identity(1)).map_err(err)?;
        errs.push(
            (0..s.solution.len())
                .map(|k| (s.solution.values[k] - u(s.solution.node(k)[0])).abs())
                .fold(0.0, f64::max),
        );
    }
    let rates: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure(rates.iter().all(|r| (r - 2.0).abs() < 0.1), format!("observed orders {rates:.3?}"))
}

fn detailed_balance() -> Result<String, String> {
    let model = CoefficientModel::count_indicator(2.0, 2).map_err(err)?;
    let k = lattice_transition_matrix(&model, 4.0, 8, 0.3, 3).map_err(err)?;
    let d = detailed_balance_defect(&k);
    ensure(d < 1e-10, format!("defect {d:.1e}"))
}

fn white_noise() -> Result<String, String> {
    let torus = Domain::torus(1, 27.0).map_err(err)?;
    let f = GridFunction::from_fn(torus, 270, |x| (-x[0] * x[0] / 2.0).exp()).map_err(err)?;
    let g = GridFunction::from_fn(torus, 270, |x| (-(x[0] - 0.5).powi(2)).exp()).map_err(err)?;
    let stream = RandomStream::new(3);
    let mut vals = Vec::with_capacity(4000);
    for s in 0..4000 {
        let mu = sample_poisson(&torus, 1.0, &mut stream.substream(s).rng()).map_err(err)?;
        vals.push(fluctuation_field(&mu, &f, 1.0, 1.0).map_err(err)? * fluctuation_field(&mu, &g, 1.0, 1.0).map_err(err)?);
    }
    let (m, se) = mean_se(&vals);
    let exact = f.inner(&g).map_err(err)?;
    ensure((m - exact).abs() <= 3.0 * se, format!("{m:.4} ± {se:.4} vs {exact:.4}"))
}

fn formulas() -> Result<String, String> {
    let alpha = 0.4;
    let p = parabolic_parameters(3f64.powi(16), alpha).map_err(err)?;
    let mut ok = p.n == 1 && (p.tau - 3f64.powi(12)).abs() < 1e-6 * p.tau && p.beta == alpha / 16.0;
    ok &= elliptic_mesoscale(5, alpha, AlphaSource::Override).map_err(err)?.n == 3;
    ok &= gk_mesoscale(1.0, alpha, 3).map_err(err)? == 0;
    ok &= gk_mesoscale(3f64.powf(-2.0 * (1.0 + alpha)), alpha, 3).map_err(err)? == 1;
    let t = gk_threshold(2, alpha);
    ok &= GkRegime::classify(1.0, 2, alpha) == GkRegime::Constant
        && GkRegime::classify(t * 1.001, 2, alpha) == GkRegime::Resolvent
        && GkRegime::classify(t, 2, alpha) == GkRegime::CubeSize;
    ensure(ok, "mesoscales, parabolic parameters and regime thresholds".into())
}

fn identity_bracket() -> Result<String, String> {
    let model = CoefficientModel::identity();
    let palm = palm_flux(&model, 1.0, &[1.0, 0.0], 1, 100, RandomStream::new(1), Exec::default()).map_err(err)?;
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 0.1, 1.0, 10.0] {
        let mut spec = CellProblemSpec::new(1, 1, 1.0, model, 200, 5);
        spec.lambda = Some(lambda);
        let inputs = GkInputs {
            direction: [1.0, 0.0],
            dim: 1,
            abar: SymMatrix::identity(1),
            abar_se: SymMatrix::zeros(1),
            palm,
            integral: gk_integral_value(&spec).map_err(err)?,
            alpha: 0.5,
            alpha_source: AlphaSource::Override,
        };
        worst = worst.max(gk_bracket(1, lambda, &inputs).map_err(err)?.bracket.abs());
    }
    ensure(worst < 1e-9, format!("largest |bracket| {worst:.1e}"))
}

fn builtin() -> Vec<Check> {
    vec![
        ("identity cell problems are exact", Box::new(identity_cells)),
        ("catalog audits", Box::new(catalog_audits)),
        ("palm flux void-probability oracle", Box::new(palm_oracle)),
        ("heat semigroup mass and composition", Box::new(heat_kernel)),
        ("Dirichlet solver second order", Box::new(dirichlet_rate)),
        ("lattice chain detailed balance", Box::new(detailed_balance)),
        ("equal-time white noise", Box::new(white_noise)),
        ("mesoscale and regime formulas", Box::new(formulas)),
        ("identity bracket vanishes", Box::new(identity_bracket)),
    ]
}

/// Runs the built-in checks, plus the audits of `model` when given.
pub fn run(model: Option<(CoefficientModel, usize)>) -> Vec<CheckResult> {
    let mut checks = builtin();
    if let Some((m, dim)) = model {
        checks.push((
            "configured model audits",
            Box::new(move || {
                let mut rng = RandomStream::new(9).rng();
                for r in [ellipticity_audit(&m, dim, 2000, &mut rng), locality_audit(&m, dim, 500, &mut rng)] {
                    if !r.passed() {
                        return Err(format!(
                            "{} failed {} of {} (worst {:.3})",
                            r.invariant, r.failures, r.trials, r.worst
                        ));
                    }
                }
                Ok(format!("{} passes ellipticity and locality", m.name()))
            }),
        ));
    }
    checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name: name.to_string(),
                passed,
                detail,
            }
        })
        .collect()
}
