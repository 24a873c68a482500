//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use bulkdiff::cell_problems::{compute_abar, solve_nu, solve_nu_star, AbarEstimate, CellProblemSpec, OracleMode, SectorOracle};
use bulkdiff::dynamics::{detailed_balance_defect, fluctuation_field, lattice_transition_matrix, two_point_sweep, ChainParams};
use bulkdiff::green_kubo::{gk_bracket, gk_integral_on, gk_integral_value, gk_threshold, palm_flux, GkInputs, GkRegime};
use bulkdiff::homogenized::{
    apply_homog_semigroup, elliptic_mesoscale, heat_kernel, parabolic_parameters, solve_homog_dirichlet, AlphaSource, GridFunction,
    HeatKernel,
};
use bulkdiff::stats::mean_se;
use bulkdiff::{sample_poisson, CoefficientModel, Domain, Exec, RandomStream, SymMatrix};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, se: f64) -> bool {
    (value - target).abs() <= 3.0 * se
}

fn count_indicator() -> CoefficientModel {
    CoefficientModel::count_indicator(2.0, 2).unwrap()
}

fn torus() -> Domain {
    Domain::torus(1, 27.0).unwrap()
}

fn bump(center: f64, width: f64) -> GridFunction {
    GridFunction::from_fn(torus(), 270, |x| (-(x[0] - center).powi(2) / width).exp()).unwrap()
}

fn identity_exactness() -> Outcome {
    let model = CoefficientModel::identity();
    let id = SymMatrix::identity(1);
    for m in 0..=2 {
        let e = compute_abar(&CellProblemSpec::new(m, 1, 1.0, model, 300, 10 + m as u64), Exec::default())
            .map_err(|e| e.to_string())?
            .estimate;
        let (nu, se) = e.nu[0];
        if !within(nu, 0.5, se.max(1e-12)) {
            return Err(format!("m={m}: nu {nu} ± {se}"));
        }
        if e.abar.max_abs_diff(&id) > 3.0 * e.abar_se.get(0, 0).max(1e-12) {
            return Err(format!("m={m}: abar {:?}", e.abar));
        }
        if !within(e.j[0].value, 0.0, e.j[0].se.max(1e-12)) {
            return Err(format!("m={m}: J {} ± {}", e.j[0].value, e.j[0].se));
        }
    }
    let palm = palm_flux(&model, 1.0, &[1.0, 0.0], 1, 500, RandomStream::new(3), Exec::default()).map_err(|e| e.to_string())?;
    let mut worst_bracket: f64 = 0.0;
    for lambda in [0.0, 0.1, 1.0, 10.0] {
        let mut spec = CellProblemSpec::new(1, 1, 1.0, model, 300, 4);
        spec.lambda = Some(lambda);
        let inputs = GkInputs {
            direction: [1.0, 0.0],
            dim: 1,
            abar: SymMatrix::identity(1),
            abar_se: SymMatrix::zeros(1),
            palm,
            integral: gk_integral_value(&spec).map_err(|e| e.to_string())?,
            alpha: 0.5,
            alpha_source: AlphaSource::Override,
        };
        let r = gk_bracket(1, lambda, &inputs).map_err(|e| e.to_string())?;
        if !within(r.bracket, 0.0, r.bracket_se.max(1e-12)) {
            return Err(format!("lambda={lambda}: bracket {} ± {}", r.bracket, r.bracket_se));
        }
        worst_bracket = worst_bracket.max(r.bracket.abs());
    }
    let params = ChainParams::new(0.05, torus(), model, 1.0).map_err(|e| e.to_string())?;
    let hk = HeatKernel::isotropic(1, 1.0).unwrap();
    let rows = two_point_sweep(
        &bump(0.0, 2.0),
        &bump(0.7, 3.0),
        &[(0.5, 0.0), (1.0, 0.0)],
        &params,
        2000,
        RandomStream::new(5),
        Exec::default(),
        Some(&hk),
    )
    .map_err(|e| e.to_string())?;
    for r in &rows {
        if r.consistent(3.0) != Some(true) {
            return Err(format!(
                "two-point lag {}: {} ± {} vs {:?}",
                r.t - r.s,
                r.estimate,
                r.se,
                r.prediction
            ));
        }
    }
    Ok(format!(
        "nu = 1/2, abar = Id, J = 0 for m <= 2; max |bracket| {worst_bracket:.1e}; two-point discrepancies {:.4} ({:.4}), {:.4} ({:.4})",
        rows[0].discrepancy.unwrap(),
        rows[0].se,
        rows[1].discrepancy.unwrap(),
        rows[1].se
    ))
}

fn structural_order() -> Outcome {
    let model = count_indicator();
    let runs: Vec<AbarEstimate> = (0..=3u32)
        .map(|m| compute_abar(&CellProblemSpec::new(m, 1, 1.0, model, 1500, 100 + m as u64), Exec::default()).map(|r| r.estimate))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for e in &runs {
        let (star, star_se) = (e.abar_star.get(0, 0), e.abar_star_se.get(0, 0));
        let (abar, abar_se) = (e.abar.get(0, 0), e.abar_se.get(0, 0));
        if star < 1.0 - 3.0 * star_se || abar > 2.0 + 3.0 * abar_se {
            return Err(format!("m={}: abar* {star} ± {star_se}, abar {abar} ± {abar_se}", e.m));
        }
    }
    for w in runs.windows(2) {
        let (a, sa) = w[0].nu[0];
        let (b, sb) = w[1].nu[0];
        if b > a + 3.0 * sa.hypot(sb) {
            return Err(format!("nu rises from m={} ({a} ± {sa}) to m={} ({b} ± {sb})", w[0].m, w[1].m));
        }
    }
    let js: Vec<f64> = runs[..3].iter().map(|e| e.j[0].value).collect();
    if js.iter().any(|j| !(*j > 0.0)) {
        return Err(format!("nonpositive duality gap {js:?}"));
    }
    // least-squares slope of log J against n = 0, 1, 2
    let slope = (js[2].ln() - js[0].ln()) / 2.0;
    let nus: Vec<f64> = runs.iter().map(|e| e.nu[0].0).collect();
    ensure(slope < 0.0, format!("nu {nus:.4?}, J {js:.4?}, log-slope {slope:.3}"))
}

fn oracle_equivalence() -> Outcome {
    let model = count_indicator();
    let o = SectorOracle::new(Domain::cube(1, 1).unwrap(), 1.0, model, 2).map_err(|e| e.to_string())?;
    let exact = o.solve(&OracleMode::Nu { p: 1.0 }).map_err(|e| e.to_string())?.value;
    let exact_star = o.solve(&OracleMode::NuStar { q: 1.0 }).map_err(|e| e.to_string())?.value;
    let mut spec = CellProblemSpec::new(1, 1, 1.0, model, 4000, 5);
    spec.truncation = Some(2);
    let nu = solve_nu(&spec).map_err(|e| e.to_string())?;
    let star = solve_nu_star(&spec).map_err(|e| e.to_string())?;
    let detail = format!(
        "nu {:.4} ± {:.4} vs {exact:.4}; nu* {:.4} ± {:.4} vs {exact_star:.4}",
        nu.value, nu.se, star.value, star.se
    );
    let ok =
        (nu.value - exact).abs() < 0.05 * exact && nu.value >= exact - 3.0 * nu.se && (star.value - exact_star).abs() < 0.05 * exact_star;
    ensure(ok, detail)
}

fn white_noise() -> Outcome {
    let pairs = [
        (0.0, 1.0, 0.0, 1.0),
        (0.0, 2.0, 0.5, 1.0),
        (-3.0, 1.0, 3.0, 1.0),
        (0.0, 0.5, 0.0, 4.0),
        (5.0, 2.0, 4.0, 2.0),
    ];
    let stream = RandomStream::new(7);
    let mut out = Vec::new();
    for (k, &(cf, wf, cg, wg)) in pairs.iter().enumerate() {
        let (f, g) = (bump(cf, wf), bump(cg, wg));
        let values: Vec<f64> = (0..4000)
            .map(|s| {
                let mu = sample_poisson(&torus(), 1.0, &mut stream.substream((k * 4000 + s) as u64).rng()).unwrap();
                fluctuation_field(&mu, &f, 1.0, 1.0).unwrap() * fluctuation_field(&mu, &g, 1.0, 1.0).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&values);
        let exact = f.inner(&g).unwrap();
        if !within(m, exact, se) {
            return Err(format!("pair {k}: {m} ± {se} vs {exact}"));
        }
        out.push(format!("{:+.1}", (m - exact) / se));
    }
    Ok(format!("z-scores {}", out.join(" ")))
}

fn heat_kernel_and_pde() -> Outcome {
    // normalization by quadrature, isotropic and anisotropic
    let h = 0.02;
    let line: f64 = (-4000..=4000)
        .map(|k| heat_kernel(&HeatKernel::isotropic(1, 1.7).unwrap(), 0.8, &[k as f64 * h, 0.0]).unwrap() * h)
        .sum();
    let aniso = HeatKernel::new(SymMatrix::from_rows(2, &[vec![1.5, 0.3], vec![0.3, 1.0]])).unwrap();
    let h2 = 0.05;
    let mut plane = 0.0;
    for i in -300..=300 {
        for j in -300..=300 {
            plane += aniso.density(1.2, &[i as f64 * h2, j as f64 * h2]).unwrap() * h2 * h2;
        }
    }
    let f = bump(0.0, 1.0);
    let hk = HeatKernel::isotropic(1, 1.3).unwrap();
    let mass = (apply_homog_semigroup(&f, 2.0, &hk).unwrap().integral() - f.integral()).abs();
    let once = apply_homog_semigroup(&f, 1.5, &hk).unwrap();
    let twice = apply_homog_semigroup(&apply_homog_semigroup(&f, 0.5, &hk).unwrap(), 1.0, &hk).unwrap();
    let comp = once
        .values
        .iter()
        .zip(&twice.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let norm = (line - 1.0).abs().max((plane - 1.0).abs()).max(mass);
    if norm > 1e-6 || comp > 1e-6 {
        return Err(format!("normalization defect {norm:.1e}, composition defect {comp:.1e}"));
    }

    let l = 9.0;
    let k = std::f64::consts::PI / l;
    let u = |x: f64| (k * (x + l / 2.0)).sin();
    let cube = Domain::cube(2, 1).unwrap();
    let mut errs = Vec::new();
    for cells in [18, 36, 72] {
        let rhs = GridFunction::from_fn(cube, cells, |x| k * k * u(x[0])).unwrap();
        let s = solve_homog_dirichlet(&rhs, &SymMatrix::identity(1)).map_err(|e| e.to_string())?;
        errs.push(
            (0..s.solution.len())
                .map(|i| (s.solution.values[i] - u(s.solution.node(i)[0])).abs())
                .fold(0.0, f64::max),
        );
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    if orders.iter().any(|o| (o - 2.0).abs() > 0.1) {
        return Err(format!("Dirichlet orders {orders:?}"));
    }

    for n in 0..=3u32 {
        let t = 3f64.powi(16 * n as i32);
        let p = parabolic_parameters(t, 0.5).map_err(|e| e.to_string())?;
        if p.n != n || p.tau != t.powf(0.75) {
            return Err(format!("t=3^{}: {p:?}", 16 * n));
        }
    }
    Ok(format!(
        "normalization and composition to {:.0e}, Dirichlet orders {orders:.3?}, tau and n exact",
        norm.max(comp)
    ))
}

fn reversibility() -> Outcome {
    let mut worst: f64 = 0.0;
    for model in [CoefficientModel::identity(), count_indicator()] {
        let k = lattice_transition_matrix(&model, 4.0, 8, 0.3, 3).map_err(|e| e.to_string())?;
        worst = worst.max(detailed_balance_defect(&k));
    }
    if worst >= 1e-10 {
        return Err(format!("detailed balance defect {worst:.1e}"));
    }
    let (f, g) = (bump(0.0, 2.0), bump(0.7, 3.0));
    let run = |dt: f64, seed: u64| {
        let params = ChainParams::new(dt, torus(), count_indicator(), 1.0).unwrap();
        two_point_sweep(
            &f,
            &g,
            &[(0.5, 0.0), (1.0, 0.0)],
            &params,
            1500,
            RandomStream::new(seed),
            Exec::default(),
            None,
        )
        .unwrap()
    };
    let (coarse, fine) = (run(0.1, 61), run(0.05, 62));
    let mut z = Vec::new();
    for (a, b) in coarse.iter().zip(&fine) {
        let se = a.se.hypot(b.se);
        if !within(a.estimate, b.estimate, se) {
            return Err(format!(
                "lag {}: dt 0.1 gives {} ± {}, dt 0.05 gives {} ± {}",
                a.t, a.estimate, a.se, b.estimate, b.se
            ));
        }
        z.push((a.estimate - b.estimate) / se);
    }
    Ok(format!("defect {worst:.1e}, halving z-scores {z:+.2?}"))
}

fn formula_fidelity() -> Outcome {
    for alpha in [0.0, 0.3, 1.0, 2.5] {
        let beta = parabolic_parameters(10.0, alpha).unwrap().beta;
        if beta != alpha.min(1.0) / 16.0 {
            return Err(format!("alpha={alpha}: beta {beta}"));
        }
        for m in 0..=8u32 {
            let n = elliptic_mesoscale(m, alpha, AlphaSource::Estimated).unwrap().n;
            if n != (m as f64 / (1.0 + alpha)).floor() as u32 {
                return Err(format!("alpha={alpha}, m={m}: mesoscale {n}"));
            }
            let t = gk_threshold(m, alpha);
            if t != 3f64.powf(-2.0 * (1.0 + alpha) * m as f64) {
                return Err(format!("alpha={alpha}, m={m}: threshold {t}"));
            }
            let mut cases = vec![(1.0, GkRegime::Constant, "constant"), (5.0, GkRegime::Constant, "constant")];
            // at m = 0 both thresholds are 1 and the constant case wins
            if m > 0 {
                cases.extend([(t, GkRegime::CubeSize, "3^{−αm}"), (t / 2.0, GkRegime::CubeSize, "3^{−αm}")]);
            }
            for (lambda, regime, label) in cases {
                let r = GkRegime::classify(lambda, m, alpha);
                if r != regime || r.label() != label {
                    return Err(format!("alpha={alpha}, m={m}, lambda={lambda}: {r:?}"));
                }
            }
            if m > 0 {
                let mid = (t * 1.0001).min(0.999);
                let r = GkRegime::classify(mid, m, alpha);
                if r != GkRegime::Resolvent || r.label() != "λ^{α/(2(1+α))}" {
                    return Err(format!("alpha={alpha}, m={m}, lambda={mid}: {r:?}"));
                }
            }
        }
    }
    Ok("beta, elliptic mesoscale, thresholds and regime labels".into())
}

fn cross_route() -> Outcome {
    let model = count_indicator();
    let spec = CellProblemSpec::new(2, 1, 1.0, model, 3000, 21);
    let run = compute_abar(&spec, Exec::default()).map_err(|e| e.to_string())?;
    let sys = spec.system(false, Exec::default()).map_err(|e| e.to_string())?;
    let p = spec.direction_point();
    let integral = gk_integral_on(&sys, &p, 0.0, spec.ridge).map_err(|e| e.to_string())?;
    let palm = palm_flux(&model, 1.0, &p, 1, 20000, RandomStream::new(5), Exec::default()).map_err(|e| e.to_string())?;
    let inputs = GkInputs {
        direction: p,
        dim: 1,
        abar: run.estimate.abar,
        abar_se: run.estimate.abar_se,
        palm,
        integral,
        alpha: 0.5,
        alpha_source: AlphaSource::Override,
    };
    let r = gk_bracket(2, 0.0, &inputs).map_err(|e| e.to_string())?;
    let (rec, rec_se) = r.reconstructed_half_abar();
    let se = rec_se.hypot(r.half_abar_se);
    ensure(
        within(rec, r.half_abar, se),
        format!(
            "Green–Kubo {rec:.4} ± {rec_se:.4}, variational {:.4} ± {:.4}",
            r.half_abar, r.half_abar_se
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("identity exactness", identity_exactness),
        ("structural order", structural_order),
        ("oracle equivalence", oracle_equivalence),
        ("equal-time white noise", white_noise),
        ("heat kernel and PDE determinism", heat_kernel_and_pde),
        ("reversibility", reversibility),
        ("formula fidelity", formula_fidelity),
        ("cross-route consistency", cross_route),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {} {name} ({secs:.1}s): {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {d}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
