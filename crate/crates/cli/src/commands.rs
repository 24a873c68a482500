use std::collections::BTreeMap;

use bulkdiff::cell_problems::{
    abar_table, compute_abar, extrapolate_abar, AbarEstimate, CellProblemSpec, Extrapolation, ExtrapolationStatus,
};
use bulkdiff::dynamics::{correlation_csv, simulate, two_point_sweep, ChainParams, CorrelationEstimate};
use bulkdiff::green_kubo::{gk_bracket, gk_integral_on, gk_mesoscale, gk_sweep_csv, palm_flux, GkInputs, GkReport};
use bulkdiff::homogenized::{AlphaSource, GridFunction, HeatKernel};
use bulkdiff::report::CsvTable;
use bulkdiff::{sample_poisson, CoefficientModel, Domain, Exec, Point, RandomStream, SymMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BumpConfig, ExperimentConfig};
use crate::error::{CliError, TaskContext};
use crate::output::{task_seed, RunDir};

/// Everything a command needs besides its own config section.
pub struct Context {
    pub config: ExperimentConfig,
    pub model: CoefficientModel,
    pub seed: u64,
    pub alpha_override: Option<f64>,
    pub exec: Exec,
    /// Seeds handed out so far, by task label.
    pub seeds: BTreeMap<String, u64>,
}

impl Context {
    fn seed_for(&mut self, label: &str) -> u64 {
        let s = task_seed(self.seed, label);
        self.seeds.insert(label.to_string(), s);
        s
    }
}

fn csv_bytes(t: &CsvTable) -> Vec<u8> {
    let mut out = Vec::new();
    t.write_to(&mut out).expect("writing to memory");
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AbarOutcome {
    pub estimates: Vec<AbarEstimate>,
    pub extrapolation: Option<Extrapolation>,
}

fn abar_specs(ctx: &mut Context) -> Result<Vec<CellProblemSpec>, CliError> {
    let section = ctx
        .config
        .abar
        .clone()
        .ok_or_else(|| CliError::Config("missing [abar] section".into()))?;
    let (dim, rho, model, basis) = (ctx.config.dim, ctx.config.rho, ctx.model, ctx.config.basis());
    Ok(section
        .ms
        .iter()
        .map(|&m| {
            let mut spec = CellProblemSpec::new(m, dim, rho, model, section.samples, ctx.seed_for(&format!("abar/m={m}")));
            spec.basis = basis.clone();
            spec
        })
        .collect())
}

/// One estimate per cube size (cubes run concurrently) and, with three or
/// more consecutive sizes, the extrapolation.
pub fn run_abar(ctx: &mut Context) -> Result<AbarOutcome, CliError> {
    let specs = abar_specs(ctx)?;
    let exec = ctx.exec;
    let estimates = specs
        .par_iter()
        .map(|spec| compute_abar(spec, exec).map(|r| r.estimate).task(|| format!("abar m={}", spec.m)))
        .collect::<Result<Vec<_>, _>>()?;
    let consecutive = estimates.windows(2).all(|w| w[1].m == w[0].m + 1);
    let extrapolation = if estimates.len() >= 3 && consecutive {
        Some(extrapolate_abar(&estimates).task(|| "extrapolation".into())?)
    } else {
        None
    };
    Ok(AbarOutcome { estimates, extrapolation })
}

pub fn cmd_abar(ctx: &mut Context, dir: &mut RunDir) -> Result<String, CliError> {
    let out = run_abar(ctx)?;
    dir.write("abar.csv", &csv_bytes(&abar_table(&out.estimates)))?;
    dir.write_json("abar.json", &out)?;
    if let Some(e) = &out.extrapolation {
        dir.write_json("extrapolation.json", e)?;
    }
    let mut summary = String::new();
    for e in &out.estimates {
        summary += &format!(
            "m={} abar={:?} abar_star={:?} J={:?}\n",
            e.m,
            e.abar.rows(),
            e.abar_star.rows(),
            e.j.iter().map(|j| j.value).collect::<Vec<_>>()
        );
    }
    if let Some(e) = &out.extrapolation {
        summary += &format!("extrapolation: {:?} alpha_hat={:?}\n", e.status, e.alpha_hat);
    }
    Ok(summary)
}

/// The matrix the predictions and brackets are measured against.
#[derive(Debug, Clone, Serialize)]
pub struct Reference {
    pub abar: SymMatrix,
    pub abar_se: SymMatrix,
    pub source: String,
    pub alpha_hat: Option<f64>,
}

fn reference(ctx: &mut Context, explicit: Option<&Vec<Vec<f64>>>) -> Result<Reference, CliError> {
    let dim = ctx.config.dim;
    if let Some(rows) = explicit {
        return Ok(Reference {
            abar: ctx.config.matrix(rows, "abar")?,
            abar_se: SymMatrix::zeros(dim),
            source: "config".into(),
            alpha_hat: None,
        });
    }
    if ctx.model.is_identity() && ctx.config.abar.is_none() {
        return Ok(Reference {
            abar: SymMatrix::identity(dim),
            abar_se: SymMatrix::zeros(dim),
            source: "identity".into(),
            alpha_hat: None,
        });
    }
    let out = run_abar(ctx)?;
    let last = out.estimates.last().expect("validated nonempty");
    let alpha_hat = out.extrapolation.as_ref().and_then(|e| e.alpha_hat).filter(|a| *a > 0.0);
    Ok(match &out.extrapolation {
        Some(e) if e.status != ExtrapolationStatus::Refused => Reference {
            abar: e.limit,
            abar_se: last.abar_se,
            source: format!("extrapolated ({:?})", e.status).to_lowercase(),
            alpha_hat,
        },
        _ => Reference {
            abar: last.abar,
            abar_se: last.abar_se,
            source: format!("cube m={}", last.m),
            alpha_hat,
        },
    })
}

fn bump(domain: Domain, cells: usize, b: &BumpConfig) -> Result<GridFunction, CliError> {
    let (c, w) = (b.center, b.width);
    GridFunction::from_fn(domain, cells, |x| (-(x[0] - c).powi(2) / (2.0 * w * w)).exp()).task(|| "test function".into())
}

pub fn cmd_two_point(ctx: &mut Context, dir: &mut RunDir) -> Result<String, CliError> {
    let tp = ctx
        .config
        .two_point
        .clone()
        .ok_or_else(|| CliError::Config("missing [two_point] section".into()))?;
    let reference = reference(ctx, tp.abar.as_ref())?;
    let torus = Domain::torus(1, tp.side).task(|| "torus".into())?;
    let params = ChainParams::new(tp.dt, torus, ctx.model, ctx.config.rho).task(|| "chain parameters".into())?;
    let f = bump(torus, tp.cells, &tp.f)?;
    let g = bump(torus, tp.cells, &tp.g)?;
    let hk = HeatKernel::new(reference.abar).task(|| "heat kernel".into())?;
    let pairs: Vec<(f64, f64)> = tp.lags.iter().map(|l| (tp.s + l, tp.s)).collect();
    let stream = RandomStream::new(ctx.seed_for("two-point"));
    let rows: Vec<CorrelationEstimate> =
        two_point_sweep(&f, &g, &pairs, &params, tp.replicas, stream, ctx.exec, Some(&hk)).task(|| "two-point sweep".into())?;
    dir.write("two_point.csv", &csv_bytes(&correlation_csv(&rows, &params)))?;
    dir.write_json("reference.json", &reference)?;
    if tp.write_trajectory {
        let rs = stream.substream(0);
        let start = sample_poisson(&torus, ctx.config.rho, &mut rs.branch("initial").rng()).task(|| "initial sample".into())?;
        let mut times: Vec<f64> = pairs.iter().flat_map(|&(t, s)| [s, t]).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        let traj = simulate(&start, &params, &times, rs.branch("chain")).task(|| "trajectory".into())?;
        let files = traj.write_dir(&dir.path.join("trajectory")).task(|| "trajectory files".into())?;
        for p in files {
            dir.adopt(&p)?;
        }
    }
    let mut summary = format!("reference abar ({}) = {:?}\n", reference.source, reference.abar.rows());
    for r in &rows {
        summary += &format!(
            "t={} s={} estimate={:.5} se={:.5} prediction={:.5}\n",
            r.t,
            r.s,
            r.estimate,
            r.se,
            r.prediction.unwrap_or(f64::NAN)
        );
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct Reconstruction {
    m: u32,
    /// Palm flux minus the normalized integral at `lambda = 0`.
    half_abar_reconstructed: f64,
    half_abar_reconstructed_se: f64,
    /// `1/2 p . abar(cube) p` from the variational problem on the same samples.
    half_abar_cube: f64,
}

#[derive(Debug, Clone, Serialize)]
struct GkOutput<'a> {
    reference: &'a Reference,
    alpha: f64,
    alpha_source: AlphaSource,
    /// `n` for each positive `lambda`, from the largest cube.
    mesoscales: Vec<(f64, u32)>,
    reports: &'a [GkReport],
    reconstruction: Vec<Reconstruction>,
}

pub fn cmd_green_kubo(ctx: &mut Context, dir: &mut RunDir) -> Result<(String, f64, AlphaSource), CliError> {
    let gk = ctx
        .config
        .green_kubo
        .clone()
        .ok_or_else(|| CliError::Config("missing [green_kubo] section".into()))?;
    let dim = ctx.config.dim;
    let reference = reference(ctx, gk.abar.as_ref())?;
    let (alpha, alpha_source) = match (ctx.alpha_override, gk.alpha, reference.alpha_hat) {
        (Some(a), _, _) => (a, AlphaSource::Override),
        (None, Some(a), _) => (a, AlphaSource::Override),
        (None, None, Some(a)) => (a, AlphaSource::Estimated),
        _ => {
            return Err(CliError::Config(
                "no exponent for the regime thresholds: set green_kubo.alpha, pass --alpha-override, or give [abar] at least three consecutive cubes".into(),
            ))
        }
    };
    let mut p: Point = [0.0; 2];
    match &gk.direction {
        Some(d) => p[..dim].copy_from_slice(d),
        None => p[0] = 1.0,
    }
    let palm_seed = ctx.seed_for("green-kubo/palm");
    let palm = palm_flux(
        &ctx.model,
        ctx.config.rho,
        &p,
        dim,
        gk.palm_samples,
        RandomStream::new(palm_seed),
        ctx.exec,
    )
    .task(|| "palm flux".into())?;
    let with_mass = gk.lambdas.iter().any(|l| *l > 0.0);
    let specs: Vec<CellProblemSpec> = gk
        .ms
        .iter()
        .map(|&m| {
            let mut spec = CellProblemSpec::new(
                m,
                dim,
                ctx.config.rho,
                ctx.model,
                gk.samples,
                ctx.seed_for(&format!("green-kubo/m={m}")),
            );
            spec.basis = ctx.config.basis();
            spec.direction = p[..dim].to_vec();
            spec
        })
        .collect();
    let exec = ctx.exec;
    let per_cube = specs
        .par_iter()
        .map(|spec| {
            let task = || format!("green-kubo m={}", spec.m);
            let sys = spec.system(with_mass, exec).task(task)?;
            let mut reports = Vec::new();
            let mut recon = None;
            for &lambda in &gk.lambdas {
                let integral = gk_integral_on(&sys, &p, lambda, spec.ridge).task(|| format!("green-kubo m={} lambda={lambda}", spec.m))?;
                let inputs = GkInputs {
                    direction: p,
                    dim,
                    abar: reference.abar,
                    abar_se: reference.abar_se,
                    palm,
                    integral,
                    alpha,
                    alpha_source,
                };
                let r = gk_bracket(spec.m, lambda, &inputs).task(task)?;
                if lambda == 0.0 {
                    let (v, se) = r.reconstructed_half_abar();
                    let nu = bulkdiff::cell_problems::solve_nu_on(&sys, &[p], spec.ridge).task(task)?.remove(0);
                    recon = Some(Reconstruction {
                        m: spec.m,
                        half_abar_reconstructed: v,
                        half_abar_reconstructed_se: se,
                        half_abar_cube: nu.value,
                    });
                }
                reports.push(r);
            }
            Ok((reports, recon))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut reports = Vec::new();
    let mut reconstruction = Vec::new();
    for (r, c) in per_cube {
        reports.extend(r);
        reconstruction.extend(c);
    }
    let m_max = *gk.ms.iter().max().expect("validated nonempty");
    let mesoscales = gk
        .lambdas
        .iter()
        .filter(|l| **l > 0.0)
        .map(|&l| gk_mesoscale(l, alpha, m_max).map(|n| (l, n)).task(|| "mesoscale".into()))
        .collect::<Result<Vec<_>, _>>()?;
    dir.write("gk_sweep.csv", &csv_bytes(&gk_sweep_csv(&reports)))?;
    dir.write_json(
        "gk_reports.json",
        &GkOutput {
            reference: &reference,
            alpha,
            alpha_source,
            mesoscales,
            reports: &reports,
            reconstruction: reconstruction.clone(),
        },
    )?;
    let mut summary = format!(
        "reference abar ({}) = {:?}; alpha = {alpha} ({alpha_source:?}); palm flux = {:.5} ± {:.5}\n",
        reference.source,
        reference.abar.rows(),
        palm.value,
        palm.se
    );
    for r in &reports {
        summary += &format!(
            "m={} lambda={} bracket={:.5} se={:.5} regime={}\n",
            r.m, r.lambda, r.bracket, r.bracket_se, r.regime_label
        );
    }
    for c in &reconstruction {
        summary += &format!(
            "m={}: palm - integral = {:.5} ± {:.5}, variational = {:.5}\n",
            c.m, c.half_abar_reconstructed, c.half_abar_reconstructed_se, c.half_abar_cube
        );
    }
    Ok((summary, alpha, alpha_source))
}
