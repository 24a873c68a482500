//! From cell-problem values to matrices: polarization, the duality gap,
//! corrector decorrelation and extrapolation in the cube size.

use serde::{Deserialize, Serialize};

use super::solve::{objective_rows, ratio_samples, solve_nu_on, solve_nu_star_on, CellProblemSpec, CellSolution, ProblemKind};
use crate::configuration::{sample_poisson, Configuration};
use crate::error::{invalid, Error, Result};
use crate::geometry::{unit, Domain, Point, INTERACTION_RADIUS, MAX_DIM};
use crate::matrix::SymMatrix;
use crate::par::{map_indexed, Exec};
use crate::report::{fmt_f64, CsvTable};
use crate::rng::RandomStream;
use crate::stats::{covariance_se, mean_se};

/// Duality gap along one coordinate direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JEstimate {
    pub direction: usize,
    /// `nu(p) + nu*(q) - p.q` with `q = abar_* p`.
    pub value: f64,
    pub se: f64,
    /// `1/2 grad w . a grad w` with `w` the difference of the two optimizers.
    pub quadratic: f64,
    pub quadratic_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbarEstimate {
    pub m: u32,
    pub dim: usize,
    pub abar: SymMatrix,
    pub abar_se: SymMatrix,
    pub abar_star: SymMatrix,
    pub abar_star_se: SymMatrix,
    /// `nu(e_i)` and its SE per coordinate direction.
    pub nu: Vec<(f64, f64)>,
    pub nu_star: Vec<(f64, f64)>,
    pub j: Vec<JEstimate>,
    pub samples: usize,
    pub seed: RandomStream,
    /// `abar` is an upper bound up to sampling error; `abar_star` comes
    /// from a restricted maximization and may overestimate.
    pub bound_note: String,
    pub extrapolation: Option<Extrapolation>,
}

fn directions(dim: usize) -> Vec<Point> {
    let mut dirs: Vec<Point> = (0..dim).map(unit).collect();
    if dim == 2 {
        dirs.push([1.0, 1.0]);
    }
    dirs
}

fn find<'a>(sols: &'a [CellSolution], p: &Point) -> Result<&'a CellSolution> {
    sols.iter()
        .find(|s| (0..MAX_DIM).all(|d| (s.direction[d] - p[d]).abs() < 1e-12))
        .ok_or_else(|| Error::Inconsistent(format!("no solution along {:?}", p)))
}

/// Per-sample matrices from polarization of the values `nu(e_i)`, `nu(e_i + e_j)`.
fn polarize(sols: &[CellSolution], dim: usize) -> Result<Vec<SymMatrix>> {
    let diag: Vec<&CellSolution> = (0..dim).map(|i| find(sols, &unit(i))).collect::<Result<_>>()?;
    let off = if dim == 2 { Some(find(sols, &[1.0, 1.0])?) } else { None };
    let m = diag[0].per_sample.len();
    let mut out = Vec::with_capacity(m);
    for s in 0..m {
        let mut a = SymMatrix::zeros(dim);
        for i in 0..dim {
            a.set(i, i, 2.0 * diag[i].per_sample[s]);
        }
        if let Some(o) = off {
            a.set(0, 1, o.per_sample[s] - diag[0].per_sample[s] - diag[1].per_sample[s]);
        }
        out.push(a);
    }
    Ok(out)
}

fn matrix_mean_se(per_sample: &[SymMatrix], dim: usize) -> (SymMatrix, SymMatrix) {
    let mut mean = SymMatrix::zeros(dim);
    let mut se = SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let v: Vec<f64> = per_sample.iter().map(|a| a.get(i, j)).collect();
            let (m, s) = mean_se(&v);
            mean.set(i, j, m);
            se.set(i, j, s);
        }
    }
    (mean, se)
}

fn check_shared(nu: &[CellSolution], star: &[CellSolution]) -> Result<(usize, usize)> {
    let first = nu.first().or(star.first()).ok_or(Error::NoSamples)?;
    for s in nu.iter().chain(star) {
        if s.dim != first.dim
            || s.model != first.model
            || !std::sync::Arc::ptr_eq(&s.sample_set, &first.sample_set)
            || s.basis.window() != first.basis.window()
        {
            return Err(Error::Inconsistent("cell solutions do not share model, cube and samples".into()));
        }
    }
    for s in nu {
        if s.kind != ProblemKind::Nu {
            return Err(Error::Inconsistent("expected minimization solutions".into()));
        }
    }
    for s in star {
        if s.kind != ProblemKind::NuStar {
            return Err(Error::Inconsistent("expected maximization solutions".into()));
        }
    }
    Ok((first.dim, first.per_sample.len()))
}

/// `abar_*` per sample: the inverse of the polarized maximization matrix,
/// linearized around its mean.
fn abar_star_samples(star: &[CellSolution], dim: usize) -> Result<(SymMatrix, Vec<SymMatrix>)> {
    let inv_samples = polarize(star, dim)?;
    let (inv_mean, _) = matrix_mean_se(&inv_samples, dim);
    let a = inv_mean.inverse().ok_or(Error::SingularSystem { dim })?;
    let lin = inv_samples.iter().map(|b| a.sub(&a.sandwich(&b.sub(&inv_mean)))).collect();
    Ok((a, lin))
}

/// Builds `abar(cube)` and `abar_*(cube)` from solutions along `e_i` (and
/// `e_1 + e_2` in two dimensions). Standard errors come from the per-sample
/// values; `abar_*` uses the delta method for the inverse.
pub fn assemble_abar(nu: &[CellSolution], star: &[CellSolution]) -> Result<AbarEstimate> {
    let (dim, samples) = check_shared(nu, star)?;
    let a_samples = polarize(nu, dim)?;
    let (abar, abar_se) = matrix_mean_se(&a_samples, dim);
    let (abar_star, lin) = abar_star_samples(star, dim)?;
    let (_, abar_star_se) = matrix_mean_se(&lin, dim);
    let first = &nu[0];
    let cube_side = first.basis.window().side;
    let m = cube_side.log(3.0).round().max(0.0) as u32;
    let nu_vals = (0..dim)
        .map(|i| find(nu, &unit(i)).map(|s| (s.value, s.se)))
        .collect::<Result<_>>()?;
    let star_vals = (0..dim)
        .map(|i| find(star, &unit(i)).map(|s| (s.value, s.se)))
        .collect::<Result<_>>()?;
    let mut j = Vec::with_capacity(dim);
    for i in 0..dim {
        let q = abar_star.mul_vec(&unit(i));
        let parts: Vec<(f64, &CellSolution)> = (0..dim).map(|k| find(star, &unit(k)).map(|s| (q[k], s))).collect::<Result<_>>()?;
        let u = CellSolution::combine(&parts, Exec::default())?;
        let mut est = duality_gap_j(find(nu, &unit(i))?, &u)?;
        est.direction = i;
        j.push(est);
    }
    Ok(AbarEstimate {
        m,
        dim,
        abar,
        abar_se,
        abar_star,
        abar_star_se,
        nu: nu_vals,
        nu_star: star_vals,
        j,
        samples,
        seed: first.seed,
        bound_note: "abar: upper (infimum over a subspace); abar_star: from a restricted maximization, may overestimate".into(),
        extrapolation: None,
    })
}

/// `J = nu(p) + nu*(q) - p.q` for a minimization along `p` and a
/// maximization along `q` on the same sample set, together with the
/// quadratic form of the optimizer difference as a cross-check.
pub fn duality_gap_j(nu: &CellSolution, star: &CellSolution) -> Result<JEstimate> {
    if nu.kind != ProblemKind::Nu || star.kind != ProblemKind::NuStar {
        return Err(Error::Inconsistent("J needs a minimization and a maximization".into()));
    }
    if !std::sync::Arc::ptr_eq(&nu.sample_set, &star.sample_set) || !std::sync::Arc::ptr_eq(&nu.basis, &star.basis) {
        return Err(Error::Inconsistent("J needs both problems on one sample set and basis".into()));
    }
    let dim = nu.dim;
    let pq: f64 = (0..dim).map(|d| nu.direction[d] * star.direction[d]).sum();
    let per: Vec<f64> = nu.per_sample.iter().zip(&star.per_sample).map(|(a, b)| a + b - pq).collect();
    let (value, se) = mean_se(&per);
    let v = nu.optimizer().full_coefficients();
    let u = star.full_coefficients();
    let w: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
    let rows = objective_rows(
        &nu.basis,
        &nu.model,
        &nu.sample_set,
        ProblemKind::Nu,
        &w,
        &[0.0; MAX_DIM],
        &[0.0; MAX_DIM],
        Exec::default(),
    );
    let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.n).collect();
    let (quadratic, quadratic_se) = mean_se(&ratio_samples(&x, &n));
    Ok(JEstimate {
        direction: 0,
        value,
        se,
        quadratic,
        quadratic_se,
    })
}

/// Everything produced by one cube: the estimate and the solutions behind it.
#[derive(Debug, Clone)]
pub struct AbarRun {
    pub estimate: AbarEstimate,
    pub nu: Vec<CellSolution>,
    pub nu_star: Vec<CellSolution>,
}

/// Solves all directions on one shared sample set (one factorization per
/// problem type) and assembles the matrices. `spec.direction` is ignored.
pub fn compute_abar(spec: &CellProblemSpec, exec: Exec) -> Result<AbarRun> {
    let sys = spec.system(false, exec)?;
    let dirs = directions(spec.dim);
    let nu = solve_nu_on(&sys, &dirs, spec.ridge)?;
    let nu_star = solve_nu_star_on(&sys, &dirs, spec.ridge)?;
    let estimate = assemble_abar(&nu, &nu_star)?;
    Ok(AbarRun { estimate, nu, nu_star })
}

/// Summary statistic of the corrector on a translated cell and the
/// covariance of that statistic between two cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub covariance: f64,
    pub se: f64,
    /// Sup-norm distance between the cell centers.
    pub separation: f64,
    pub samples: usize,
}

/// Covariance across Poisson samples of the corrector energy on `z + cube`
/// and on `z' + cube`, where the corrector is the minimization solution on
/// the centered cube applied to the translated configuration. The energy on
/// a cell depends on particles within distance 1 of it, so cells whose
/// neighborhoods meet are rejected; `z = z'` gives the variance.
pub fn corrector_covariance(
    corrector: &CellSolution,
    z: &Point,
    z2: &Point,
    samples: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<CovarianceEstimate> {
    if corrector.kind != ProblemKind::Nu {
        return Err(Error::Inconsistent("corrector covariance needs a minimization solution".into()));
    }
    if samples < 2 {
        return Err(Error::NoSamples);
    }
    let dim = corrector.dim;
    let cell = *corrector.basis.window();
    let side = cell.side;
    let separation = (0..dim).map(|d| (z[d] - z2[d]).abs()).fold(0.0, f64::max);
    if separation > 0.0 && separation <= side + 2.0 * INTERACTION_RADIUS {
        return Err(Error::OverlappingCells(z[..dim].to_vec(), z2[..dim].to_vec()));
    }
    let mut lower = [0.0; MAX_DIM];
    let mut extent: f64 = 0.0;
    for d in 0..dim {
        lower[d] = z[d].min(z2[d]) - side / 2.0 - INTERACTION_RADIUS;
        extent = extent.max((z[d] - z2[d]).abs() + side + 2.0 * INTERACTION_RADIUS);
    }
    let big = Domain::boxed(dim, lower, extent)?;
    let rho = corrector.sample_set.rho;
    let full = corrector.full_coefficients();
    let zero = [0.0; MAX_DIM];
    let norm = rho * cell.volume();
    let stat = |mu: &Configuration, c: &Point| -> Result<f64> {
        let shifted: Vec<Point> = mu.points.iter().map(|x| [x[0] - c[0], x[1] - c[1]]).collect();
        let local = Configuration::new(mu.domain.translated(c), shifted)?;
        let set = super::samples::SampleSet::single(&cell, rho, local);
        let rows = objective_rows(
            &corrector.basis,
            &corrector.model,
            &set,
            ProblemKind::Nu,
            &full,
            &zero,
            &zero,
            Exec::Sequential,
        );
        Ok(rows[0].x / norm)
    };
    let pairs: Vec<Result<(f64, f64)>> = map_indexed(exec, samples, |s| {
        let mu = sample_poisson(&big, rho, &mut stream.substream(s as u64).rng())?;
        Ok((stat(&mu, z)?, stat(&mu, z2)?))
    });
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (covariance, se) = covariance_se(&x, &y);
    Ok(CovarianceEstimate {
        covariance,
        se,
        separation,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapolationStatus {
    /// Geometric tail fitted and added.
    Converged,
    /// All successive differences are within sampling noise; the last value is reported.
    NoiseFloor,
    /// The table is not monotone beyond noise or the fitted rate is not positive.
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub status: ExtrapolationStatus,
    pub ms: Vec<u32>,
    /// `|abar_m - abar_{m+1}|` in spectral norm.
    pub differences: Vec<f64>,
    pub alpha_hat: Option<f64>,
    /// RMS residual of the log-difference fit.
    pub fit_residual: Option<f64>,
    pub limit: SymMatrix,
    pub reason: Option<String>,
}

/// Fits `log |abar_m - abar_{m+1}| = c - alpha m log 3` by least squares and
/// adds the geometric tail `(abar_{M-1} - abar_M) r / (1 - r)`, `r = 3^-alpha`.
/// `ses` are entrywise standard errors used for the noise and monotonicity tests.
pub fn extrapolate_table(ms: &[u32], mats: &[SymMatrix], ses: &[SymMatrix]) -> Result<Extrapolation> {
    if ms.len() < 3 || mats.len() != ms.len() || ses.len() != ms.len() {
        return Err(invalid("estimates", "need at least three cube sizes with matching tables"));
    }
    if ms.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(invalid("estimates", "cube sizes must be consecutive"));
    }
    let dim = mats[0].dim;
    let last = mats[mats.len() - 1];
    let k = ms.len() - 1;
    let mut differences = Vec::with_capacity(k);
    let mut noise = Vec::with_capacity(k);
    let mut refused = None;
    for i in 0..k {
        differences.push(mats[i].sub(&mats[i + 1]).spectral_norm());
        let se = ses[i].add(&ses[i + 1]).spectral_norm();
        noise.push(3.0 * se);
        for d in 0..dim {
            let slack = 3.0 * (ses[i].get(d, d).powi(2) + ses[i + 1].get(d, d).powi(2)).sqrt();
            if mats[i + 1].get(d, d) > mats[i].get(d, d) + slack + 1e-12 {
                refused = Some(format!("entry ({d},{d}) increases from m={} to m={}", ms[i], ms[i + 1]));
            }
        }
    }
    let pts: Vec<(f64, f64)> = ms[..k]
        .iter()
        .zip(&differences)
        .filter(|(_, d)| **d > 0.0)
        .map(|(m, d)| (*m as f64 * 3f64.ln(), d.ln()))
        .collect();
    let fit = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let residual = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
        (-slope, residual)
    });
    let base = Extrapolation {
        status: ExtrapolationStatus::Refused,
        ms: ms.to_vec(),
        differences: differences.clone(),
        alpha_hat: fit.map(|f| f.0),
        fit_residual: fit.map(|f| f.1),
        limit: last,
        reason: None,
    };
    if let Some(reason) = refused {
        return Ok(Extrapolation {
            reason: Some(reason),
            ..base
        });
    }
    if differences.iter().zip(&noise).all(|(d, n)| *d <= n + 1e-12) {
        return Ok(Extrapolation {
            status: ExtrapolationStatus::NoiseFloor,
            reason: Some("successive differences within sampling noise; the last cube is reported".into()),
            ..base
        });
    }
    let Some((alpha, _)) = fit else {
        return Ok(Extrapolation {
            status: ExtrapolationStatus::NoiseFloor,
            reason: Some("fewer than two nonzero differences".into()),
            ..base
        });
    };
    if !(alpha > 0.0) {
        return Ok(Extrapolation {
            reason: Some("fitted rate is not positive".into()),
            ..base
        });
    }
    let r = 3f64.powf(-alpha);
    let tail = mats[k - 1].sub(&last).scale(r / (1.0 - r));
    Ok(Extrapolation {
        status: ExtrapolationStatus::Converged,
        limit: last.sub(&tail),
        reason: None,
        ..base
    })
}

/// Extrapolates `abar` over a table of consecutive cube sizes.
pub fn extrapolate_abar(estimates: &[AbarEstimate]) -> Result<Extrapolation> {
    let ms: Vec<u32> = estimates.iter().map(|e| e.m).collect();
    let mats: Vec<SymMatrix> = estimates.iter().map(|e| e.abar).collect();
    let ses: Vec<SymMatrix> = estimates.iter().map(|e| e.abar_se).collect();
    extrapolate_table(&ms, &mats, &ses)
}

/// One row per `(m, i, j)`; the J columns are filled on the diagonal.
pub fn abar_table(estimates: &[AbarEstimate]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "m",
        "i",
        "j",
        "abar",
        "abar_se",
        "abar_star",
        "abar_star_se",
        "J",
        "J_se",
        "J_quadratic",
        "nu",
        "nu_se",
    ]);
    for e in estimates {
        for i in 0..e.dim {
            for j in i..e.dim {
                let (jv, jse, jq, nu, nu_se) = if i == j {
                    let g = e.j[i];
                    (g.value, g.se, g.quadratic, e.nu[i].0, e.nu[i].1)
                } else {
                    (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
                };
                t.push(vec![
                    e.m.to_string(),
                    i.to_string(),
                    j.to_string(),
                    fmt_f64(e.abar.get(i, j)),
                    fmt_f64(e.abar_se.get(i, j)),
                    fmt_f64(e.abar_star.get(i, j)),
                    fmt_f64(e.abar_star_se.get(i, j)),
                    fmt_f64(jv),
                    fmt_f64(jse),
                    fmt_f64(jq),
                    fmt_f64(nu),
                    fmt_f64(nu_se),
                ]);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoefficientModel;

    #[test]
    fn synthetic_geometric_table() {
        let limit = SymMatrix::from_rows(2, &[vec![1.7, 0.1], vec![0.1, 1.4]]);
        let ms = [0, 1, 2, 3];
        let mats: Vec<SymMatrix> = ms.iter().map(|&m| limit.add(&SymMatrix::scalar(2, 3f64.powi(-m)))).collect();
        let ses = vec![SymMatrix::zeros(2); 4];
        let ex = extrapolate_table(&ms.map(|m| m as u32), &mats, &ses).unwrap();
        assert_eq!(ex.status, ExtrapolationStatus::Converged);
        assert!((ex.alpha_hat.unwrap() - 1.0).abs() < 1e-12);
        assert!(ex.limit.max_abs_diff(&limit) < 1e-12);
    }

    #[test]
    fn identity_tables_sit_at_the_noise_floor() {
        let mats = vec![SymMatrix::identity(1); 3];
        let ex = extrapolate_table(&[0, 1, 2], &mats, &[SymMatrix::zeros(1); 3]).unwrap();
        assert_eq!(ex.status, ExtrapolationStatus::NoiseFloor);
        assert_eq!(ex.limit, SymMatrix::identity(1));
        assert!(ex.alpha_hat.is_none());
    }

    #[test]
    fn increasing_tables_are_refused() {
        let mats: Vec<SymMatrix> = [1.5, 1.6, 1.7].iter().map(|&v| SymMatrix::scalar(1, v)).collect();
        let ex = extrapolate_table(&[0, 1, 2], &mats, &[SymMatrix::scalar(1, 0.001); 3]).unwrap();
        assert_eq!(ex.status, ExtrapolationStatus::Refused);
        assert_eq!(ex.limit, mats[2]);
        assert!(extrapolate_table(&[0, 1], &mats[..2], &[SymMatrix::zeros(1); 2]).is_err());
    }

    #[test]
    fn identity_model_matrices() {
        for dim in [1, 2] {
            let spec = CellProblemSpec::new(1, dim, 1.0, CoefficientModel::identity(), 50, 9);
            let run = compute_abar(&spec, Exec::default()).unwrap();
            let e = &run.estimate;
            assert!(e.abar.max_abs_diff(&SymMatrix::identity(dim)) < 1e-12);
            assert!(e.abar_star.max_abs_diff(&SymMatrix::identity(dim)) < 1e-6 + 3.0 * e.abar_star_se.spectral_norm());
            for j in &e.j {
                assert!(j.value.abs() <= 3.0 * j.se + 1e-6, "{j:?}");
            }
        }
    }

    #[test]
    fn isotropic_model_gives_scalar_matrix() {
        let model = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let spec = CellProblemSpec::new(0, 2, 1.0, model, 400, 21);
        let e = compute_abar(&spec, Exec::default()).unwrap().estimate;
        assert!(e.abar.is_symmetric(0.0));
        let se = (e.abar_se.get(0, 0).powi(2) + e.abar_se.get(1, 1).powi(2)).sqrt();
        assert!((e.abar.get(0, 0) - e.abar.get(1, 1)).abs() <= 3.0 * se + 1e-9);
        assert!(e.abar.get(0, 1).abs() <= 3.0 * e.abar_se.get(0, 1) + 1e-9);
        let ev = e.abar.eigenvalues();
        assert!(ev[0] >= 1.0 - 3.0 * se && ev[1] <= 2.0 + 3.0 * se);
    }

    #[test]
    fn j_matches_its_quadratic_form() {
        let model = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let spec = CellProblemSpec::new(1, 1, 1.0, model, 400, 2);
        let e = compute_abar(&spec, Exec::default()).unwrap().estimate;
        let j = e.j[0];
        assert!(j.value >= -3.0 * j.se);
        assert!(j.quadratic >= 0.0);
        assert!((j.value - j.quadratic).abs() <= 3.0 * (j.se + j.quadratic_se) + 1e-6, "{j:?}");
    }

    #[test]
    fn corrector_covariance_cases() {
        let model = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let spec = CellProblemSpec::new(0, 1, 1.0, model, 300, 4);
        let run = compute_abar(&spec, Exec::default()).unwrap();
        let phi = &run.nu[0];
        let s = RandomStream::new(8);
        let var = corrector_covariance(phi, &[0.0, 0.0], &[0.0, 0.0], 400, s, Exec::default()).unwrap();
        assert!(var.covariance > 0.0);
        let far = corrector_covariance(phi, &[0.0, 0.0], &[4.0, 0.0], 400, s, Exec::default()).unwrap();
        assert!(far.covariance.abs() < 3.0 * far.se, "{far:?}");
        assert!(matches!(
            corrector_covariance(phi, &[0.0, 0.0], &[2.0, 0.0], 10, s, Exec::default()),
            Err(Error::OverlappingCells(..))
        ));
        let id = CellProblemSpec::new(0, 1, 1.0, CoefficientModel::identity(), 50, 4);
        let run = compute_abar(&id, Exec::default()).unwrap();
        let zero = corrector_covariance(&run.nu[0], &[0.0, 0.0], &[0.0, 0.0], 50, s, Exec::default()).unwrap();
        assert_eq!(zero.covariance, 0.0);
    }

    #[test]
    fn table_has_one_row_per_entry() {
        let spec = CellProblemSpec::new(0, 2, 1.0, CoefficientModel::identity(), 20, 1);
        let e = compute_abar(&spec, Exec::default()).unwrap().estimate;
        let t = abar_table(&[e.clone(), e]);
        assert_eq!(t.rows.len(), 6);
    }
}
