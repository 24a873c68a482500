//! Monte Carlo Dirichlet energies, Sobolev norms and Poincaré ratios.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ConfigFunctional;
use crate::configuration::{sample_poisson, sample_with_halo, Configuration};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, INTERACTION_RADIUS};
use crate::model::CoefficientModel;
use crate::par::{map_indexed, Exec};
use crate::rng::RandomStream;
use crate::stats::{mean_se, EstimatorResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub se: f64,
    pub samples: usize,
    /// Divided by `rho |U|`.
    pub normalized: bool,
}

fn draw_with_halo(window: &Domain, rho: f64, seed: &RandomStream, s: usize) -> Result<Configuration> {
    sample_with_halo(window, rho, INTERACTION_RADIUS, None, &mut seed.substream(s as u64).rng())
}

/// `sum_{x in U} 1/2 grad f . a grad g` for one configuration.
fn energy_density(fs: &[&dyn ConfigFunctional], model: &CoefficientModel, window: &Domain, mu: &Configuration) -> Result<DMatrix<f64>> {
    let grads: Vec<Vec<_>> = fs.iter().map(|f| f.gradients(mu)).collect::<Result<_>>()?;
    let n = fs.len();
    let mut out = DMatrix::zeros(n, n);
    for (i, x) in mu.points.iter().enumerate() {
        if !window.contains(x) {
            continue;
        }
        let a = model.eval_a(mu, x);
        for j in 0..n {
            let agj = a.mul_vec(&grads[j][i]);
            for k in 0..n {
                out[(k, j)] += 0.5 * (0..mu.dim()).map(|d| grads[k][i][d] * agj[d]).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Bilinear Dirichlet form over a family of functionals from one shared
/// sample set: entry `(j, k)` estimates `E[(rho|U|)^-1 sum_{x in U} 1/2 grad f_j . a grad f_k]`.
/// Returns the matrix of means and the matrix of standard errors.
pub fn dirichlet_gram(
    fs: &[&dyn ConfigFunctional],
    model: &CoefficientModel,
    window: &Domain,
    rho: f64,
    samples: usize,
    seed: &RandomStream,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    let z = rho * window.volume();
    let per: Vec<DMatrix<f64>> = map_indexed(Exec::default(), samples, |s| {
        let mu = draw_with_halo(window, rho, seed, s)?;
        energy_density(fs, model, window, &mu).map(|m| m / z)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let n = fs.len();
    let mut mean = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let v: Vec<f64> = per.iter().map(|m| m[(j, k)]).collect();
            let (m, e) = mean_se(&v);
            mean[(j, k)] = m;
            se[(j, k)] = e;
        }
    }
    Ok((mean, se))
}

/// `E[(rho|U|)^-1 sum_{x in U} 1/2 grad f . a grad g]` (or without the
/// normalization when `normalized` is false).
pub fn dirichlet_energy(
    f: &dyn ConfigFunctional,
    g: &dyn ConfigFunctional,
    model: &CoefficientModel,
    window: &Domain,
    rho: f64,
    samples: usize,
    seed: &RandomStream,
    normalized: bool,
) -> Result<EnergyEstimate> {
    let (mean, se) = dirichlet_gram(&[f, g], model, window, rho, samples, seed)?;
    let scale = if normalized { 1.0 } else { rho * window.volume() };
    Ok(EnergyEstimate {
        value: mean[(0, 1)] * scale,
        se: se[(0, 1)] * scale,
        samples,
        normalized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Norms {
    pub l2: f64,
    pub h1: f64,
    pub normalized_h1: f64,
    /// `E[f^2]`.
    pub mean_square: EstimatorResult,
    /// `E[sum_{x in U} |grad f|^2]`.
    pub gradient_energy: EstimatorResult,
}

fn moments(f: &dyn ConfigFunctional, window: &Domain, rho: f64, samples: usize, seed: &RandomStream) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    let rows: Vec<(f64, f64)> = map_indexed(Exec::default(), samples, |s| {
        let mu = sample_poisson(window, rho, &mut seed.substream(s as u64).rng())?;
        let v = f.evaluate(&mu)?;
        let g = f.gradients(&mu)?;
        let e: f64 = mu
            .points
            .iter()
            .zip(&g)
            .filter(|(x, _)| window.contains(x))
            .map(|(_, gi)| gi[0] * gi[0] + gi[1] * gi[1])
            .sum();
        Ok((v, e))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(rows.into_iter().unzip())
}

/// Monte Carlo `L^2`, `H^1(U)` and normalized `H^1(U)` norms.
pub fn h1_norms(f: &dyn ConfigFunctional, window: &Domain, rho: f64, samples: usize, seed: &RandomStream) -> Result<H1Norms> {
    let (vals, energies) = moments(f, window, rho, samples, seed)?;
    let squares: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let ms = EstimatorResult::from_samples(&squares, *seed);
    let ge = EstimatorResult::from_samples(&energies, *seed);
    let scale = window.volume().powf(-2.0 / window.dim as f64);
    Ok(H1Norms {
        l2: ms.value.sqrt(),
        h1: (ms.value + ge.value).sqrt(),
        normalized_h1: (scale * ms.value + ge.value).sqrt(),
        mean_square: ms,
        gradient_energy: ge,
    })
}

/// `Var(f) / (diam(U)^2 E[sum_{x in U} |grad f|^2])` for `f` in `H^1_0(U)`.
/// A functional with no gradient energy yields [`Error::ZeroEnergy`].
pub fn poincare_ratio(f: &dyn ConfigFunctional, window: &Domain, rho: f64, samples: usize, seed: &RandomStream) -> Result<f64> {
    if !f.zero_boundary() {
        return Err(invalid("f", "Poincaré ratio needs a zero-boundary functional"));
    }
    let (vals, energies) = moments(f, window, rho, samples, seed)?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let e = energies.iter().sum::<f64>() / n;
    if e <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(var / (window.diameter().powi(2) * e))
}
