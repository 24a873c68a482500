use serde::{Deserialize, Serialize};

use super::chain::{simulate, ChainParams};
use crate::configuration::{sample_poisson, Configuration};
use crate::error::{invalid, Error, Result};
use crate::homogenized::{apply_homog_semigroup, two_point_prediction, GridFunction, HeatKernel};
use crate::par::{map_indexed, Exec};
use crate::report::{fmt_f64, CsvTable};
use crate::rng::RandomStream;
use crate::stats::batch_means;

const BATCHES: usize = 50;

/// `N^{-d/2} (sum_x f(x/N) - rho int f(x/N) dx)` with `f` on the torus of
/// side `L/N`.
pub fn fluctuation_field(mu: &Configuration, f: &GridFunction, rho: f64, scale: f64) -> Result<f64> {
    if !(scale >= 1.0) {
        return Err(invalid("scale", "must be at least 1"));
    }
    if !f.domain.is_torus() || !mu.domain.is_torus() {
        return Err(invalid("f", "the fluctuation field lives on a torus"));
    }
    let side = mu.domain.side;
    if (f.domain.side * scale - side).abs() > 1e-9 * side || f.dim() != mu.dim() {
        return Err(Error::Inconsistent(format!(
            "test function torus of side {} does not match {side} / {scale}",
            f.domain.side
        )));
    }
    let d = mu.dim() as i32;
    let sum: f64 = mu
        .points
        .iter()
        .map(|x| {
            let y = [x[0] / scale, x[1] / scale];
            f.value_at(&y)
        })
        .sum();
    let mean = rho * scale.powi(d) * f.integral();
    Ok((sum - mean) / scale.powf(d as f64 / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub t: f64,
    pub s: f64,
    /// Estimate of `E[Y_t(f) Y_s(g)]`.
    pub estimate: f64,
    pub se: f64,
    pub replicas: usize,
    pub prediction: Option<f64>,
    pub discrepancy: Option<f64>,
}

impl CorrelationEstimate {
    /// `|estimate - prediction| <= k se`.
    pub fn consistent(&self, k: f64) -> Option<bool> {
        self.discrepancy.map(|d| d.abs() <= k * self.se.max(crate::stats::SE_FLOOR))
    }
}

fn replica_start(params: &ChainParams, stream: &RandomStream) -> Result<Configuration> {
    sample_poisson(&params.domain, params.rho, &mut stream.branch("initial").rng())
}

/// Two-point estimates for several `(t, s)` pairs from one set of replicas
/// (common random numbers across pairs).
pub fn two_point_sweep(
    f: &GridFunction,
    g: &GridFunction,
    pairs: &[(f64, f64)],
    params: &ChainParams,
    replicas: usize,
    stream: RandomStream,
    exec: Exec,
    kernel: Option<&HeatKernel>,
) -> Result<Vec<CorrelationEstimate>> {
    if replicas == 0 {
        return Err(Error::NoSamples);
    }
    if pairs.iter().any(|&(t, s)| !(t >= s && s >= 0.0)) {
        return Err(invalid("times", "need t >= s >= 0"));
    }
    let mut times: Vec<f64> = pairs.iter().flat_map(|&(t, s)| [s, t]).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let rows: Vec<Result<Vec<f64>>> = map_indexed(exec, replicas, |r| {
        let rs = stream.substream(r as u64);
        let start = replica_start(params, &rs)?;
        let traj = simulate(&start, params, &times, rs.branch("chain"))?;
        pairs
            .iter()
            .map(|&(t, s)| {
                let at = |time: f64| traj.at(time, params.dt).ok_or(Error::Inconsistent("missing snapshot".into()));
                Ok(fluctuation_field(at(t)?, f, params.rho, 1.0)? * fluctuation_field(at(s)?, g, params.rho, 1.0)?)
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<Vec<f64>>>>()?;
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(t, s))| {
            let values: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (estimate, se) = batch_means(&values, BATCHES);
            let prediction = match kernel {
                Some(hk) => Some(two_point_prediction(f, g, t - s, hk, params.rho)?),
                None => None,
            };
            Ok(CorrelationEstimate {
                t,
                s,
                estimate,
                se,
                replicas,
                prediction,
                discrepancy: prediction.map(|p| estimate - p),
            })
        })
        .collect()
}

/// `E[Y_t(f) Y_s(g)]` over `replicas` chains started from fresh Poisson samples.
pub fn two_point_estimate(
    f: &GridFunction,
    g: &GridFunction,
    t: f64,
    s: f64,
    params: &ChainParams,
    replicas: usize,
    stream: RandomStream,
    exec: Exec,
    kernel: Option<&HeatKernel>,
) -> Result<CorrelationEstimate> {
    Ok(two_point_sweep(f, g, &[(t, s)], params, replicas, stream, exec, kernel)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupDiff {
    pub t: f64,
    /// Estimate of `||(P_t - Pbar_t) F||^2` before clipping.
    pub squared: f64,
    pub squared_se: f64,
    /// `sqrt(max(squared, 0))`.
    pub norm: f64,
    pub replicas: usize,
}

/// Independent chains started from each initial configuration in [`semigroup_diff`].
pub const INNER_CHAINS: usize = 8;

/// `||(P_t - Pbar_t) F||_{L^2}` for `F = Y(f)` through
/// `<F, P_2t F> + <F, Pbar_2t F> - 2 <Pbar_t F, P_t F>`.
///
/// The chain terms are taken conditionally on the start `mu_0`: with
/// `F_1..F_K` the values of `F` after time `t` on independent chains from
/// `mu_0`, the U-statistic of `F_j F_k` (`j != k`) is unbiased for
/// `(P_t F)^2(mu_0)`, whose mean is `<F, P_2t F>` by reversibility, and the
/// mean of `F_k` times `Pbar_t F(mu_0)` gives the cross term. The middle term
/// is `E[(Pbar_t F)^2]`, sampled on the same `mu_0` so that the three terms
/// cancel to second order in the conditional noise.
pub fn semigroup_diff(
    f: &GridFunction,
    t: f64,
    params: &ChainParams,
    kernel: &HeatKernel,
    replicas: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<SemigroupDiff> {
    semigroup_diff_with(f, t, params, kernel, replicas, INNER_CHAINS, stream, exec)
}

pub fn semigroup_diff_with(
    f: &GridFunction,
    t: f64,
    params: &ChainParams,
    kernel: &HeatKernel,
    replicas: usize,
    inner: usize,
    stream: RandomStream,
    exec: Exec,
) -> Result<SemigroupDiff> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if replicas == 0 {
        return Err(Error::NoSamples);
    }
    if inner < 2 {
        return Err(invalid("inner", "need at least two chains per start"));
    }
    let f_t = apply_homog_semigroup(f, t, kernel)?;
    let rho = params.rho;
    let values: Vec<Result<f64>> = map_indexed(exec, replicas, |r| {
        let rs = stream.substream(r as u64);
        let start = replica_start(params, &rs)?;
        let b = fluctuation_field(&start, &f_t, rho, 1.0)?;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for k in 0..inner {
            let traj = simulate(&start, params, &[t], rs.branch("chain").substream(k as u64))?;
            let v = fluctuation_field(&traj.snapshots[0].1, f, rho, 1.0)?;
            sum += v;
            sum_sq += v * v;
        }
        let kf = inner as f64;
        let square = (sum * sum - sum_sq) / (kf * (kf - 1.0));
        Ok(square + b * b - 2.0 * b * sum / kf)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let (squared, se) = batch_means(&values, BATCHES);
    Ok(SemigroupDiff {
        t,
        squared,
        squared_se: se,
        norm: squared.max(0.0).sqrt(),
        replicas,
    })
}

pub fn correlation_csv(rows: &[CorrelationEstimate], params: &ChainParams) -> CsvTable {
    let mut table = CsvTable::new(&["t", "s", "estimate", "SE", "prediction", "discrepancy"])
        .meta("d", params.domain.dim)
        .meta("side", fmt_f64(params.domain.side))
        .meta("rho", fmt_f64(params.rho))
        .meta("dt", fmt_f64(params.dt))
        .meta("model", params.model.name());
    for r in rows {
        table.push(vec![
            fmt_f64(r.t),
            fmt_f64(r.s),
            fmt_f64(r.estimate),
            fmt_f64(r.se),
            fmt_f64(r.prediction.unwrap_or(f64::NAN)),
            fmt_f64(r.discrepancy.unwrap_or(f64::NAN)),
        ]);
    }
    table
}
