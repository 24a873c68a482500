//! Monte Carlo summaries and the goodness-of-fit helpers used by the audits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Normal, Poisson};

use crate::rng::RandomStream;

/// A scalar Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub value: f64,
    pub se: f64,
    pub samples: usize,
    pub seed: RandomStream,
}

impl EstimatorResult {
    pub fn from_samples(values: &[f64], seed: RandomStream) -> Self {
        let (mean, se) = mean_se(values);
        Self {
            value: mean,
            se,
            samples: values.len(),
            seed,
        }
    }

    /// `|value - target| <= k * se`, with a floor for exactly reproduced values.
    pub fn within(&self, target: f64, k: f64) -> bool {
        within_se(self.value, target, self.se, k)
    }
}

/// Absolute slack added to every "within k SE" comparison so that
/// estimators with zero variance are compared up to rounding.
pub const SE_FLOOR: f64 = 1e-9;

pub fn within_se(value: f64, target: f64, se: f64, k: f64) -> bool {
    (value - target).abs() <= k * se + SE_FLOOR * (1.0 + target.abs())
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Batch-means standard error: the series is cut into `batches` contiguous
/// blocks and the SE is computed from the block averages.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.clamp(1, values.len().max(1));
    if batches < 2 {
        return mean_se(values);
    }
    let means: Vec<f64> = crate::par::chunk_ranges(values.len(), batches)
        .into_iter()
        .map(|r| {
            let len = r.len() as f64;
            values[r].iter().sum::<f64>() / len
        })
        .collect();
    let (_, se) = mean_se(&means);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, se)
}

/// Sample covariance of paired values and its standard error (the SE of the
/// mean of centered products).
pub fn covariance_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (c, se) = mean_se(&prods);
    (c * n as f64 / (n as f64 - 1.0).max(1.0), se)
}

/// Chi-square goodness of fit of observed counts against Poisson(mean).
/// Adjacent tail bins are pooled so every expected bin count is at least 5.
/// Returns the p-value.
pub fn poisson_chi_square(counts: &[usize], mean: f64) -> f64 {
    let n = counts.len() as f64;
    let pois = Poisson::new(mean.max(1e-12)).expect("positive mean");
    let max_k = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0usize; max_k + 1];
    for &c in counts {
        observed[c] += 1;
    }
    // bins: [0..=lo-1] pooled, lo..=hi single, [hi+1..) pooled
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    let mut k = 0usize;
    loop {
        acc_o += *observed.get(k).unwrap_or(&0) as f64;
        acc_e += n * pois.pmf(k as u64);
        let tail = n * (1.0 - poisson_cdf(&pois, k));
        if acc_e >= 5.0 && tail >= 5.0 {
            bins.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
        if tail < 5.0 {
            let rest: f64 = observed.iter().skip(k + 1).sum::<usize>() as f64;
            acc_o += rest;
            acc_e += tail;
            break;
        }
        k += 1;
    }
    if let Some(last) = bins.last_mut() {
        last.0 += acc_o;
        last.1 += acc_e;
    } else {
        bins.push((acc_o, acc_e));
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).expect("dof > 0").cdf(stat)
}

fn poisson_cdf(p: &Poisson, k: usize) -> f64 {
    (0..=k as u64).map(|j| p.pmf(j)).sum()
}

/// One-sample Kolmogorov–Smirnov test against N(0, variance). Returns the
/// p-value from the asymptotic Kolmogorov distribution.
pub fn ks_normal(samples: &[f64], variance: f64) -> f64 {
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..200 {
        let j = j as f64;
        let term = 2.0 * (-1.0f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.6666666666666667f64 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn batch_means_constant_series() {
        let (m, se) = batch_means(&[2.0; 100], 10);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn chi_square_rejects_wrong_mean() {
        // deterministic sample: exact Poisson(3) frequencies for 1000 draws
        let pois = Poisson::new(3.0).unwrap();
        let mut counts = Vec::new();
        for k in 0..20u64 {
            let n = (1000.0 * pois.pmf(k)).round() as usize;
            counts.extend(std::iter::repeat_n(k as usize, n));
        }
        assert!(poisson_chi_square(&counts, 3.0) > 0.5);
        assert!(poisson_chi_square(&counts, 4.0) < 0.01);
    }

    #[test]
    fn ks_accepts_quantiles() {
        let normal = Normal::new(0.0, 2.0).unwrap();
        let xs: Vec<f64> = (1..1000).map(|i| normal.inverse_cdf(i as f64 / 1000.0)).collect();
        assert!(ks_normal(&xs, 4.0) > 0.9);
        assert!(ks_normal(&xs, 1.0) < 0.01);
    }
}
