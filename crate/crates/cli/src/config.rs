//! The TOML experiment file. Every field is checked before any compute starts.

use std::path::{Path, PathBuf};

use bulkdiff::function_space::BasisSpec;
use bulkdiff::{CoefficientModel, ModelKind, SymMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `identity`, `count-indicator`, `smooth-count` or `anisotropic-count`.
    pub kind: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub threshold: usize,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_lambda() -> f64 {
    2.0
}
fn default_threshold() -> usize {
    2
}
fn default_width() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub spacing: f64,
    pub pair_spacing: Option<f64>,
    #[serde(default = "default_pair_range")]
    pub pair_range: f64,
}

fn default_pair_range() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbarConfig {
    pub ms: Vec<u32>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    2000
}

/// A Gaussian bump `exp(-|x - center|^2 / (2 width^2))` on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    #[serde(default)]
    pub center: f64,
    #[serde(default = "default_width_bump")]
    pub width: f64,
}

fn default_width_bump() -> f64 {
    1.0
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self { center: 0.0, width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPointConfig {
    /// Side of the torus.
    pub side: f64,
    pub dt: f64,
    pub replicas: usize,
    /// Earlier time `s`; the pairs are `(s + lag, s)`.
    #[serde(default = "default_s")]
    pub s: f64,
    pub lags: Vec<f64>,
    /// Grid cells of the test functions per axis.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default)]
    pub f: BumpConfig,
    #[serde(default)]
    pub g: BumpConfig,
    /// Reference matrix for the prediction; computed from `[abar]` when absent.
    pub abar: Option<Vec<Vec<f64>>>,
    /// Write the trajectory of the first replica.
    #[serde(default)]
    pub write_trajectory: bool,
}

fn default_s() -> f64 {
    1.0
}
fn default_cells() -> usize {
    270
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenKuboConfig {
    pub ms: Vec<u32>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_palm_samples")]
    pub palm_samples: usize,
    /// Unit vector; defaults to `e_1`.
    pub direction: Option<Vec<f64>>,
    /// Reference matrix; computed from `[abar]` when absent.
    pub abar: Option<Vec<Vec<f64>>>,
    /// Exponent for the regime thresholds, used when no CLI override is given.
    pub alpha: Option<f64>,
}

fn default_palm_samples() -> usize {
    20000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output root; the `BULKDIFF_OUT` variable and then `bulkdiff-out` are the fallbacks.
    pub output: Option<PathBuf>,
    pub basis: Option<BasisConfig>,
    pub abar: Option<AbarConfig>,
    pub two_point: Option<TwoPointConfig>,
    pub green_kubo: Option<GreenKuboConfig>,
}

fn default_rho() -> f64 {
    1.0
}
fn default_dim() -> usize {
    1
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Cube indices above this make the dense Gram matrix impractical.
const MAX_M: u32 = 4;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| bad("config is not UTF-8"))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        let m = &self.model;
        Ok(match m.kind.as_str() {
            "identity" => ModelKind::Identity,
            "count-indicator" => ModelKind::CountIndicator { threshold: m.threshold },
            "smooth-count" => ModelKind::SmoothCount {
                threshold: m.threshold,
                width: m.width,
            },
            "anisotropic-count" => ModelKind::AnisotropicCount,
            other => return Err(bad(format!("unknown model kind `{other}`"))),
        })
    }

    pub fn model(&self) -> Result<CoefficientModel, CliError> {
        let kind = self.model_kind()?;
        if kind == ModelKind::Identity {
            return Ok(CoefficientModel::identity());
        }
        CoefficientModel::new(kind, self.model.lambda).map_err(|e| bad(e.to_string()))
    }

    /// The model as written, without the range checks.
    pub fn model_unchecked(&self) -> Result<CoefficientModel, CliError> {
        Ok(CoefficientModel::new_unchecked(self.model_kind()?, self.model.lambda))
    }

    pub fn basis(&self) -> BasisSpec {
        match &self.basis {
            Some(b) => BasisSpec {
                spacing: b.spacing,
                pair_spacing: b.pair_spacing,
                pair_range: b.pair_range,
            },
            None => BasisSpec::default_for(self.dim),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(1..=2).contains(&self.dim) {
            return Err(bad(format!("dim = {} not in {{1, 2}}", self.dim)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(bad("rho must be positive"));
        }
        self.model()?;
        if let Some(b) = &self.basis {
            if !(b.spacing > 0.0) || b.pair_spacing.is_some_and(|s| !(s > 0.0)) || !(b.pair_range >= 0.0) {
                return Err(bad("basis spacings must be positive"));
            }
        }
        if let Some(a) = &self.abar {
            check_ms(&a.ms, "abar.ms")?;
            if a.samples < 2 {
                return Err(bad("abar.samples must be at least 2"));
            }
        }
        if let Some(t) = &self.two_point {
            if !(t.side > 2.0) || !(t.dt > 0.0) || t.replicas < 2 || !(t.s >= 0.0) {
                return Err(bad("two_point needs side > 2, dt > 0, replicas >= 2 and s >= 0"));
            }
            if t.lags.is_empty() || t.lags.iter().any(|l| !(*l >= 0.0)) {
                return Err(bad("two_point.lags must be nonempty and nonnegative"));
            }
            if t.cells < 4 || !(t.f.width > 0.0 && t.g.width > 0.0) {
                return Err(bad("two_point test functions need cells >= 4 and positive widths"));
            }
            if let Some(a) = &t.abar {
                self.matrix(a, "two_point.abar")?;
            }
        }
        if let Some(g) = &self.green_kubo {
            check_ms(&g.ms, "green_kubo.ms")?;
            if g.lambdas.is_empty() || g.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(bad("green_kubo.lambdas must be nonempty and nonnegative"));
            }
            if g.samples < 2 || g.palm_samples < 2 {
                return Err(bad("green_kubo sample counts must be at least 2"));
            }
            if let Some(d) = &g.direction {
                let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d.len() != self.dim || (n - 1.0).abs() > 1e-9 {
                    return Err(bad("green_kubo.direction must be a unit vector of length dim"));
                }
            }
            if let Some(a) = &g.abar {
                self.matrix(a, "green_kubo.abar")?;
            }
            if g.alpha.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
                return Err(bad("green_kubo.alpha must be nonnegative"));
            }
            if g.abar.is_none() && self.abar.is_none() && !self.model()?.is_identity() {
                return Err(bad("green_kubo needs `abar` or an [abar] section for the reference"));
            }
        }
        if let Some(t) = &self.two_point {
            if t.abar.is_none() && self.abar.is_none() && !self.model()?.is_identity() {
                return Err(bad("two_point needs `abar` or an [abar] section for the prediction"));
            }
            if self.dim != 1 {
                return Err(bad("two_point runs in d = 1"));
            }
        }
        Ok(())
    }

    /// A symmetric positive definite `dim x dim` matrix.
    pub fn matrix(&self, rows: &[Vec<f64>], name: &str) -> Result<SymMatrix, CliError> {
        if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) {
            return Err(bad(format!("{name} must be {0}x{0}", self.dim)));
        }
        let m = SymMatrix::from_rows(self.dim, rows);
        if !m.is_symmetric(1e-12) || m.min_eigenvalue() <= 0.0 {
            return Err(bad(format!("{name} must be symmetric positive definite")));
        }
        Ok(m)
    }
}

fn check_ms(ms: &[u32], name: &str) -> Result<(), CliError> {
    if ms.is_empty() || ms.iter().any(|m| *m > MAX_M) {
        return Err(bad(format!("{name} must be nonempty with entries at most {MAX_M}")));
    }
    if ms.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(format!("{name} must be increasing")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        rho = 1.0
        dim = 1
        seed = 3
        [model]
        kind = "count-indicator"
        lambda = 2.0
        [abar]
        ms = [0, 1]
        samples = 100
    "#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.model().unwrap(), CoefficientModel::count_indicator(2.0, 2).unwrap());
        assert_eq!(c.basis(), BasisSpec::default_for(1));
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("dim = 1", "dim = 3"),
            ("rho = 1.0", "rho = -1.0"),
            ("lambda = 2.0", "lambda = 0.5"),
            ("ms = [0, 1]", "ms = [1, 0]"),
            ("ms = [0, 1]", "ms = [9]"),
            ("\"count-indicator\"", "\"nonsense\""),
        ] {
            let c = ExperimentConfig::parse(&MINIMAL.replace(from, to)).unwrap();
            assert!(c.validate().is_err(), "{to}");
        }
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn matrices_are_checked() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert!(c.matrix(&[vec![1.5]], "a").is_ok());
        assert!(c.matrix(&[vec![-1.0]], "a").is_err());
        assert!(c.matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], "a").is_err());
    }
}
