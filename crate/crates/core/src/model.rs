//! The catalog of local, uniformly elliptic coefficient fields.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::configuration::Configuration;
use crate::error::{invalid, Result};
use crate::geometry::{norm, Domain, Point, INTERACTION_RADIUS, MAX_DIM};
use crate::matrix::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// `a = Id`.
    Identity,
    /// `a = (1 + (L-1) 1{mu(B_1) >= threshold}) Id`.
    CountIndicator { threshold: usize },
    /// Mollified count: each point at distance `r` weighs `S((1-r)/width)`
    /// and the switch is `S(count - threshold + 1)`, with `S` the clamped
    /// cubic smoothstep.
    SmoothCount { threshold: usize, width: f64 },
    /// `a_kk = 1 + (L-1) 1{some point in the half ball y_k > 0}`.
    AnisotropicCount,
}

/// A coefficient field `a(mu)` with ceiling `lambda`: spectra lie in `[1, lambda]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub kind: ModelKind,
    pub lambda: f64,
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

impl CoefficientModel {
    pub fn new(kind: ModelKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("ellipticity ceiling {lambda} must be >= 1")));
        }
        match kind {
            ModelKind::SmoothCount { width, threshold } => {
                if !(width > 0.0 && width <= 1.0) {
                    return Err(invalid("width", format!("{width} not in (0, 1]")));
                }
                if threshold == 0 {
                    return Err(invalid("threshold", "must be at least 1"));
                }
            }
            ModelKind::CountIndicator { threshold: 0 } => {
                return Err(invalid("threshold", "must be at least 1"));
            }
            _ => {}
        }
        Ok(Self { kind, lambda })
    }

    /// Skips validation. Only useful to exercise the audits.
    pub fn new_unchecked(kind: ModelKind, lambda: f64) -> Self {
        Self { kind, lambda }
    }

    pub fn identity() -> Self {
        Self {
            kind: ModelKind::Identity,
            lambda: 1.0,
        }
    }

    pub fn count_indicator(lambda: f64, threshold: usize) -> Result<Self> {
        Self::new(ModelKind::CountIndicator { threshold }, lambda)
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ModelKind::Identity || self.lambda == 1.0
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Identity => "identity",
            ModelKind::CountIndicator { .. } => "count-indicator",
            ModelKind::SmoothCount { .. } => "smooth-count",
            ModelKind::AnisotropicCount => "anisotropic-count",
        }
    }

    /// Invariant under rotations by a right angle.
    pub fn is_isotropic(&self) -> bool {
        !matches!(self.kind, ModelKind::AnisotropicCount)
    }

    /// `a∘` applied to the offsets `y - x` of the points of a configuration.
    /// Offsets outside the open unit ball are ignored.
    pub fn eval_local(&self, offsets: &[Point], dim: usize) -> SymMatrix {
        let excess = self.lambda - 1.0;
        match self.kind {
            ModelKind::Identity => SymMatrix::identity(dim),
            ModelKind::CountIndicator { threshold } => {
                let n = offsets.iter().filter(|o| norm(o, dim) < INTERACTION_RADIUS).count();
                let on = if n >= threshold { 1.0 } else { 0.0 };
                SymMatrix::scalar(dim, 1.0 + excess * on)
            }
            ModelKind::SmoothCount { threshold, width } => {
                let s: f64 = offsets
                    .iter()
                    .map(|o| norm(o, dim))
                    .filter(|&r| r < INTERACTION_RADIUS)
                    .map(|r| smoothstep((INTERACTION_RADIUS - r) / width))
                    .sum();
                let sigma = smoothstep(s - (threshold as f64 - 1.0));
                SymMatrix::scalar(dim, 1.0 + excess * sigma)
            }
            ModelKind::AnisotropicCount => {
                let mut diag = [1.0; MAX_DIM];
                for (k, v) in diag.iter_mut().enumerate().take(dim) {
                    let hit = offsets.iter().any(|o| o[k] > 0.0 && norm(o, dim) < INTERACTION_RADIUS);
                    if hit {
                        *v += excess;
                    }
                }
                SymMatrix::diagonal(dim, &diag)
            }
        }
    }

    /// `a(mu, x) = a∘(tau_{-x} mu)`. A particle sitting at `x` is part of the
    /// translated configuration (at the origin).
    pub fn eval_a(&self, mu: &Configuration, x: &Point) -> SymMatrix {
        self.eval_in(&mu.domain, &mu.points, x)
    }

    /// [`eval_a`](Self::eval_a) on a raw point slice.
    pub fn eval_in(&self, domain: &Domain, points: &[Point], x: &Point) -> SymMatrix {
        let dim = domain.dim;
        if self.kind == ModelKind::Identity {
            return SymMatrix::identity(dim);
        }
        let offsets: Vec<Point> = points
            .iter()
            .map(|y| domain.displacement(x, y))
            .filter(|o| norm(o, dim) < INTERACTION_RADIUS)
            .collect();
        self.eval_local(&offsets, dim)
    }
}

/// Outcome of a randomized invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub invariant: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub worst: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_offsets<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Point> {
    let n = rng.random_range(0..6usize);
    (0..n)
        .map(|_| {
            let mut p = [0.0; MAX_DIM];
            for c in p.iter_mut().take(dim) {
                *c = rng.random_range(-1.5..1.5);
            }
            p
        })
        .collect()
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    if dim == 1 {
        return [if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0];
    }
    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    [th.cos(), th.sin()]
}

/// Checks `1 <= xi . a xi <= lambda` and symmetry on random local
/// configurations (with and without an atom at the origin) and unit vectors.
pub fn ellipticity_audit<R: Rng + ?Sized>(model: &CoefficientModel, dim: usize, trials: usize, rng: &mut R) -> AuditReport {
    let tol = 1e-12;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut offsets = random_offsets(dim, rng);
        if rng.random::<bool>() {
            offsets.push([0.0; MAX_DIM]);
        }
        let a = model.eval_local(&offsets, dim);
        let xi = random_unit(dim, rng);
        let q = a.quad(&xi);
        let violation = (1.0 - q).max(q - model.lambda).max(0.0);
        let asym = if a.is_symmetric(0.0) { 0.0 } else { 1.0 };
        if violation > tol || asym > 0.0 {
            failures += 1;
        }
        worst = worst.max(violation + asym);
    }
    AuditReport {
        invariant: "ellipticity: 1 <= xi.a(mu)xi <= lambda",
        trials,
        failures,
        worst,
    }
}

/// Checks that adding or removing points outside the unit ball never
/// changes `a`.
pub fn locality_audit<R: Rng + ?Sized>(model: &CoefficientModel, dim: usize, trials: usize, rng: &mut R) -> AuditReport {
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let offsets = random_offsets(dim, rng);
        let inside: Vec<Point> = offsets.iter().copied().filter(|o| norm(o, dim) < INTERACTION_RADIUS).collect();
        let mut extra = inside.clone();
        for _ in 0..rng.random_range(1..4usize) {
            let u = random_unit(dim, rng);
            let r = rng.random_range(INTERACTION_RADIUS..3.0);
            extra.push([u[0] * r, u[1] * r]);
        }
        let a_full = model.eval_local(&offsets, dim);
        let a_in = model.eval_local(&inside, dim);
        let a_extra = model.eval_local(&extra, dim);
        let d = a_full.max_abs_diff(&a_in).max(a_in.max_abs_diff(&a_extra));
        if d != 0.0 {
            failures += 1;
        }
        worst = worst.max(d);
    }
    AuditReport {
        invariant: "locality: a(mu) = a(mu restricted to B_1)",
        trials,
        failures,
        worst,
    }
}

/// One model of each kind with ceiling `lambda` and the default parameters.
pub fn catalog(lambda: f64) -> Result<Vec<CoefficientModel>> {
    Ok(vec![
        CoefficientModel::identity(),
        CoefficientModel::count_indicator(lambda, 2)?,
        CoefficientModel::new(ModelKind::SmoothCount { threshold: 2, width: 0.5 }, lambda)?,
        CoefficientModel::new(ModelKind::AnisotropicCount, lambda)?,
    ])
}

/// Closed form of `E[p . a(mu + delta_0) p]` for the count indicator with
/// threshold 2 and `|p| = 1`: the switch is on unless `B_1` holds no other point.
pub fn count_indicator_palm_mean(lambda: f64, rho: f64, dim: usize) -> f64 {
    let ball = match dim {
        1 => 2.0 * INTERACTION_RADIUS,
        _ => std::f64::consts::PI * INTERACTION_RADIUS * INTERACTION_RADIUS,
    };
    1.0 + (lambda - 1.0) * (1.0 - (-rho * ball).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    #[test]
    fn count_indicator_examples() {
        let m = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let d = Domain::centered_box(1, 9.0).unwrap();
        let mu = Configuration::from_1d(d, &[0.0]).unwrap();
        assert_eq!(m.eval_a(&mu, &[0.0, 0.0]), SymMatrix::identity(1));
        let mu = Configuration::from_1d(d, &[0.0, 0.5]).unwrap();
        assert_eq!(m.eval_a(&mu, &[0.0, 0.0]), SymMatrix::scalar(1, 2.0));
    }

    #[test]
    fn audits_pass_on_catalog() {
        for dim in 1..=2 {
            for m in catalog(3.0).unwrap() {
                let mut rng = RandomStream::new(11).rng();
                assert!(ellipticity_audit(&m, dim, 2000, &mut rng).passed(), "{m:?}");
                assert!(locality_audit(&m, dim, 2000, &mut rng).passed(), "{m:?}");
            }
        }
    }

    #[test]
    fn corrupted_model_fails_ellipticity() {
        let m = CoefficientModel::new_unchecked(ModelKind::CountIndicator { threshold: 1 }, 0.5);
        let r = ellipticity_audit(&m, 1, 200, &mut RandomStream::new(1).rng());
        assert!(!r.passed());
        assert!(r.invariant.starts_with("ellipticity"));
        assert!(CoefficientModel::count_indicator(0.5, 2).is_err());
    }

    #[test]
    fn anisotropic_is_direction_dependent() {
        let m = CoefficientModel::new(ModelKind::AnisotropicCount, 2.0).unwrap();
        let a = m.eval_local(&[[0.0, 0.0], [0.5, -0.2]], 2);
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.get(1, 1), 1.0);
    }
}
