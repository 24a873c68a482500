//! Functionals of configurations with particle gradients, their energies
//! and norms under the Poisson law.

pub mod energy;
pub mod feature;
pub mod sector;
pub mod spline;

use std::sync::Arc;

use crate::configuration::Configuration;
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point, MAX_DIM};

pub use energy::{dirichlet_energy, dirichlet_gram, h1_norms, poincare_ratio, EnergyEstimate, H1Norms};
pub use feature::{BasisSpec, Feature, FeatureBasis, FeatureEval, FeatureFunctional};
pub use sector::SectorGridFunctional;

/// A real function of configurations with an analytic gradient in each
/// particle position. Implementations must be permutation invariant.
pub trait ConfigFunctional: Send + Sync {
    fn evaluate(&self, mu: &Configuration) -> Result<f64>;

    /// Gradient with respect to the position of particle `index`.
    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point>;

    /// Gradients at every particle, in configuration order.
    fn gradients(&self, mu: &Configuration) -> Result<Vec<Point>> {
        (0..mu.len()).map(|i| self.gradient(mu, i)).collect()
    }

    /// True when the functional is known to lie in `H^1_0` of its window.
    fn zero_boundary(&self) -> bool {
        false
    }
}

type PointFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type PointGrad = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// `sum_{x in window} g(x) - offset`.
#[derive(Clone)]
pub struct LinearStatistic {
    pub window: Option<Domain>,
    g: PointFn,
    grad: PointGrad,
    pub offset: f64,
}

impl std::fmt::Debug for LinearStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearStatistic")
            .field("window", &self.window)
            .field("offset", &self.offset)
            .finish_non_exhaustive()
    }
}

impl LinearStatistic {
    pub fn new<G, D>(g: G, grad: D) -> Self
    where
        G: Fn(&Point) -> f64 + Send + Sync + 'static,
        D: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        Self {
            window: None,
            g: Arc::new(g),
            grad: Arc::new(grad),
            offset: 0.0,
        }
    }

    pub fn within(mut self, window: Domain) -> Self {
        self.window = Some(window);
        self
    }

    pub fn centered_by(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    fn counts(&self, x: &Point) -> bool {
        self.window.is_none_or(|w| w.contains(x))
    }

    pub fn point_value(&self, x: &Point) -> f64 {
        (self.g)(x)
    }
}

impl ConfigFunctional for LinearStatistic {
    fn evaluate(&self, mu: &Configuration) -> Result<f64> {
        Ok(mu.points.iter().filter(|x| self.counts(x)).map(|x| (self.g)(x)).sum::<f64>() - self.offset)
    }

    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point> {
        let x = mu.points.get(index).ok_or(Error::NotAParticle { index })?;
        if self.counts(x) {
            Ok((self.grad)(x))
        } else {
            Ok([0.0; MAX_DIM])
        }
    }
}

/// `sum_j w_j f_j` of arbitrary functionals.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn ConfigFunctional)>,
}

impl ConfigFunctional for Combination<'_> {
    fn evaluate(&self, mu: &Configuration) -> Result<f64> {
        let mut s = 0.0;
        for (w, f) in &self.terms {
            s += w * f.evaluate(mu)?;
        }
        Ok(s)
    }

    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point> {
        let mut g = [0.0; MAX_DIM];
        for (w, f) in &self.terms {
            let gi = f.gradient(mu, index)?;
            g[0] += w * gi[0];
            g[1] += w * gi[1];
        }
        Ok(g)
    }

    fn zero_boundary(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.zero_boundary())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_statistic_gradient() {
        let f = LinearStatistic::new(|x| x[0] * x[0], |x| [2.0 * x[0], 0.0]);
        let d = Domain::centered_box(1, 3.0).unwrap();
        let mu = Configuration::from_1d(d, &[0.5]).unwrap();
        assert_eq!(f.gradient(&mu, 0).unwrap(), [1.0, 0.0]);
        assert_eq!(f.evaluate(&mu).unwrap(), 0.25);
    }
}
