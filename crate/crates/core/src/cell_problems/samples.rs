//! Frozen sample sets and the sample-average Galerkin system over a feature basis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::configuration::{sample_with_halo, truncated_poisson_mean, Configuration};
use crate::error::{invalid, Error, Result};
use crate::function_space::{FeatureBasis, FeatureEval};
use crate::geometry::{Domain, Point, INTERACTION_RADIUS, MAX_DIM};
use crate::matrix::SymMatrix;
use crate::model::CoefficientModel;
use crate::par::{chunk_ranges, fold_ordered, map_indexed, Exec};
use crate::rng::RandomStream;

/// Number of fixed work chunks used for every reduction over samples.
const CHUNKS: usize = 32;
/// Chunks held in memory at once.
const WAVE: usize = 8;

/// Configurations drawn once and reused by every solve of a problem.
/// Each configuration covers the window plus a shell of width 1, so the
/// coefficient field is exact at every particle of the window.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub window: Domain,
    pub rho: f64,
    /// Condition the window count on being at most this value.
    pub truncation: Option<usize>,
    pub seed: RandomStream,
    pub configs: Vec<Configuration>,
    /// Exact `E[mu(U)]` under the sampling law (`rho |U|` without truncation).
    pub expected_count: f64,
}

impl SampleSet {
    pub fn draw(window: &Domain, rho: f64, truncation: Option<usize>, samples: usize, seed: RandomStream, exec: Exec) -> Result<Self> {
        if samples == 0 {
            return Err(Error::NoSamples);
        }
        if !(rho > 0.0) {
            return Err(invalid("rho", format!("{rho} must be positive")));
        }
        let configs: Vec<Configuration> = map_indexed(exec, samples, |s| {
            sample_with_halo(window, rho, INTERACTION_RADIUS, truncation, &mut seed.substream(s as u64).rng())
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let mean = rho * window.volume();
        let expected_count = match truncation {
            Some(k) => truncated_poisson_mean(mean, k),
            None => mean,
        };
        Ok(Self {
            window: *window,
            rho,
            truncation,
            seed,
            configs,
            expected_count,
        })
    }

    /// Wraps one given configuration (covering the window and its halo).
    pub fn single(window: &Domain, rho: f64, config: Configuration) -> Self {
        Self {
            window: *window,
            rho,
            truncation: None,
            seed: RandomStream::new(0),
            configs: vec![config],
            expected_count: rho * window.volume(),
        }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Per-sample data at the particles of the window.
pub struct SampleView<'a> {
    pub config: &'a Configuration,
    pub eval: FeatureEval,
    /// Coefficient field at each particle of `eval.particles`.
    pub a: Vec<SymMatrix>,
}

/// Sample averages over a feature basis:
/// `stiffness[j,k] = E[sum_{x in U} grad f_j . a grad f_k]`,
/// `mass[j,k] = E[f_j f_k]`,
/// `flux[d][j] = E[sum e_d . (a - Id) grad f_j]`,
/// `slope[d][j] = E[sum e_d . grad f_j]`,
/// `excess = E[sum (a - Id)]`.
#[derive(Debug, Clone)]
pub struct SampledSystem {
    pub basis: Arc<FeatureBasis>,
    pub model: CoefficientModel,
    pub samples: Arc<SampleSet>,
    pub stiffness: DMatrix<f64>,
    pub mass: Option<DMatrix<f64>>,
    pub flux: Vec<DVector<f64>>,
    pub slope: Vec<DVector<f64>>,
    pub excess: SymMatrix,
    pub mean_count: f64,
    pub exec: Exec,
}

struct Accum {
    n: usize,
    dim: usize,
    stiff: Vec<f64>,
    mass: Option<Vec<f64>>,
    flux: Vec<Vec<f64>>,
    slope: Vec<Vec<f64>>,
    excess: [[f64; MAX_DIM]; MAX_DIM],
    count: f64,
}

impl Accum {
    fn new(n: usize, dim: usize, with_mass: bool) -> Self {
        Self {
            n,
            dim,
            stiff: vec![0.0; n * n],
            mass: with_mass.then(|| vec![0.0; n * n]),
            flux: vec![vec![0.0; n]; dim],
            slope: vec![vec![0.0; n]; dim],
            excess: [[0.0; MAX_DIM]; MAX_DIM],
            count: 0.0,
        }
    }

    fn add_sample(&mut self, view: &SampleView<'_>) {
        let n = self.n;
        let dim = self.dim;
        let mut ag: Vec<Point> = Vec::new();
        for (row, a) in view.eval.grads.iter().zip(&view.a) {
            self.count += 1.0;
            for i in 0..dim {
                for j in 0..dim {
                    self.excess[i][j] += a.get(i, j) - if i == j { 1.0 } else { 0.0 };
                }
            }
            ag.clear();
            ag.extend(row.iter().map(|(_, g)| a.mul_vec(g)));
            for (&(j, g), agj) in row.iter().zip(&ag) {
                for d in 0..dim {
                    self.slope[d][j] += g[d];
                    self.flux[d][j] += agj[d] - g[d];
                }
                let base = j * n;
                for &(k, gk) in row {
                    let mut v = 0.0;
                    for d in 0..dim {
                        v += gk[d] * agj[d];
                    }
                    self.stiff[base + k] += v;
                }
            }
        }
        if let Some(mass) = self.mass.as_mut() {
            for &(j, vj) in &view.eval.values {
                let base = j * n;
                for &(k, vk) in &view.eval.values {
                    mass[base + k] += vj * vk;
                }
            }
        }
    }

    fn merge(mut self, other: Accum) -> Self {
        for (a, b) in self.stiff.iter_mut().zip(&other.stiff) {
            *a += b;
        }
        if let (Some(m), Some(o)) = (self.mass.as_mut(), other.mass.as_ref()) {
            for (a, b) in m.iter_mut().zip(o) {
                *a += b;
            }
        }
        for d in 0..self.dim {
            for j in 0..self.n {
                self.flux[d][j] += other.flux[d][j];
                self.slope[d][j] += other.slope[d][j];
            }
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                self.excess[i][j] += other.excess[i][j];
            }
        }
        self.count += other.count;
        self
    }
}

/// Evaluates the basis and the coefficient field on one sample.
pub fn view<'a>(basis: &FeatureBasis, model: &CoefficientModel, config: &'a Configuration, want_values: bool) -> SampleView<'a> {
    let eval = basis.eval(config, want_values);
    let a = eval
        .particles
        .iter()
        .map(|&i| model.eval_in(&config.domain, &config.points, &config.points[i]))
        .collect();
    SampleView { config, eval, a }
}

impl SampledSystem {
    /// Assembles all sample averages in one pass. The result is bitwise
    /// independent of the execution policy and thread count.
    pub fn assemble(
        basis: Arc<FeatureBasis>,
        model: CoefficientModel,
        samples: Arc<SampleSet>,
        with_mass: bool,
        exec: Exec,
    ) -> Result<Self> {
        if basis.window() != &samples.window {
            return Err(Error::Inconsistent("basis and samples live on different windows".into()));
        }
        let n = basis.len();
        let dim = samples.window.dim;
        let ranges = chunk_ranges(samples.len(), CHUNKS);
        let total = fold_ordered(
            exec,
            ranges.len(),
            WAVE,
            Accum::new(n, dim, with_mass),
            |c| {
                let mut acc = Accum::new(n, dim, with_mass);
                for s in ranges[c].clone() {
                    acc.add_sample(&view(&basis, &model, &samples.configs[s], with_mass));
                }
                acc
            },
            Accum::merge,
        );
        let m = samples.len() as f64;
        let raw = DMatrix::from_row_slice(n, n, &total.stiff) / m;
        let stiffness = (&raw + raw.transpose()) * 0.5;
        let mass = total.mass.map(|v| DMatrix::from_row_slice(n, n, &v) / m);
        let flux = total.flux.iter().map(|v| DVector::from_vec(v.clone()) / m).collect();
        let slope = total.slope.iter().map(|v| DVector::from_vec(v.clone()) / m).collect();
        let mut excess = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                excess.set(i, j, 0.5 * (total.excess[i][j] + total.excess[j][i]) / m);
            }
        }
        Ok(Self {
            basis,
            model,
            samples,
            stiffness,
            mass,
            flux,
            slope,
            excess,
            mean_count: total.count / m,
            exec,
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.window.dim
    }

    /// `sum_d p_d flux[d]` restricted to `subset`.
    pub fn flux_along(&self, p: &Point, subset: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            subset.len(),
            subset.iter().map(|&j| (0..self.dim()).map(|d| p[d] * self.flux[d][j]).sum()),
        )
    }

    /// Sampled palm mean of the coefficient, `Id + E[sum (a - Id)] / E[N]`.
    pub fn palm_matrix(&self) -> SymMatrix {
        let dim = self.dim();
        if self.mean_count > 0.0 {
            SymMatrix::identity(dim).add(&self.excess.scale(1.0 / self.mean_count))
        } else {
            SymMatrix::identity(dim)
        }
    }

    /// Right-hand side `E[sum (a p - A p) . grad f_j]` of the zero-boundary
    /// problems, `A` the palm matrix. The shift by `A p` has mean zero on
    /// zero-boundary features and removes most of the sampling noise of the flux.
    pub fn centered_flux(&self, p: &Point, subset: &[usize]) -> DVector<f64> {
        let ap = self.palm_matrix().mul_vec(p);
        let mut diff = [0.0; MAX_DIM];
        for d in 0..self.dim() {
            diff[d] = p[d] - ap[d];
        }
        self.flux_along(p, subset) + self.slope_along(&diff, subset)
    }

    pub fn slope_along(&self, q: &Point, subset: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            subset.len(),
            subset.iter().map(|&j| (0..self.dim()).map(|d| q[d] * self.slope[d][j]).sum()),
        )
    }

    pub fn sub_stiffness(&self, subset: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(subset.len(), subset.len(), |r, c| self.stiffness[(subset[r], subset[c])])
    }

    pub fn sub_mass(&self, subset: &[usize]) -> Result<DMatrix<f64>> {
        let mass = self
            .mass
            .as_ref()
            .ok_or_else(|| Error::Inconsistent("system was assembled without the mass matrix".into()))?;
        Ok(DMatrix::from_fn(subset.len(), subset.len(), |r, c| mass[(subset[r], subset[c])]))
    }

    /// Maps `f` over the samples (in order), handing it the evaluated view.
    pub fn per_sample<T, F>(&self, want_values: bool, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&SampleView<'_>) -> T + Sync + Send,
    {
        map_indexed(self.exec, self.samples.len(), |s| {
            f(&view(&self.basis, &self.model, &self.samples.configs[s], want_values))
        })
    }
}

/// Sum of `c_j grad f_j` over a sparse gradient row, for coefficients given on `subset`.
pub fn combine_row(row: &[(usize, Point)], coef_full: &[f64]) -> Point {
    let mut g = [0.0; MAX_DIM];
    for &(j, gj) in row {
        let c = coef_full[j];
        if c != 0.0 {
            g[0] += c * gj[0];
            g[1] += c * gj[1];
        }
    }
    g
}

/// Scatters subset coefficients into a full-length vector.
pub fn scatter(n: usize, subset: &[usize], coef: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&j, &c) in subset.iter().zip(coef) {
        out[j] = c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::BasisSpec;

    #[test]
    fn assembly_is_execution_independent() {
        let w = Domain::cube(1, 1).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::default()).unwrap());
        let model = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let samples = Arc::new(SampleSet::draw(&w, 1.0, None, 300, RandomStream::new(5), Exec::Parallel).unwrap());
        let seq = SampledSystem::assemble(basis.clone(), model, samples.clone(), true, Exec::Sequential).unwrap();
        let par = SampledSystem::assemble(basis, model, samples, true, Exec::Parallel).unwrap();
        assert_eq!(seq.stiffness, par.stiffness);
        assert_eq!(seq.mass, par.mass);
        assert_eq!(seq.flux, par.flux);
    }

    #[test]
    fn stiffness_is_symmetric_psd() {
        let w = Domain::cube(1, 2).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::default()).unwrap());
        let model = CoefficientModel::count_indicator(2.0, 2).unwrap();
        let samples = Arc::new(SampleSet::draw(&w, 1.0, None, 200, RandomStream::new(6), Exec::Parallel).unwrap());
        let sys = SampledSystem::assemble(basis, model, samples, false, Exec::Parallel).unwrap();
        let g = &sys.stiffness;
        assert!((g - g.transpose()).amax() < 1e-12 * g.amax());
        let min = g.clone().symmetric_eigen().eigenvalues.min();
        assert!(min > -1e-9 * g.amax());
    }
}
