//! Feature bases of configuration functionals: linear statistics of spline
//! bumps and smooth pair statistics, with analytic particle gradients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::spline::{ActiveBump, SplineGrid};
use super::ConfigFunctional;
use crate::configuration::Configuration;
use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, Domain, Point, MAX_DIM};

/// Resolution of a feature basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Target spacing of the linear-statistic bumps.
    pub spacing: f64,
    /// Target spacing of the bumps used in pair features; `None` disables them.
    pub pair_spacing: Option<f64>,
    /// Pair features `(a, b)` are kept when the bump centers are at most this far apart.
    pub pair_range: f64,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            spacing: 1.0 / 3.0,
            pair_spacing: Some(0.5),
            pair_range: 1.5,
        }
    }
}

impl BasisSpec {
    /// Default resolution per dimension; coarser in two dimensions to keep the Gram matrix dense-solvable.
    pub fn default_for(dim: usize) -> Self {
        if dim >= 2 {
            Self {
                spacing: 0.5,
                pair_spacing: Some(1.0),
                pair_range: 1.5,
            }
        } else {
            Self::default()
        }
    }

    pub fn linear_only(spacing: f64) -> Self {
        Self {
            spacing,
            pair_spacing: None,
            pair_range: 0.0,
        }
    }
}

/// One basis feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Feature {
    /// `sum_i B_bump(x_i)` over particles in the window.
    Linear { bump: usize },
    /// `sum_{i != k} B_a(x_i) B_b(x_k)` over ordered pairs in the window, `a <= b`.
    Pair { a: usize, b: usize },
}

/// A finite family of functionals of `mu` restricted to an open box.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    window: Domain,
    spec: BasisSpec,
    linear: SplineGrid,
    pair: Option<SplineGrid>,
    features: Vec<Feature>,
    interior: Vec<bool>,
    // for each pair-grid bump: (partner bump, feature index)
    partners: Vec<Vec<(usize, usize)>>,
}

/// Values and gradients of all features on one configuration, in sparse form.
#[derive(Debug, Clone, Default)]
pub struct FeatureEval {
    /// Indices (into the configuration) of the particles inside the window.
    pub particles: Vec<usize>,
    /// Per particle in `particles`: nonzero feature gradients.
    pub grads: Vec<Vec<(usize, Point)>>,
    /// Nonzero feature values (filled only when requested).
    pub values: Vec<(usize, f64)>,
}

impl FeatureBasis {
    pub fn new(window: &Domain, spec: &BasisSpec) -> Result<Self> {
        if window.is_torus() {
            return Err(invalid("window", "feature bases live on boxes"));
        }
        if !(spec.spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        let linear = SplineGrid::over(window, spec.spacing);
        let pair = match spec.pair_spacing {
            Some(h) if h > 0.0 => Some(SplineGrid::over(window, h)),
            Some(_) => return Err(invalid("pair_spacing", "must be positive")),
            None => None,
        };
        let mut features = Vec::new();
        let mut interior = Vec::new();
        for id in 0..linear.len() {
            features.push(Feature::Linear { bump: id });
            interior.push(linear.is_interior(id));
        }
        let mut partners = Vec::new();
        if let Some(g) = &pair {
            partners = vec![Vec::new(); g.len()];
            for a in 0..g.len() {
                let ca = g.center(a);
                for b in a..g.len() {
                    let cb = g.center(b);
                    let mut d = [0.0; MAX_DIM];
                    for k in 0..g.dim {
                        d[k] = ca[k] - cb[k];
                    }
                    if norm(&d, g.dim) <= spec.pair_range + 1e-12 {
                        let fid = features.len();
                        features.push(Feature::Pair { a, b });
                        interior.push(g.is_interior(a) && g.is_interior(b));
                        partners[a].push((b, fid));
                        if a != b {
                            partners[b].push((a, fid));
                        }
                    }
                }
            }
        }
        Ok(Self {
            window: *window,
            spec: spec.clone(),
            linear,
            pair,
            features,
            interior,
            partners,
        })
    }

    pub fn window(&self) -> &Domain {
        &self.window
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn linear_grid(&self) -> &SplineGrid {
        &self.linear
    }

    /// Whether feature `j` lies in `H^1_0` of the window.
    pub fn is_interior(&self, j: usize) -> bool {
        self.interior[j]
    }

    /// Indices of the zero-boundary features.
    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.interior[j]).collect()
    }

    /// Coefficients `w` with `sum_j w_j f_j = l_p` (linear precision of the splines).
    pub fn affine_coefficients(&self, p: &Point) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for (j, f) in self.features.iter().enumerate() {
            if let Feature::Linear { bump } = f {
                let c = self.linear.center(*bump);
                w[j] = (0..self.window.dim).map(|k| p[k] * c[k]).sum::<f64>() / 1.5f64.powi(self.window.dim as i32);
            }
        }
        w
    }

    /// Evaluates every feature on the particles of `mu` lying in the window.
    pub fn eval(&self, mu: &Configuration, want_values: bool) -> FeatureEval {
        self.eval_points(&mu.points, want_values)
    }

    pub fn eval_points(&self, points: &[Point], want_values: bool) -> FeatureEval {
        let particles: Vec<usize> = (0..points.len()).filter(|&i| self.window.contains(&points[i])).collect();
        let n = particles.len();
        let mut lin_act: Vec<Vec<ActiveBump>> = Vec::with_capacity(n);
        let mut pair_act: Vec<Vec<ActiveBump>> = Vec::with_capacity(n);
        for &i in &particles {
            let mut v = Vec::with_capacity(16);
            self.linear.active(&points[i], &mut v);
            lin_act.push(v);
            let mut w = Vec::new();
            if let Some(g) = &self.pair {
                g.active(&points[i], &mut w);
            }
            pair_act.push(w);
        }

        // pair-grid sums S_a
        let npair = self.pair.as_ref().map_or(0, |g| g.len());
        let mut s = vec![0.0; npair];
        let mut touched = Vec::new();
        for act in &pair_act {
            for b in act {
                if s[b.id] == 0.0 {
                    touched.push(b.id);
                }
                s[b.id] += b.value;
            }
        }

        let mut acc = vec![[0.0; MAX_DIM]; self.len()];
        let mut hit = vec![false; self.len()];
        let mut grads = Vec::with_capacity(n);
        for p in 0..n {
            let mut list: Vec<usize> = Vec::new();
            let mut add = |fid: usize, g: Point, acc: &mut Vec<Point>, hit: &mut Vec<bool>| {
                if !hit[fid] {
                    hit[fid] = true;
                    list.push(fid);
                }
                acc[fid][0] += g[0];
                acc[fid][1] += g[1];
            };
            for b in &lin_act[p] {
                add(b.id, b.grad, &mut acc, &mut hit);
            }
            let own = &pair_act[p];
            for ba in own {
                for &(b, fid) in &self.partners[ba.id] {
                    let own_b = own.iter().find(|x| x.id == b).map_or(0.0, |x| x.value);
                    let w = s[b] - own_b;
                    if w.abs() < 1e-300 {
                        continue;
                    }
                    let f = if b == ba.id { 2.0 * w } else { w };
                    add(fid, [ba.grad[0] * f, ba.grad[1] * f], &mut acc, &mut hit);
                }
            }
            let mut row = Vec::with_capacity(list.len());
            for fid in list {
                row.push((fid, acc[fid]));
                acc[fid] = [0.0; MAX_DIM];
                hit[fid] = false;
            }
            grads.push(row);
        }

        let mut values = Vec::new();
        if want_values {
            let mut lin_s = vec![0.0; self.linear.len()];
            for act in &lin_act {
                for b in act {
                    lin_s[b.id] += b.value;
                }
            }
            for (id, v) in lin_s.into_iter().enumerate() {
                if v != 0.0 {
                    values.push((id, v));
                }
            }
            if npair > 0 {
                let mut val = vec![0.0; self.len()];
                let mut vhit = vec![false; self.len()];
                let mut order = Vec::new();
                touched.sort_unstable();
                for &a in &touched {
                    for &(b, fid) in &self.partners[a] {
                        if b >= a && s[b] != 0.0 {
                            val[fid] += s[a] * s[b];
                            if !vhit[fid] {
                                vhit[fid] = true;
                                order.push(fid);
                            }
                        }
                    }
                }
                for act in &pair_act {
                    for ba in act {
                        for bb in act {
                            if bb.id < ba.id {
                                continue;
                            }
                            if let Some(&(_, fid)) = self.partners[ba.id].iter().find(|(b, _)| *b == bb.id) {
                                val[fid] -= ba.value * bb.value;
                            }
                        }
                    }
                }
                order.sort_unstable();
                for fid in order {
                    if val[fid] != 0.0 {
                        values.push((fid, val[fid]));
                    }
                }
            }
        }
        FeatureEval { particles, grads, values }
    }

    /// Serializable description; [`FeatureBasis::from_descriptor`] rebuilds the basis.
    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            window: self.window,
            spec: self.spec.clone(),
            features: self.features.clone(),
        }
    }

    pub fn from_descriptor(d: &BasisDescriptor) -> Result<Self> {
        let basis = Self::new(&d.window, &d.spec)?;
        if basis.features != d.features {
            return Err(Error::Parse("feature list does not match the basis specification".into()));
        }
        Ok(basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub window: Domain,
    pub spec: BasisSpec,
    pub features: Vec<Feature>,
}

/// `v = l_p + offset + sum_j c_j f_j` over a feature basis.
#[derive(Debug, Clone)]
pub struct FeatureFunctional {
    pub basis: Arc<FeatureBasis>,
    pub coefficients: Vec<f64>,
    /// Slope `p` of the affine part `l_p = sum_{x in U} p . x`.
    pub affine: Option<Point>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FunctionalFile {
    basis: BasisDescriptor,
    coefficients: Vec<f64>,
    affine: Option<Vec<f64>>,
    offset: f64,
}

impl FeatureFunctional {
    pub fn new(basis: Arc<FeatureBasis>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(invalid(
                "coefficients",
                format!("{} coefficients for {} features", coefficients.len(), basis.len()),
            ));
        }
        Ok(Self {
            basis,
            coefficients,
            affine: None,
            offset: 0.0,
        })
    }

    pub fn zero(basis: Arc<FeatureBasis>) -> Self {
        let n = basis.len();
        Self {
            basis,
            coefficients: vec![0.0; n],
            affine: None,
            offset: 0.0,
        }
    }

    /// Coefficients given on a subset of the features; the rest are zero.
    pub fn from_subset(basis: Arc<FeatureBasis>, subset: &[usize], coefficients: &[f64]) -> Self {
        let mut c = vec![0.0; basis.len()];
        for (&j, &v) in subset.iter().zip(coefficients) {
            c[j] = v;
        }
        Self {
            basis,
            coefficients: c,
            affine: None,
            offset: 0.0,
        }
    }

    pub fn with_affine(mut self, p: Point) -> Self {
        self.affine = Some(p);
        self
    }

    /// Coefficients over the full basis with the affine part folded in
    /// (exact on the window by linear precision).
    pub fn full_coefficients(&self) -> Vec<f64> {
        let mut c = self.coefficients.clone();
        if let Some(p) = self.affine {
            for (ci, a) in c.iter_mut().zip(self.basis.affine_coefficients(&p)) {
                *ci += a;
            }
        }
        c
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let dim = self.basis.window.dim;
        let file = FunctionalFile {
            basis: self.basis.descriptor(),
            coefficients: self.coefficients.clone(),
            affine: self.affine.map(|p| p[..dim].to_vec()),
            offset: self.offset,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: FunctionalFile = serde_json::from_str(s)?;
        let basis = Arc::new(FeatureBasis::from_descriptor(&file.basis)?);
        let mut f = Self::new(basis, file.coefficients)?;
        if let Some(p) = file.affine {
            let mut q = [0.0; MAX_DIM];
            for (k, v) in p.into_iter().take(MAX_DIM).enumerate() {
                q[k] = v;
            }
            f.affine = Some(q);
        }
        f.offset = file.offset;
        Ok(f)
    }

    fn affine_value(&self, mu: &Configuration) -> f64 {
        match self.affine {
            None => 0.0,
            Some(p) => mu
                .points
                .iter()
                .filter(|x| self.basis.window.contains(x))
                .map(|x| (0..mu.dim()).map(|k| p[k] * x[k]).sum::<f64>())
                .sum(),
        }
    }
}

impl ConfigFunctional for FeatureFunctional {
    fn evaluate(&self, mu: &Configuration) -> Result<f64> {
        let ev = self.basis.eval(mu, true);
        let lin: f64 = ev.values.iter().map(|&(j, v)| self.coefficients[j] * v).sum();
        Ok(lin + self.affine_value(mu) + self.offset)
    }

    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point> {
        if index >= mu.len() {
            return Err(Error::NotAParticle { index });
        }
        Ok(self.gradients(mu)?[index])
    }

    fn gradients(&self, mu: &Configuration) -> Result<Vec<Point>> {
        let ev = self.basis.eval(mu, false);
        let mut out = vec![[0.0; MAX_DIM]; mu.len()];
        for (row, &i) in ev.grads.iter().zip(&ev.particles) {
            let mut g = self.affine.unwrap_or([0.0; MAX_DIM]);
            for &(j, gj) in row {
                let c = self.coefficients[j];
                g[0] += c * gj[0];
                g[1] += c * gj[1];
            }
            out[i] = g;
        }
        Ok(out)
    }

    fn zero_boundary(&self) -> bool {
        self.affine.is_none()
            && self
                .coefficients
                .iter()
                .enumerate()
                .all(|(j, &c)| c == 0.0 || self.basis.is_interior(j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::sample_poisson;
    use crate::rng::RandomStream;

    fn fd_gradient(f: &dyn ConfigFunctional, mu: &Configuration, i: usize, k: usize) -> f64 {
        let h = 1e-5;
        let mut plus = mu.points[i];
        plus[k] += h;
        let mut minus = mu.points[i];
        minus[k] -= h;
        let fp = f.evaluate(&mu.moved(i, plus).unwrap()).unwrap();
        let fm = f.evaluate(&mu.moved(i, minus).unwrap()).unwrap();
        (fp - fm) / (2.0 * h)
    }

    #[test]
    fn affine_example() {
        let w = Domain::boxed(1, [0.0; 2], 3.0).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::default()).unwrap());
        let f = FeatureFunctional::zero(basis).with_affine([1.0, 0.0]);
        let mu = Configuration::from_1d(w, &[0.5, 1.5]).unwrap();
        assert!((f.evaluate(&mu).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(f.gradient(&mu, 1).unwrap(), [1.0, 0.0]);
        assert!(f.gradient(&mu, 2).is_err());
    }

    #[test]
    fn linear_precision_reproduces_affine() {
        let w = Domain::centered_box(2, 3.0).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::linear_only(0.5)).unwrap());
        let p = [0.3, -1.2];
        let f = FeatureFunctional::new(basis.clone(), basis.affine_coefficients(&p)).unwrap();
        let g = FeatureFunctional::zero(basis).with_affine(p);
        let mu = sample_poisson(&w, 2.0, &mut RandomStream::new(4).rng()).unwrap();
        assert!((f.evaluate(&mu).unwrap() - g.evaluate(&mu).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for dim in 1..=2 {
            let w = Domain::centered_box(dim, 3.0).unwrap();
            let spec = BasisSpec {
                spacing: 0.5,
                pair_spacing: Some(0.75),
                pair_range: 1.5,
            };
            let basis = Arc::new(FeatureBasis::new(&w, &spec).unwrap());
            let mut rng = RandomStream::new(8).rng();
            for j in 0..basis.len() {
                let mut c = vec![0.0; basis.len()];
                c[j] = 1.0;
                let f = FeatureFunctional::new(basis.clone(), c).unwrap();
                let mu = sample_poisson(&w, 1.5, &mut rng).unwrap();
                for i in 0..mu.len() {
                    let g = f.gradient(&mu, i).unwrap();
                    for k in 0..dim {
                        let fd = fd_gradient(&f, &mu, i, k);
                        assert!((g[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "feature {j} dim {dim}");
                    }
                }
            }
        }
    }

    #[test]
    fn pair_value_is_sum_over_distinct_pairs() {
        let w = Domain::centered_box(1, 3.0).unwrap();
        let basis = FeatureBasis::new(&w, &BasisSpec::default()).unwrap();
        let mu = Configuration::from_1d(w, &[-0.4, 0.1, 0.3]).unwrap();
        let ev = basis.eval(&mu, true);
        let g = basis.pair.as_ref().unwrap();
        for &(fid, v) in &ev.values {
            if let Feature::Pair { a, b } = basis.features()[fid] {
                let mut direct = 0.0;
                for i in 0..3 {
                    for k in 0..3 {
                        if i != k {
                            direct += g.value(a, &mu.points[i]) * g.value(b, &mu.points[k]);
                        }
                    }
                }
                assert!((v - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let w = Domain::cube(1, 1).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::default()).unwrap());
        let c: Vec<f64> = (0..basis.len()).map(|j| j as f64 * 0.01).collect();
        let f = FeatureFunctional::new(basis, c).unwrap().with_affine([1.0, 0.0]);
        let back = FeatureFunctional::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back.coefficients, f.coefficients);
        assert_eq!(back.affine, f.affine);
    }
}
