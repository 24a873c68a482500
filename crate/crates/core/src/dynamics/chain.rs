use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::configuration::{write_snapshot, Configuration};
use crate::error::{invalid, Result};
use crate::geometry::{Domain, Point, MAX_DIM};
use crate::matrix::SymMatrix;
use crate::model::CoefficientModel;
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Gaussian proposals with covariance `a(mu, x) dt`, Metropolis-corrected;
    /// exactly reversible for the Poisson law.
    MetropolisGaussian,
    /// The same proposals always accepted. Biased; for comparison only.
    PlainEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub dt: f64,
    pub scheme: Scheme,
    pub domain: Domain,
    pub model: CoefficientModel,
    pub rho: f64,
}

impl ChainParams {
    pub fn new(dt: f64, domain: Domain, model: CoefficientModel, rho: f64) -> Result<Self> {
        let p = Self {
            dt,
            scheme: Scheme::MetropolisGaussian,
            domain,
            model,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !self.domain.is_torus() {
            return Err(invalid("domain", "the dynamics runs on a torus"));
        }
        if !(self.domain.side > 2.0) {
            return Err(invalid("domain", "torus side must exceed 2"));
        }
        if !(self.rho >= 0.0) {
            return Err(invalid("rho", "must be nonnegative"));
        }
        Ok(())
    }

    /// Sweeps needed to reach time `t` (nearest sweep boundary).
    pub fn sweeps_for(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Law of the displacement `xi` proposed for a particle with coefficient `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    /// `Normal(0, a dt)`.
    Gaussian,
    /// Discrete Gaussian on `h Z^d`, truncated to `|j_k| <= max_jump`.
    Lattice { h: f64, max_jump: i64 },
}

impl Proposal {
    /// Log density of `xi`: normalized on the lattice, up to an
    /// `a`-independent constant for the Gaussian.
    pub fn log_density(&self, xi: &Point, a: &SymMatrix, dt: f64) -> f64 {
        let dim = a.dim;
        let cov = a.scale(dt);
        let inv = cov.inverse().expect("positive definite coefficient");
        match *self {
            Proposal::Gaussian => -0.5 * inv.quad(xi) - 0.5 * cov.det().ln(),
            Proposal::Lattice { h, max_jump } => {
                let mut z = 0.0;
                let range = -max_jump..=max_jump;
                let inner: Vec<i64> = if dim == 2 { range.clone().collect() } else { vec![0] };
                for i in range {
                    for &j in &inner {
                        let y = [i as f64 * h, j as f64 * h];
                        z += (-0.5 * inv.quad(&y)).exp();
                    }
                }
                -0.5 * inv.quad(xi) - z.ln()
            }
        }
    }
}

/// Metropolis acceptance probability of moving particle `index` by `xi`
/// through the involution `(x, xi) -> (x + xi, -xi)`. The target density is
/// constant, so only the proposal densities enter.
pub fn acceptance_probability(
    model: &CoefficientModel,
    domain: &Domain,
    points: &mut [Point],
    index: usize,
    xi: &Point,
    dt: f64,
    proposal: Proposal,
) -> f64 {
    if model.is_identity() {
        return 1.0;
    }
    let x = points[index];
    let a = model.eval_in(domain, points, &x);
    let mut y = x;
    for k in 0..domain.dim {
        y[k] += xi[k];
    }
    let y = domain.wrap(&y);
    points[index] = y;
    let a_new = model.eval_in(domain, points, &y);
    points[index] = x;
    if a_new == a {
        return 1.0;
    }
    let back = [-xi[0], -xi[1]];
    let log_ratio = proposal.log_density(&back, &a_new, dt) - proposal.log_density(xi, &a, dt);
    log_ratio.exp().min(1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub proposed: usize,
    pub accepted: usize,
}

/// One random-scan sweep in place; the coefficient of each particle is
/// frozen at its proposal time.
pub fn sweep<R: Rng + ?Sized>(mu: &mut Configuration, params: &ChainParams, rng: &mut R) -> SweepStats {
    let dim = mu.domain.dim;
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.shuffle(rng);
    let mut stats = SweepStats::default();
    for i in order {
        let x = mu.points[i];
        let a = params.model.eval_in(&mu.domain, &mu.points, &x);
        let l = a.scale(params.dt).cholesky().expect("positive definite coefficient");
        let mut z = [0.0; MAX_DIM];
        for v in z.iter_mut().take(dim) {
            *v = rng.sample(StandardNormal);
        }
        let mut xi = [0.0; MAX_DIM];
        for r in 0..dim {
            for c in 0..=r {
                xi[r] += l[r][c] * z[c];
            }
        }
        stats.proposed += 1;
        let accept = match params.scheme {
            Scheme::PlainEuler => true,
            Scheme::MetropolisGaussian => {
                let p = acceptance_probability(&params.model, &mu.domain, &mut mu.points, i, &xi, params.dt, Proposal::Gaussian);
                p >= 1.0 || rng.random::<f64>() < p
            }
        };
        if accept {
            let mut y = x;
            for k in 0..dim {
                y[k] += xi[k];
            }
            mu.points[i] = mu.domain.wrap(&y);
            stats.accepted += 1;
        }
    }
    stats
}

/// One sweep, returning the new state.
pub fn step<R: Rng + ?Sized>(state: &Configuration, params: &ChainParams, rng: &mut R) -> Configuration {
    let mut next = state.clone();
    sweep(&mut next, params, rng);
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Configuration,
    /// `(time, state)` at distinct sweep boundaries, increasing in time.
    pub snapshots: Vec<(f64, Configuration)>,
    pub seed: RandomStream,
    pub stats: SweepStats,
}

impl Trajectory {
    /// State at the sweep boundary nearest to `t`, if it was recorded.
    pub fn at(&self, t: f64, dt: f64) -> Option<&Configuration> {
        let k = (t / dt).round();
        self.snapshots.iter().find(|(s, _)| (s / dt).round() == k).map(|(_, mu)| mu)
    }

    /// One snapshot file per recorded time, `snapshot_<k>.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let initial = dir.join("initial.txt");
        write_snapshot(&mut std::fs::File::create(&initial)?, &self.initial, Some(0.0))?;
        files.push(initial);
        for (k, (t, mu)) in self.snapshots.iter().enumerate() {
            let path = dir.join(format!("snapshot_{k}.txt"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            write_snapshot(&mut f, mu, Some(*t))?;
            f.flush()?;
            files.push(path);
        }
        Ok(files)
    }
}

/// Runs the chain from `initial`, recording the state at each requested time
/// (rounded to a sweep boundary; duplicates after rounding are merged).
pub fn simulate(initial: &Configuration, params: &ChainParams, times: &[f64], stream: RandomStream) -> Result<Trajectory> {
    params.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("times", "must be nonnegative and sorted"));
    }
    let mut rng = stream.rng();
    let mut mu = initial.clone();
    let mut done = 0;
    let mut snapshots: Vec<(f64, Configuration)> = Vec::new();
    let mut stats = SweepStats::default();
    for &t in times {
        let target = params.sweeps_for(t);
        if snapshots.last().is_some_and(|(s, _)| params.sweeps_for(*s) == target) {
            continue;
        }
        while done < target {
            let s = sweep(&mut mu, params, &mut rng);
            stats.proposed += s.proposed;
            stats.accepted += s.accepted;
            done += 1;
        }
        snapshots.push((target as f64 * params.dt, mu.clone()));
    }
    Ok(Trajectory {
        initial: initial.clone(),
        snapshots,
        seed: stream,
        stats,
    })
}

/// Transition matrix of one random-scan sweep of the lattice chain: two
/// particles on `sites` equally spaced points of a one-dimensional torus,
/// discrete Gaussian proposals. States are ordered pairs `(i, j)` as `i + sites * j`.
pub fn lattice_transition_matrix(model: &CoefficientModel, side: f64, sites: usize, dt: f64, max_jump: i64) -> Result<Vec<Vec<f64>>> {
    let domain = Domain::torus(1, side)?;
    let h = side / sites as f64;
    let proposal = Proposal::Lattice { h, max_jump };
    let n = sites * sites;
    let pos = |s: usize| [s as f64 * h - side / 2.0, 0.0];
    let decode = |state: usize| [state % sites, state / sites];
    let encode = |p: [usize; 2]| p[0] + sites * p[1];
    let single = |who: usize| -> Vec<Vec<f64>> {
        let mut k = vec![vec![0.0; n]; n];
        for (state, row) in k.iter_mut().enumerate() {
            let now = decode(state);
            let mut points = vec![pos(now[0]), pos(now[1])];
            let a = model.eval_in(&domain, &points, &points[who]);
            let mut stay = 1.0;
            for j in -max_jump..=max_jump {
                let xi = [j as f64 * h, 0.0];
                let q = proposal.log_density(&xi, &a, dt).exp();
                let acc = acceptance_probability(model, &domain, &mut points, who, &xi, dt, proposal);
                let mut next = now;
                next[who] = (now[who] as i64 + j).rem_euclid(sites as i64) as usize;
                row[encode(next)] += q * acc;
                stay -= q * acc;
            }
            row[state] += stay;
        }
        k
    };
    let k0 = single(0);
    let k1 = single(1);
    let mut k = vec![vec![0.0; n]; n];
    for r in 0..n {
        for m in 0..n {
            if k0[r][m] == 0.0 && k1[r][m] == 0.0 {
                continue;
            }
            for c in 0..n {
                k[r][c] += 0.5 * (k0[r][m] * k1[m][c] + k1[r][m] * k0[m][c]);
            }
        }
    }
    Ok(k)
}

/// `max |pi(x) K(x, y) - pi(y) K(y, x)|` for the uniform law.
pub fn detailed_balance_defect(k: &[Vec<f64>]) -> f64 {
    let pi = 1.0 / k.len() as f64;
    let mut worst = 0.0f64;
    for (r, row) in k.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((pi * v - pi * k[c][r]).abs());
        }
    }
    worst
}
