//! Finite point configurations, Poisson sampling and the snapshot format.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, Domain, Geometry, Point, MAX_DIM};

/// A finite multiset of points in a box or torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub domain: Domain,
    pub points: Vec<Point>,
}

/// Restriction windows for [`translate_restrict`], all centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    /// Open ball of the given radius.
    Ball(f64),
    /// Open cube of the given side.
    Cube(f64),
}

impl Region {
    pub fn contains(&self, x: &Point, dim: usize) -> bool {
        match *self {
            Region::All => true,
            Region::Ball(r) => norm(x, dim) < r,
            Region::Cube(s) => (0..dim).all(|k| x[k].abs() < s / 2.0),
        }
    }
}

impl Configuration {
    pub fn empty(domain: Domain) -> Self {
        Self {
            domain,
            points: Vec::new(),
        }
    }

    /// Builds a configuration, checking every point lies in the domain.
    /// Points on a torus are wrapped into the fundamental cell.
    pub fn new(domain: Domain, points: Vec<Point>) -> Result<Self> {
        let mut out = Vec::with_capacity(points.len());
        for (i, p) in points.into_iter().enumerate() {
            if !domain.contains(&p) {
                return Err(invalid("points", format!("point {i} = {p:?} lies outside the domain")));
            }
            let mut q = domain.wrap(&p);
            for c in q.iter_mut().skip(domain.dim) {
                *c = 0.0;
            }
            out.push(q);
        }
        Ok(Self { domain, points: out })
    }

    /// Shorthand for one-dimensional configurations.
    pub fn from_1d(domain: Domain, xs: &[f64]) -> Result<Self> {
        Self::new(domain, xs.iter().map(|&x| [x, 0.0]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// Number of points in the open ball `B_r(x)` (minimum image on a torus).
    pub fn count_in_ball(&self, x: &Point, r: f64) -> usize {
        self.points
            .iter()
            .filter(|y| norm(&self.domain.displacement(x, y), self.dim()) < r)
            .count()
    }

    /// Number of points inside `window` (a box).
    pub fn count_in(&self, window: &Domain) -> usize {
        self.points.iter().filter(|y| window.contains(y)).count()
    }

    /// Points inside `window`, keeping the ambient domain.
    pub fn restricted_to(&self, window: &Domain) -> Self {
        Self {
            domain: self.domain,
            points: self.points.iter().filter(|y| window.contains(y)).copied().collect(),
        }
    }

    /// Adds a point (wrapped on a torus). No domain check.
    pub fn with_point(&self, x: Point) -> Self {
        let mut out = self.clone();
        out.points.push(self.domain.wrap(&x));
        out
    }

    /// Replaces the `index`-th point by `x`.
    pub fn moved(&self, index: usize, x: Point) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::NotAParticle { index });
        }
        let mut out = self.clone();
        out.points[index] = self.domain.wrap(&x);
        Ok(out)
    }

    /// Sum of `g` over the points.
    pub fn integrate<F: Fn(&Point) -> f64>(&self, g: F) -> f64 {
        self.points.iter().map(g).sum()
    }
}

fn uniform_point<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Point {
    let mut p = [0.0; MAX_DIM];
    for (k, c) in p.iter_mut().enumerate().take(domain.dim) {
        loop {
            // open box: reject the (measure zero) lower endpoint
            let u: f64 = rng.random();
            if u > 0.0 {
                *c = domain.lower[k] + u * domain.side;
                break;
            }
        }
    }
    domain.wrap(&p)
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean < 0.0 || !mean.is_finite() {
        return Err(invalid("rho", format!("intensity times volume {mean} must be nonnegative")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| invalid("rho", e.to_string()))?;
    Ok(dist.sample(rng) as usize)
}

/// Poisson point process of intensity `rho` on `domain`.
pub fn sample_poisson<R: Rng + ?Sized>(domain: &Domain, rho: f64, rng: &mut R) -> Result<Configuration> {
    if rho < 0.0 {
        return Err(invalid("rho", format!("{rho} is negative")));
    }
    let n = poisson_count(rho * domain.volume(), rng)?;
    let points = (0..n).map(|_| uniform_point(domain, rng)).collect();
    Ok(Configuration { domain: *domain, points })
}

/// Probabilities of `0..=max` under Poisson(`mean`) conditioned on `N <= max`.
pub fn truncated_poisson_pmf(mean: f64, max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(max + 1);
    let mut term = 1.0;
    for k in 0..=max {
        if k > 0 {
            term *= mean / k as f64;
        }
        w.push(term);
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// Mean of Poisson(`mean`) conditioned on `N <= max`.
pub fn truncated_poisson_mean(mean: f64, max: usize) -> f64 {
    truncated_poisson_pmf(mean, max).iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Poisson process on `domain` conditioned on having at most `max` points.
pub fn sample_poisson_truncated<R: Rng + ?Sized>(domain: &Domain, rho: f64, max: usize, rng: &mut R) -> Result<Configuration> {
    if rho < 0.0 {
        return Err(invalid("rho", format!("{rho} is negative")));
    }
    let pmf = truncated_poisson_pmf(rho * domain.volume(), max);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut n = max;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            n = k;
            break;
        }
    }
    let points = (0..n).map(|_| uniform_point(domain, rng)).collect();
    Ok(Configuration { domain: *domain, points })
}

/// Poisson sample on `window` (a box) plus an independent Poisson sample on
/// the surrounding shell of width `halo`, in one configuration over the
/// enlarged box. With `max = Some(k)` the count inside `window` is
/// conditioned on being at most `k`; the shell is never conditioned.
/// Points inside `window` come first.
pub fn sample_with_halo<R: Rng + ?Sized>(window: &Domain, rho: f64, halo: f64, max: Option<usize>, rng: &mut R) -> Result<Configuration> {
    if window.is_torus() {
        return Err(invalid("window", "halo sampling needs a box"));
    }
    let outer = window.enlarged(halo)?;
    let inner = match max {
        Some(k) => sample_poisson_truncated(window, rho, k, rng)?,
        None => sample_poisson(window, rho, rng)?,
    };
    let mut points = inner.points;
    if halo > 0.0 {
        let shell_mean = rho * (outer.volume() - window.volume());
        let n = poisson_count(shell_mean, rng)?;
        let mut placed = 0;
        while placed < n {
            let p = uniform_point(&outer, rng);
            if !window.contains(&p) {
                points.push(p);
                placed += 1;
            }
        }
    }
    Ok(Configuration { domain: outer, points })
}

/// The law of `mu + delta_0` with `mu` Poisson: the atom is stored at index 0.
pub fn palm_sample<R: Rng + ?Sized>(domain: &Domain, rho: f64, rng: &mut R) -> Result<Configuration> {
    if !domain.contains(&[0.0; MAX_DIM]) {
        return Err(invalid("domain", "the origin must lie in the domain"));
    }
    let base = sample_poisson(domain, rho, rng)?;
    let mut points = Vec::with_capacity(base.len() + 1);
    points.push([0.0; MAX_DIM]);
    points.extend(base.points);
    Ok(Configuration { domain: *domain, points })
}

/// `tau_{-x} mu` restricted to `region`. On a torus the shift wraps and the
/// domain is unchanged; a box domain is translated along with the points.
pub fn translate_restrict(mu: &Configuration, x: &Point, region: Region) -> Configuration {
    let dim = mu.dim();
    let domain = match mu.domain.geometry {
        Geometry::Torus => mu.domain,
        Geometry::Box => mu.domain.translated(x),
    };
    let points = mu
        .points
        .iter()
        .map(|y| match mu.domain.geometry {
            Geometry::Torus => {
                let mut d = mu.domain.displacement(x, y);
                for c in d.iter_mut().skip(dim) {
                    *c = 0.0;
                }
                domain.wrap(&d)
            }
            Geometry::Box => {
                let mut d = [0.0; MAX_DIM];
                for k in 0..dim {
                    d[k] = y[k] - x[k];
                }
                d
            }
        })
        .filter(|d| region.contains(d, dim))
        .collect();
    Configuration { domain, points }
}

fn geometry_name(g: Geometry) -> &'static str {
    match g {
        Geometry::Box => "box",
        Geometry::Torus => "torus",
    }
}

/// Writes the snapshot format: a `# d=.. geometry=.. side=..` header, a
/// `# lower=..` line, an optional `# t=..` line and one point per line.
pub fn write_snapshot<W: Write>(out: &mut W, mu: &Configuration, time: Option<f64>) -> Result<()> {
    let d = mu.domain;
    writeln!(out, "# d={} geometry={} side={:e}", d.dim, geometry_name(d.geometry), d.side)?;
    let lower: Vec<String> = d.lower[..d.dim].iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "# lower={}", lower.join(" "))?;
    if let Some(t) = time {
        writeln!(out, "# t={t:e}")?;
    }
    for p in &mu.points {
        let row: Vec<String> = p[..d.dim].iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{what}: `{s}`: {e}")))
}

/// Reads one snapshot. Without a `lower` line a box is centered at the
/// origin. Returns the configuration and the time stamp, if any.
pub fn read_snapshot<R: BufRead>(input: R) -> Result<(Configuration, Option<f64>)> {
    let mut dim = None;
    let mut geometry = None;
    let mut side = None;
    let mut lower = None;
    let mut time = None;
    let mut raw = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(vals) = rest.strip_prefix("lower=") {
                let v: Result<Vec<f64>> = vals.split_whitespace().map(|s| parse_f64(s, "lower")).collect();
                lower = Some(v?);
                continue;
            }
            for tok in rest.split_whitespace() {
                match tok.split_once('=') {
                    Some(("d", v)) => dim = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("d: {e}")))?),
                    Some(("geometry", "box")) => geometry = Some(Geometry::Box),
                    Some(("geometry", "torus")) => geometry = Some(Geometry::Torus),
                    Some(("geometry", g)) => return Err(Error::Parse(format!("unknown geometry `{g}`"))),
                    Some(("side", v)) => side = Some(parse_f64(v, "side")?),
                    Some(("t", v)) => time = Some(parse_f64(v, "t")?),
                    _ => {}
                }
            }
            continue;
        }
        let v: Result<Vec<f64>> = line.split_whitespace().map(|s| parse_f64(s, "coordinate")).collect();
        raw.push(v?);
    }
    let dim = dim.ok_or_else(|| Error::Parse("missing `d=` header".into()))?;
    let geometry = geometry.ok_or_else(|| Error::Parse("missing `geometry=` header".into()))?;
    let side = side.ok_or_else(|| Error::Parse("missing `side=` header".into()))?;
    let mut domain = match geometry {
        Geometry::Box => Domain::centered_box(dim, side)?,
        Geometry::Torus => Domain::torus(dim, side)?,
    };
    if let Some(l) = lower {
        if l.len() != dim {
            return Err(Error::Parse(format!("`lower` has {} entries, expected {dim}", l.len())));
        }
        let mut p = [0.0; MAX_DIM];
        p[..dim].copy_from_slice(&l);
        domain.lower = p;
    }
    let mut points = Vec::with_capacity(raw.len());
    for (i, row) in raw.into_iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Parse(format!("point {i} has {} coordinates, expected {dim}", row.len())));
        }
        let mut p = [0.0; MAX_DIM];
        p[..dim].copy_from_slice(&row);
        points.push(p);
    }
    Ok((Configuration::new(domain, points)?, time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::stats::poisson_chi_square;

    #[test]
    fn zero_intensity_is_empty() {
        let d = Domain::boxed(1, [0.0; 2], 3.0).unwrap();
        let mu = sample_poisson(&d, 0.0, &mut RandomStream::new(1).rng()).unwrap();
        assert!(mu.is_empty());
        assert!(sample_poisson(&d, -1.0, &mut RandomStream::new(1).rng()).is_err());
    }

    #[test]
    fn counts_are_poisson() {
        for &mean in &[1.0, 10.0, 100.0] {
            let d = Domain::boxed(1, [0.0; 2], mean).unwrap();
            let mut rng = RandomStream::new(42).rng();
            let counts: Vec<usize> = (0..4000).map(|_| sample_poisson(&d, 1.0, &mut rng).unwrap().len()).collect();
            assert!(poisson_chi_square(&counts, mean) > 0.01, "mean {mean}");
        }
    }

    #[test]
    fn translate_examples() {
        let d = Domain::boxed(1, [0.0; 2], 3.0).unwrap();
        let mu = Configuration::from_1d(d, &[1.0]).unwrap();
        let t = translate_restrict(&mu, &[1.0, 0.0], Region::All);
        assert_eq!(t.points, vec![[0.0, 0.0]]);
        let mu = Configuration::from_1d(d, &[0.2, 2.9]).unwrap();
        let t = translate_restrict(&mu, &[0.0, 0.0], Region::Ball(1.0));
        assert_eq!(t.points, vec![[0.2, 0.0]]);
    }

    #[test]
    fn torus_translation_round_trip() {
        let d = Domain::torus(2, 5.0).unwrap();
        let mu = Configuration::new(d, vec![[2.4, -2.0], [0.3, 1.1]]).unwrap();
        let x = [1.7, -0.9];
        let there = translate_restrict(&mu, &x, Region::All);
        let back = translate_restrict(&there, &[-x[0], -x[1]], Region::All);
        for (a, b) in back.points.iter().zip(&mu.points) {
            let dd = d.displacement(a, b);
            assert!(dd[0].abs() < 1e-12 && dd[1].abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_law() {
        let pmf = truncated_poisson_pmf(3.0, 2);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((pmf[1] / pmf[0] - 3.0).abs() < 1e-12);
        let w = Domain::cube(1, 1).unwrap();
        let mut rng = RandomStream::new(3).rng();
        for _ in 0..200 {
            let mu = sample_with_halo(&w, 1.0, 1.0, Some(2), &mut rng).unwrap();
            assert!(mu.count_in(&w) <= 2);
        }
    }

    #[test]
    fn palm_has_atom_at_origin() {
        let d = Domain::cube(1, 1).unwrap();
        let mu = palm_sample(&d, 0.0, &mut RandomStream::new(5).rng()).unwrap();
        assert_eq!(mu.points, vec![[0.0, 0.0]]);
    }

    #[test]
    fn snapshot_round_trip() {
        let d = Domain::torus(2, 4.0).unwrap();
        let mu = sample_poisson(&d, 1.0, &mut RandomStream::new(9).rng()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &mu, Some(2.5)).unwrap();
        let (back, t) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, Some(2.5));
        assert_eq!(back, mu);
    }
}
