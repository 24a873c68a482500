//! Grid representation of one-dimensional functionals with at most `K`
//! particles in the window.
//!
//! The sector function `v_k(x_1..x_k)` is stored through its excess terms
//! `e_j`: `v_k(x) = sum over subsets S of {1..k} of e_{|S|}(x_S)`, with
//! `e_0 = v_0`. Boundary compatibility (`v_k -> v_{k-1}` when a coordinate
//! reaches the boundary) holds exactly when every `e_j`, `j >= 1`, vanishes
//! as any of its coordinates reaches the boundary.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConfigFunctional;
use crate::configuration::Configuration;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, Point, MAX_DIM};

/// Largest sector handled by the grid representation.
pub const MAX_SECTOR: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SectorGridFunctional {
    window: Domain,
    max_particles: usize,
    cells: usize,
    excess: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    max_particles: usize,
    cells: usize,
    spacing: f64,
    lower: f64,
    side: f64,
    /// Number of little-endian f64 values per excess term, in order `k = 0..=K`.
    lengths: Vec<usize>,
    layout: String,
}

fn subsets(k: usize) -> impl Iterator<Item = usize> {
    0..(1usize << k)
}

impl SectorGridFunctional {
    fn check(window: &Domain, max_particles: usize, cells: usize) -> Result<()> {
        if window.dim != 1 || window.is_torus() {
            return Err(invalid("window", "sector grids are one-dimensional boxes"));
        }
        if max_particles > MAX_SECTOR {
            return Err(invalid("max_particles", format!("at most {MAX_SECTOR} supported")));
        }
        if cells < 1 {
            return Err(invalid("cells", "need at least one cell"));
        }
        Ok(())
    }

    /// From nodal sector values: `sectors[k]` holds `v_k` on the grid
    /// `(cells+1)^k`, first coordinate fastest.
    pub fn from_sectors(window: &Domain, cells: usize, sectors: &[Vec<f64>]) -> Result<Self> {
        let max_particles = sectors.len().saturating_sub(1);
        Self::check(window, max_particles, cells)?;
        let np = cells + 1;
        for (k, v) in sectors.iter().enumerate() {
            if v.len() != np.pow(k as u32) {
                return Err(invalid("sectors", format!("sector {k} has {} values", v.len())));
            }
        }
        let mut excess = Vec::with_capacity(sectors.len());
        for k in 0..sectors.len() {
            let total = np.pow(k as u32);
            let mut e = vec![0.0; total];
            let mut idx = vec![0usize; k];
            for (flat, slot) in e.iter_mut().enumerate() {
                unflatten(flat, np, &mut idx);
                let mut acc = 0.0;
                for mask in subsets(k) {
                    let sub: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| idx[b]).collect();
                    let sign = if (k - sub.len()).is_multiple_of(2) { 1.0 } else { -1.0 };
                    acc += sign * sectors[sub.len()][flatten(&sub, np)];
                }
                *slot = acc;
            }
            excess.push(e);
        }
        Ok(Self {
            window: *window,
            max_particles,
            cells,
            excess,
        })
    }

    /// Samples `f` on every node configuration with at most `max_particles`
    /// points. Nodes on the boundary are treated as limits from inside.
    pub fn project(f: &dyn ConfigFunctional, window: &Domain, max_particles: usize, cells: usize) -> Result<Self> {
        Self::check(window, max_particles, cells)?;
        let np = cells + 1;
        let h = window.side / cells as f64;
        let inset = 1e-9 * h;
        let node = |i: usize| {
            let x = window.lower[0] + i as f64 * h;
            x.clamp(window.lower[0] + inset, window.lower[0] + window.side - inset)
        };
        let mut sectors = Vec::with_capacity(max_particles + 1);
        for k in 0..=max_particles {
            let total = np.pow(k as u32);
            let mut v = vec![0.0; total];
            let mut idx = vec![0usize; k];
            for (flat, slot) in v.iter_mut().enumerate() {
                unflatten(flat, np, &mut idx);
                let pts: Vec<Point> = idx.iter().map(|&i| [node(i), 0.0]).collect();
                *slot = f.evaluate(&Configuration::new(*window, pts)?)?;
            }
            sectors.push(v);
        }
        Self::from_sectors(window, cells, &sectors)
    }

    pub fn max_particles(&self) -> usize {
        self.max_particles
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.window.side / self.cells as f64
    }

    pub fn window(&self) -> &Domain {
        &self.window
    }

    pub fn excess(&self, k: usize) -> &[f64] {
        &self.excess[k]
    }

    /// `v_k` at a node multi-index.
    pub fn node_value(&self, idx: &[usize]) -> f64 {
        let np = self.cells + 1;
        let k = idx.len();
        subsets(k)
            .map(|mask| {
                let sub: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| idx[b]).collect();
                self.excess[sub.len()][flatten(&sub, np)]
            })
            .sum()
    }

    /// Largest excess value on a boundary node: zero for compatible functionals.
    pub fn compatibility_defect(&self) -> f64 {
        let np = self.cells + 1;
        let mut worst: f64 = 0.0;
        for k in 1..self.excess.len() {
            let mut idx = vec![0usize; k];
            for (flat, &v) in self.excess[k].iter().enumerate() {
                unflatten(flat, np, &mut idx);
                if idx.iter().any(|&i| i == 0 || i == self.cells) {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    /// Largest asymmetry of the excess terms under coordinate swaps.
    pub fn symmetry_defect(&self) -> f64 {
        let np = self.cells + 1;
        let mut worst: f64 = 0.0;
        for k in 2..self.excess.len() {
            let mut idx = vec![0usize; k];
            for flat in 0..self.excess[k].len() {
                unflatten(flat, np, &mut idx);
                let v = self.excess[k][flat];
                for a in 0..k {
                    for b in a + 1..k {
                        let mut s = idx.clone();
                        s.swap(a, b);
                        worst = worst.max((v - self.excess[k][flatten(&s, np)]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Multilinear interpolation of `e_j` (and optionally its derivative in coordinate `q`).
    fn interp(&self, j: usize, xs: &[f64], deriv: Option<usize>) -> f64 {
        if j == 0 {
            return if deriv.is_some() { 0.0 } else { self.excess[0][0] };
        }
        let np = self.cells + 1;
        let h = self.spacing();
        let mut cell = [0usize; MAX_SECTOR];
        let mut t = [0.0; MAX_SECTOR];
        for d in 0..j {
            let u = ((xs[d] - self.window.lower[0]) / h).clamp(0.0, self.cells as f64);
            let c = (u.floor() as usize).min(self.cells - 1);
            cell[d] = c;
            t[d] = u - c as f64;
        }
        let mut acc = 0.0;
        let mut idx = [0usize; MAX_SECTOR];
        for corner in 0..(1usize << j) {
            let mut w = 1.0;
            for d in 0..j {
                let hi = corner & (1 << d) != 0;
                idx[d] = cell[d] + usize::from(hi);
                w *= match (deriv == Some(d), hi) {
                    (true, true) => 1.0 / h,
                    (true, false) => -1.0 / h,
                    (false, true) => t[d],
                    (false, false) => 1.0 - t[d],
                };
            }
            acc += w * self.excess[j][flatten(&idx[..j], np)];
        }
        acc
    }

    fn inside_coords(&self, mu: &Configuration) -> Result<(Vec<usize>, Vec<f64>)> {
        let inside: Vec<usize> = (0..mu.len()).filter(|&i| self.window.contains(&mu.points[i])).collect();
        if inside.len() > self.max_particles {
            return Err(Error::SectorOverflow {
                count: inside.len(),
                max: self.max_particles,
            });
        }
        let xs = inside.iter().map(|&i| mu.points[i][0]).collect();
        Ok((inside, xs))
    }

    /// Writes `<stem>.bin` (little-endian f64 excess terms) and `<stem>.json`.
    pub fn write_dump(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        for e in &self.excess {
            for v in e {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(stem.with_extension("bin"), bytes)?;
        let side = Sidecar {
            max_particles: self.max_particles,
            cells: self.cells,
            spacing: self.spacing(),
            lower: self.window.lower[0],
            side: self.window.side,
            lengths: self.excess.iter().map(Vec::len).collect(),
            layout: "excess terms e_0..e_K, first coordinate fastest".into(),
        };
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_dump(stem: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        let total: usize = side.lengths.iter().sum();
        if bytes.len() != 8 * total {
            return Err(Error::Parse(format!("expected {} bytes, found {}", 8 * total, bytes.len())));
        }
        let window = Domain::boxed(1, [side.lower, 0.0], side.side)?;
        Self::check(&window, side.max_particles, side.cells)?;
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let excess = side.lengths.iter().map(|&n| vals.by_ref().take(n).collect()).collect();
        Ok(Self {
            window,
            max_particles: side.max_particles,
            cells: side.cells,
            excess,
        })
    }
}

fn flatten(idx: &[usize], np: usize) -> usize {
    idx.iter().rev().fold(0, |acc, &i| acc * np + i)
}

fn unflatten(mut flat: usize, np: usize, out: &mut [usize]) {
    for slot in out.iter_mut() {
        *slot = flat % np;
        flat /= np;
    }
}

impl ConfigFunctional for SectorGridFunctional {
    fn evaluate(&self, mu: &Configuration) -> Result<f64> {
        let (_, xs) = self.inside_coords(mu)?;
        let k = xs.len();
        Ok(subsets(k)
            .map(|mask| {
                let sub: Vec<f64> = (0..k).filter(|b| mask & (1 << b) != 0).map(|b| xs[b]).collect();
                self.interp(sub.len(), &sub, None)
            })
            .sum())
    }

    fn gradient(&self, mu: &Configuration, index: usize) -> Result<Point> {
        if index >= mu.len() {
            return Err(Error::NotAParticle { index });
        }
        let (inside, xs) = self.inside_coords(mu)?;
        let Some(me) = inside.iter().position(|&i| i == index) else {
            return Ok([0.0; MAX_DIM]);
        };
        let k = xs.len();
        let mut g = 0.0;
        for mask in subsets(k).filter(|m| m & (1 << me) != 0) {
            let members: Vec<usize> = (0..k).filter(|b| mask & (1 << b) != 0).collect();
            let sub: Vec<f64> = members.iter().map(|&b| xs[b]).collect();
            let q = members.iter().position(|&b| b == me);
            g += self.interp(sub.len(), &sub, q);
        }
        Ok([g, 0.0])
    }

    fn zero_boundary(&self) -> bool {
        self.compatibility_defect() == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::{BasisSpec, FeatureBasis, FeatureFunctional};
    use crate::rng::RandomStream;
    use rand::Rng;
    use std::sync::Arc;

    fn interior_functional(seed: u64) -> FeatureFunctional {
        let w = Domain::centered_box(1, 3.0).unwrap();
        let basis = Arc::new(FeatureBasis::new(&w, &BasisSpec::default()).unwrap());
        let mut rng = RandomStream::new(seed).rng();
        let idx = basis.interior_indices();
        let c: Vec<f64> = idx.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureFunctional::from_subset(basis, &idx, &c)
    }

    #[test]
    fn projection_is_compatible_and_symmetric() {
        let f = interior_functional(1);
        let w = *f.basis.window();
        let s = SectorGridFunctional::project(&f, &w, 2, 48).unwrap();
        assert!(s.compatibility_defect() < 1e-12);
        assert!(s.symmetry_defect() < 1e-12);
        let mu = Configuration::from_1d(w, &[0.1, -0.4, 1.0]).unwrap();
        assert!(matches!(s.evaluate(&mu), Err(Error::SectorOverflow { count: 3, max: 2 })));
    }

    #[test]
    fn projection_error_is_second_order() {
        let f = interior_functional(2);
        let w = *f.basis.window();
        let mu = Configuration::from_1d(w, &[0.123, -0.777]).unwrap();
        let exact = f.evaluate(&mu).unwrap();
        let err = |n| (SectorGridFunctional::project(&f, &w, 2, n).unwrap().evaluate(&mu).unwrap() - exact).abs();
        let (e1, e2) = (err(24), err(48));
        assert!(e2 < 0.4 * e1 || e2 < 1e-10, "{e1} {e2}");
    }

    #[test]
    fn gradient_matches_difference_of_interpolant() {
        let f = interior_functional(3);
        let w = *f.basis.window();
        let s = SectorGridFunctional::project(&f, &w, 2, 30).unwrap();
        let mu = Configuration::from_1d(w, &[0.31, -0.52]).unwrap();
        let g = s.gradient(&mu, 0).unwrap()[0];
        let h = 1e-6;
        let fp = s.evaluate(&mu.moved(0, [0.31 + h, 0.0]).unwrap()).unwrap();
        let fm = s.evaluate(&mu.moved(0, [0.31 - h, 0.0]).unwrap()).unwrap();
        assert!((g - (fp - fm) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn dump_round_trip() {
        let f = interior_functional(4);
        let w = *f.basis.window();
        let s = SectorGridFunctional::project(&f, &w, 3, 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sector");
        s.write_dump(&stem).unwrap();
        assert_eq!(SectorGridFunctional::read_dump(&stem).unwrap(), s);
    }
}
