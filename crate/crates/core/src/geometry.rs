//! Boxes, tori and the mesoscopic cube grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported dimension. Points and vectors are stored in fixed
/// arrays of this length; trailing entries are zero when `d = 1`.
pub const MAX_DIM: usize = 2;

pub type Point = [f64; MAX_DIM];

/// Range of the coefficient field: `a(mu, x)` only sees `mu` inside the open unit ball around `x`.
pub const INTERACTION_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Box,
    Torus,
}

/// An open box `lower + (0, side)^d` or a flat torus of the same shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub geometry: Geometry,
    pub lower: Point,
    pub side: f64,
}

impl Domain {
    fn checked(dim: usize, geometry: Geometry, lower: Point, side: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid("dim", format!("{dim} not in 1..={MAX_DIM}")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(invalid("side", format!("{side} must be positive")));
        }
        if geometry == Geometry::Torus && side <= 2.0 * INTERACTION_RADIUS {
            return Err(invalid("side", format!("torus side {side} must exceed 2")));
        }
        let mut lower = lower;
        for l in lower.iter_mut().skip(dim) {
            *l = 0.0;
        }
        Ok(Self {
            dim,
            geometry,
            lower,
            side,
        })
    }

    /// The cube `(-3^m/2, 3^m/2)^d`.
    pub fn cube(m: u32, dim: usize) -> Result<Self> {
        Self::centered_box(dim, 3f64.powi(m as i32))
    }

    pub fn centered_box(dim: usize, side: f64) -> Result<Self> {
        Self::checked(dim, Geometry::Box, [-side / 2.0; MAX_DIM], side)
    }

    pub fn boxed(dim: usize, lower: Point, side: f64) -> Result<Self> {
        Self::checked(dim, Geometry::Box, lower, side)
    }

    /// Torus `[-side/2, side/2)^d`.
    pub fn torus(dim: usize, side: f64) -> Result<Self> {
        Self::checked(dim, Geometry::Torus, [-side / 2.0; MAX_DIM], side)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.dim as f64).sqrt()
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim {
            c[k] = self.lower[k] + self.side / 2.0;
        }
        c
    }

    pub fn is_torus(&self) -> bool {
        self.geometry == Geometry::Torus
    }

    /// Open-box membership; every point belongs to a torus.
    pub fn contains(&self, x: &Point) -> bool {
        match self.geometry {
            Geometry::Torus => true,
            Geometry::Box => (0..self.dim).all(|k| x[k] > self.lower[k] && x[k] < self.lower[k] + self.side),
        }
    }

    /// Maps a point into the fundamental cell (identity on boxes).
    pub fn wrap(&self, x: &Point) -> Point {
        match self.geometry {
            Geometry::Box => *x,
            Geometry::Torus => {
                let mut y = *x;
                for k in 0..self.dim {
                    let rel = (y[k] - self.lower[k]).rem_euclid(self.side);
                    y[k] = self.lower[k] + if rel >= self.side { 0.0 } else { rel };
                }
                y
            }
        }
    }

    /// Displacement `to - from`, using the minimum image on a torus.
    pub fn displacement(&self, from: &Point, to: &Point) -> Point {
        let mut d = [0.0; MAX_DIM];
        for k in 0..self.dim {
            let mut v = to[k] - from[k];
            if self.geometry == Geometry::Torus {
                v -= self.side * (v / self.side).round();
            }
            d[k] = v;
        }
        d
    }

    /// The box grown by `width` on every side (boxes only).
    pub fn enlarged(&self, width: f64) -> Result<Self> {
        let mut lower = self.lower;
        for l in lower.iter_mut().take(self.dim) {
            *l -= width;
        }
        Self::checked(self.dim, self.geometry, lower, self.side + 2.0 * width)
    }

    /// Same shape translated by `-x`.
    pub fn translated(&self, x: &Point) -> Self {
        let mut lower = self.lower;
        for k in 0..self.dim {
            lower[k] -= x[k];
        }
        Self { lower, ..*self }
    }

    /// Same shape scaled about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut lower = self.lower;
        for l in lower.iter_mut() {
            *l *= factor;
        }
        Self::checked(self.dim, self.geometry, lower, self.side * factor)
    }
}

/// Centers `z` of the partition of the cube of side `3^m` into cubes of side
/// `3^n`: the grid `3^n Z^d` intersected with the open cube.
pub fn mesoscopic_centers(m: u32, n: u32, dim: usize) -> Vec<Point> {
    assert!(n <= m, "mesoscale {n} exceeds the cube index {m}");
    let per_dim = 3usize.pow(m - n);
    let half = (per_dim as i64 - 1) / 2;
    let step = 3f64.powi(n as i32);
    let coords: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();
    match dim {
        1 => coords.iter().map(|&x| [x, 0.0]).collect(),
        _ => coords.iter().flat_map(|&y| coords.iter().map(move |&x| [x, y])).collect(),
    }
}

pub fn norm(v: &Point, dim: usize) -> f64 {
    v.iter().take(dim).map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &Point, b: &Point, dim: usize) -> f64 {
    (0..dim).map(|k| a[k] * b[k]).sum()
}

/// Unit vector `e_k`.
pub fn unit(k: usize) -> Point {
    let mut e = [0.0; MAX_DIM];
    e[k] = 1.0;
    e
}
