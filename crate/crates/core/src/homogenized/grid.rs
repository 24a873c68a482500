use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, Geometry, Point, MAX_DIM};
use crate::report::{fmt_f64, CsvTable};

/// Nodal values on a uniform grid over a box (nodes on the boundary
/// included) or a torus (one representative per periodic class).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub domain: Domain,
    pub cells: usize,
    pub values: Vec<f64>,
    pub zero_boundary: bool,
}

impl GridFunction {
    pub fn zeros(domain: Domain, cells: usize) -> Result<Self> {
        if !(1..=2).contains(&domain.dim) {
            return Err(Error::Unsupported(format!("grid functions in dimension {}", domain.dim)));
        }
        if cells < 2 {
            return Err(invalid("cells", "need at least two cells per axis"));
        }
        let per_axis = if domain.is_torus() { cells } else { cells + 1 };
        Ok(Self {
            domain,
            cells,
            values: vec![0.0; per_axis.pow(domain.dim as u32)],
            zero_boundary: false,
        })
    }

    pub fn from_fn<F: Fn(&Point) -> f64>(domain: Domain, cells: usize, f: F) -> Result<Self> {
        let mut g = Self::zeros(domain, cells)?;
        for k in 0..g.len() {
            g.values[k] = f(&g.node(k));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "non-finite nodal value"));
        }
        Ok(g)
    }

    /// Sets boundary nodes of a box grid to zero and flags the function as `H^1_0`.
    pub fn with_zero_boundary(mut self) -> Self {
        if !self.domain.is_torus() {
            for k in 0..self.len() {
                if self.is_boundary(k) {
                    self.values[k] = 0.0;
                }
            }
            self.zero_boundary = true;
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn per_axis(&self) -> usize {
        if self.domain.is_torus() {
            self.cells
        } else {
            self.cells + 1
        }
    }

    pub fn spacing(&self) -> f64 {
        self.domain.side / self.cells as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.per_axis() * idx[1]
    }

    pub fn multi_index(&self, k: usize) -> [usize; 2] {
        let n = self.per_axis();
        [k % n, k / n]
    }

    pub fn node(&self, k: usize) -> Point {
        let idx = self.multi_index(k);
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = self.domain.lower[a] + idx[a] as f64 * h;
        }
        x
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        if self.domain.is_torus() {
            return false;
        }
        let idx = self.multi_index(k);
        (0..self.dim()).any(|a| idx[a] == 0 || idx[a] == self.cells)
    }

    /// Trapezoid weight of node `k` (exact integration of the multilinear interpolant).
    pub fn weight(&self, k: usize) -> f64 {
        let h = self.spacing();
        let idx = self.multi_index(k);
        let mut w = 1.0;
        for a in 0..self.dim() {
            w *= h;
            if !self.domain.is_torus() && (idx[a] == 0 || idx[a] == self.cells) {
                w *= 0.5;
            }
        }
        w
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.domain == other.domain && self.cells == other.cells
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Inconsistent("grid functions live on different grids".into()))
        }
    }

    pub fn integral(&self) -> f64 {
        (0..self.len()).map(|k| self.weight(k) * self.values[k]).sum()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok((0..self.len()).map(|k| self.weight(k) * self.values[k] * other.values[k]).sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).expect("same grid").sqrt()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v = f(*v));
        g
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut g = self.clone();
        for (v, w) in g.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
        g.zero_boundary = self.zero_boundary && other.zero_boundary;
        Ok(g)
    }

    /// Cell index and local coordinate along axis `a`, or `None` outside a box.
    fn locate(&self, x: f64, a: usize) -> Option<(usize, f64)> {
        let h = self.spacing();
        let mut s = (x - self.domain.lower[a]) / h;
        if self.domain.is_torus() {
            s = s.rem_euclid(self.cells as f64);
        } else if s < 0.0 || s > self.cells as f64 {
            return None;
        }
        let i = (s.floor() as usize).min(self.cells - 1);
        Some((i, s - i as f64))
    }

    fn wrap_index(&self, i: usize) -> usize {
        if self.domain.is_torus() {
            i % self.cells
        } else {
            i
        }
    }

    fn corners(&self, x: &Point) -> Option<([usize; 2], [f64; 2])> {
        let mut i = [0; 2];
        let mut t = [0.0; 2];
        for a in 0..self.dim() {
            let (ia, ta) = self.locate(x[a], a)?;
            i[a] = ia;
            t[a] = ta;
        }
        Some((i, t))
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        let j = if self.dim() == 1 { 0 } else { self.wrap_index(j) };
        self.values[self.index([self.wrap_index(i), j])]
    }

    /// Multilinear interpolant; zero outside a box.
    pub fn value_at(&self, x: &Point) -> f64 {
        let Some((i, t)) = self.corners(x) else {
            return 0.0;
        };
        if self.dim() == 1 {
            return (1.0 - t[0]) * self.at(i[0], 0) + t[0] * self.at(i[0] + 1, 0);
        }
        let (a, b) = (i[0], i[1]);
        (1.0 - t[1]) * ((1.0 - t[0]) * self.at(a, b) + t[0] * self.at(a + 1, b))
            + t[1] * ((1.0 - t[0]) * self.at(a, b + 1) + t[0] * self.at(a + 1, b + 1))
    }

    /// Gradient of the multilinear interpolant (one-sided at cell faces).
    pub fn gradient_at(&self, x: &Point) -> Point {
        let mut g = [0.0; MAX_DIM];
        let Some((i, t)) = self.corners(x) else {
            return g;
        };
        let h = self.spacing();
        if self.dim() == 1 {
            g[0] = (self.at(i[0] + 1, 0) - self.at(i[0], 0)) / h;
            return g;
        }
        let (a, b) = (i[0], i[1]);
        let dx0 = self.at(a + 1, b) - self.at(a, b);
        let dx1 = self.at(a + 1, b + 1) - self.at(a, b + 1);
        let dy0 = self.at(a, b + 1) - self.at(a, b);
        let dy1 = self.at(a + 1, b + 1) - self.at(a + 1, b);
        g[0] = ((1.0 - t[1]) * dx0 + t[1] * dx1) / h;
        g[1] = ((1.0 - t[0]) * dy0 + t[0] * dy1) / h;
        g
    }

    /// `||grad u||_{L^2}` of the multilinear interpolant, computed exactly.
    pub fn gradient_l2(&self) -> f64 {
        let h = self.spacing();
        let mut s = 0.0;
        if self.dim() == 1 {
            for i in 0..self.cells {
                let d = (self.at(i + 1, 0) - self.at(i, 0)) / h;
                s += h * d * d;
            }
            return s.sqrt();
        }
        for b in 0..self.cells {
            for a in 0..self.cells {
                let dx0 = (self.at(a + 1, b) - self.at(a, b)) / h;
                let dx1 = (self.at(a + 1, b + 1) - self.at(a, b + 1)) / h;
                let dy0 = (self.at(a, b + 1) - self.at(a, b)) / h;
                let dy1 = (self.at(a + 1, b + 1) - self.at(a + 1, b)) / h;
                s += h * h * ((dx0 * dx0 + dx0 * dx1 + dx1 * dx1) + (dy0 * dy0 + dy0 * dy1 + dy1 * dy1)) / 3.0;
            }
        }
        s.sqrt()
    }

    /// Every second node; needs an even number of cells.
    pub fn coarsened(&self) -> Result<Self> {
        if !self.cells.is_multiple_of(2) || self.cells < 4 {
            return Err(invalid("cells", "coarsening needs an even count of at least four"));
        }
        let mut g = Self::zeros(self.domain, self.cells / 2)?;
        for k in 0..g.len() {
            let idx = g.multi_index(k);
            g.values[k] = self.values[self.index([2 * idx[0], 2 * idx[1]])];
        }
        g.zero_boundary = self.zero_boundary;
        Ok(g)
    }

    pub fn to_csv(&self) -> CsvTable {
        let d = self.domain;
        let geometry = match d.geometry {
            Geometry::Box => "box",
            Geometry::Torus => "torus",
        };
        let cols: &[&str] = if d.dim == 1 { &["x", "value"] } else { &["x", "y", "value"] };
        let mut t = CsvTable::new(cols)
            .meta("d", d.dim)
            .meta("geometry", geometry)
            .meta("side", fmt_f64(d.side))
            .meta("lower", d.lower[..d.dim].iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "))
            .meta("cells", self.cells)
            .meta("zero_boundary", self.zero_boundary);
        for k in 0..self.len() {
            let x = self.node(k);
            let mut row: Vec<String> = x[..d.dim].iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(self.values[k]));
            t.push(row);
        }
        t
    }

    pub fn from_csv(table: &CsvTable) -> Result<Self> {
        let meta = |k: &str| {
            table
                .meta
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("missing `{k}` header")))
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let dim: usize = meta("d")?.parse().map_err(|_| Error::Parse("bad `d`".into()))?;
        let cells: usize = meta("cells")?.parse().map_err(|_| Error::Parse("bad `cells`".into()))?;
        let side = num(meta("side")?)?;
        let mut lower = [0.0; MAX_DIM];
        for (a, s) in meta("lower")?.split_whitespace().enumerate().take(dim) {
            lower[a] = num(s)?;
        }
        let domain = match meta("geometry")? {
            "torus" => Domain::torus(dim, side)?,
            "box" => Domain::boxed(dim, lower, side)?,
            other => return Err(Error::Parse(format!("unknown geometry `{other}`"))),
        };
        let mut g = Self::zeros(domain, cells)?;
        let values = table.column("value").ok_or_else(|| Error::Parse("missing `value` column".into()))?;
        if values.len() != g.len() {
            return Err(Error::Parse(format!("expected {} rows, found {}", g.len(), values.len())));
        }
        for (v, s) in g.values.iter_mut().zip(values) {
            *v = num(s)?;
        }
        g.zero_boundary = meta("zero_boundary")? == "true";
        Ok(g)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_csv().write_to(&mut f)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&CsvTable::parse(&std::fs::read_to_string(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_bilinear() {
        let d = Domain::centered_box(2, 3.0).unwrap();
        let f = |x: &Point| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let g = GridFunction::from_fn(d, 6, f).unwrap();
        for x in [[0.1, 0.2], [-1.4, 1.3], [0.77, -0.31]] {
            assert!((g.value_at(&x) - f(&x)).abs() < 1e-12);
            let grad = g.gradient_at(&x);
            assert!((grad[0] - (2.0 + 0.5 * x[1])).abs() < 1e-12);
            assert!((grad[1] - (-1.0 + 0.5 * x[0])).abs() < 1e-12);
        }
        assert_eq!(g.value_at(&[2.0, 0.0]), 0.0);
    }

    #[test]
    fn torus_wraps() {
        let d = Domain::torus(1, 9.0).unwrap();
        let g = GridFunction::from_fn(d, 18, |x| (2.0 * std::f64::consts::PI * x[0] / 9.0).cos()).unwrap();
        assert!((g.value_at(&[0.25, 0.0]) - g.value_at(&[9.25, 0.0])).abs() < 1e-12);
        assert!(g.integral().abs() < 1e-12);
        assert!((g.l2_norm().powi(2) - 4.5).abs() < 1e-9);
    }

    #[test]
    fn gradient_norm_matches_quadrature() {
        let d = Domain::centered_box(2, 2.0).unwrap();
        let g = GridFunction::from_fn(d, 4, |x| x[0] * x[1]).unwrap();
        // bilinear: |grad|^2 = x^2 + y^2, integral over (-1,1)^2 is 8/3
        assert!((g.gradient_l2().powi(2) - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let d = Domain::cube(1, 2).unwrap();
        let g = GridFunction::from_fn(d, 6, |x| x[0] - 0.3 * x[1]).unwrap().with_zero_boundary();
        let back = GridFunction::from_csv(&CsvTable::parse(&g.to_csv().to_string_lossy())).unwrap();
        assert_eq!(g, back);
        let c = g.coarsened().unwrap();
        assert_eq!(c.cells, 3);
        assert_eq!(c.value_at(&[0.5, 0.5]), g.value_at(&[0.5, 0.5]));
    }
}
