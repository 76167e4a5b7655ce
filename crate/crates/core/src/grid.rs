use crate::error::{Error, Result};

/// Uniform periodic grid on the two dimensional torus.
///
/// Node `(i, j)` sits at `(i * h1, j * h2)` and is stored at `i * n2 + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
}

impl Grid2 {
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        if n1 < 4 || n2 < 4 {
            return Err(Error::Domain(format!("grid {n1}x{n2} is too small")));
        }
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::Domain(format!("bad period {l1} x {l2}")));
        }
        Ok(Grid2 { n1, n2, l1, l2 })
    }

    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h1(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    /// Area of one grid cell, the quadrature weight of the periodic trapezoid rule.
    pub fn cell_area(&self) -> f64 {
        self.h1() * self.h2()
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// Index with periodic wrap of signed offsets.
    pub fn wrap(&self, i: isize, j: isize) -> usize {
        let a = i.rem_euclid(self.n1 as isize) as usize;
        let b = j.rem_euclid(self.n2 as isize) as usize;
        a * self.n2 + b
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k / self.n2, k % self.n2);
        [i as f64 * self.h1(), j as f64 * self.h2()]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                f(p[0], p[1])
            })
            .collect()
    }

    /// Trapezoid (spectrally accurate) integral of a grid field.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_area()
    }

    pub fn check(&self, what: &str, f: &[f64]) -> Result<()> {
        crate::error::shape_check(what, f.len(), self.len())
    }
}

/// Node grid of the slab `T^2 x (0, depth)`: periodic in x and y, `n3` cells in z.
///
/// Node `(i, j, k)` has `k = 0` on the bottom wall and `k = n3` on the shell;
/// it is stored at `(k * n1 + i) * n2 + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub l1: f64,
    pub l2: f64,
    pub depth: f64,
}

impl Grid3 {
    pub fn new(n1: usize, n2: usize, n3: usize, l1: f64, l2: f64, depth: f64) -> Result<Self> {
        if n1 < 4 || n2 < 4 || n3 < 2 {
            return Err(Error::Domain(format!("grid {n1}x{n2}x{n3} is too small")));
        }
        if !(l1 > 0.0 && l2 > 0.0 && depth > 0.0) {
            return Err(Error::Domain("non-positive box size".into()));
        }
        Ok(Grid3 { n1, n2, n3, l1, l2, depth })
    }

    pub fn surface(&self) -> Grid2 {
        Grid2 { n1: self.n1, n2: self.n2, l1: self.l1, l2: self.l2 }
    }

    pub fn layer(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn nodes(&self) -> usize {
        self.layer() * (self.n3 + 1)
    }

    pub fn cells(&self) -> usize {
        self.layer() * self.n3
    }

    pub fn h(&self) -> [f64; 3] {
        [self.l1 / self.n1 as f64, self.l2 / self.n2 as f64, self.depth / self.n3 as f64]
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.h();
        h[0] * h[1] * h[2]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n1 + i) * self.n2 + j
    }

    pub fn node_ijk(&self, n: usize) -> (usize, usize, usize) {
        let k = n / self.layer();
        let r = n % self.layer();
        (r / self.n2, r % self.n2, k)
    }

    pub fn node_point(&self, n: usize) -> [f64; 3] {
        let (i, j, k) = self.node_ijk(n);
        let h = self.h();
        [i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]
    }

    /// Index of the first node of the top (shell) layer.
    pub fn top_offset(&self) -> usize {
        self.n3 * self.layer()
    }

    /// Cell `(i, j, k)` spans nodes `i..=i+1` (wrapped), `j..=j+1`, `k..=k+1`.
    pub fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n1 + i) * self.n2 + j
    }

    pub fn cell_ijk(&self, c: usize) -> (usize, usize, usize) {
        let k = c / self.layer();
        let r = c % self.layer();
        (r / self.n2, r % self.n2, k)
    }

    /// The eight corner nodes of a cell, ordered by local index `a = 4 dx + 2 dy + dz`.
    pub fn cell_nodes(&self, c: usize) -> [usize; 8] {
        let (i, j, k) = self.cell_ijk(c);
        let i1 = (i + 1) % self.n1;
        let j1 = (j + 1) % self.n2;
        [
            self.node(i, j, k),
            self.node(i, j, k + 1),
            self.node(i, j1, k),
            self.node(i, j1, k + 1),
            self.node(i1, j, k),
            self.node(i1, j, k + 1),
            self.node(i1, j1, k),
            self.node(i1, j1, k + 1),
        ]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 3] {
        let (i, j, k) = self.cell_ijk(c);
        let h = self.h();
        [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1], (k as f64 + 0.5) * h[2]]
    }
}
