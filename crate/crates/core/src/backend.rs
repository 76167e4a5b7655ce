//! Derivatives of periodic grid fields, by centered finite differences or FFT.

use serde::{Deserialize, Serialize};

use crate::grid::Grid2;
use crate::spectral::Fft2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Second order centered stencils.
    FiniteDifference,
    #[default]
    Spectral,
}

/// Applies derivatives on a fixed grid with a fixed backend.
#[derive(Debug, Clone)]
pub struct Diff {
    grid: Grid2,
    backend: Backend,
    fft: Fft2,
}

// Centered stencils, offsets -2..=2, before division by h^order.
const STENCILS: [[f64; 5]; 5] =
    [[0.0, 0.0, 1.0, 0.0, 0.0], [0.0, -0.5, 0.0, 0.5, 0.0], [0.0, 1.0, -2.0, 1.0, 0.0], [-0.5, 1.0, 0.0, -1.0, 0.5], [1.0, -4.0, 6.0, -4.0, 1.0]];

impl Diff {
    pub fn new(grid: Grid2, backend: Backend) -> Self {
        Diff { grid, backend, fft: Fft2::new(grid) }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    fn fd_1d(&self, f: &[f64], order: u32, dir: usize) -> Vec<f64> {
        if order == 0 {
            return f.to_vec();
        }
        let g = &self.grid;
        let h = if dir == 0 { g.h1() } else { g.h2() };
        let st = &STENCILS[order as usize];
        let scale = h.powi(-(order as i32));
        let mut out = vec![0.0; f.len()];
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let mut acc = 0.0;
                for (m, &c) in st.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let o = m as isize - 2;
                    let k = if dir == 0 { g.wrap(i as isize + o, j as isize) } else { g.wrap(i as isize, j as isize + o) };
                    acc += c * f[k];
                }
                out[g.idx(i, j)] = acc * scale;
            }
        }
        out
    }

    /// `d1^a d2^b f`, `a + b <= 4`.
    pub fn d(&self, f: &[f64], a: u32, b: u32) -> Vec<f64> {
        assert!(a <= 4 && b <= 4, "derivative order too high");
        match self.backend {
            Backend::Spectral => self.fft.deriv(f, a, b),
            Backend::FiniteDifference => {
                let t = self.fd_1d(f, a, 0);
                self.fd_1d(&t, b, 1)
            }
        }
    }

    pub fn many(&self, f: &[f64], orders: &[(u32, u32)]) -> Vec<Vec<f64>> {
        match self.backend {
            Backend::Spectral => self.fft.derivs(f, orders),
            Backend::FiniteDifference => orders.iter().map(|&(a, b)| self.d(f, a, b)).collect(),
        }
    }

    /// First derivative along `dir`; antisymmetric for both backends.
    pub fn d1(&self, f: &[f64], dir: usize) -> Vec<f64> {
        if dir == 0 {
            self.d(f, 1, 0)
        } else {
            self.d(f, 0, 1)
        }
    }

    pub fn gradient(&self, f: &[f64]) -> [Vec<f64>; 2] {
        [self.d(f, 1, 0), self.d(f, 0, 1)]
    }
}

/// All multi-indices `(a, b)` with `a + b <= deg`, ordered by total degree.
pub fn multi_indices(deg: u32) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    for t in 0..=deg {
        for a in (0..=t).rev() {
            v.push((a, t - a));
        }
    }
    v
}
