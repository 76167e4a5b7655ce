//! FFT helpers on the periodic grid: derivatives, Fourier multipliers,
//! Sobolev norms and trigonometric interpolation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid2;

#[derive(Clone)]
pub struct Fft2 {
    grid: Grid2,
    f1: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.grid.n1, self.grid.n2)
    }
}

/// Signed mode number of FFT index `i` on `n` points.
pub fn mode(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn is_nyquist(i: usize, n: usize) -> bool {
    n.is_multiple_of(2) && i == n / 2
}

impl Fft2 {
    pub fn new(grid: Grid2) -> Self {
        let mut p = FftPlanner::new();
        Fft2 { grid, f1: p.plan_fft_forward(grid.n1), i1: p.plan_fft_inverse(grid.n1), f2: p.plan_fft_forward(grid.n2), i2: p.plan_fft_inverse(grid.n2) }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    /// Wavenumbers `(k1, k2)` of spectral index `(i, j)`.
    pub fn k(&self, i: usize, j: usize) -> (f64, f64) {
        (2.0 * PI / self.grid.l1 * mode(i, self.grid.n1) as f64, 2.0 * PI / self.grid.l2 * mode(j, self.grid.n2) as f64)
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let (p1, p2) = if forward { (&self.f1, &self.f2) } else { (&self.i1, &self.i2) };
        for row in data.chunks_exact_mut(n2) {
            p2.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = data[i * n2 + j];
            }
            p1.process(&mut col);
            for i in 0..n1 {
                data[i * n2 + j] = col[i];
            }
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut d, true);
        d
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse(&self, mut d: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut d, false);
        let s = 1.0 / self.grid.len() as f64;
        d.iter().map(|c| c.re * s).collect()
    }

    /// Applies the Fourier multiplier `sym(k1, k2, nyq1, nyq2)`.
    pub fn multiply(&self, f: &[f64], sym: impl Fn(f64, f64, bool, bool) -> Complex64) -> Vec<f64> {
        let mut d = self.forward(f);
        self.multiply_spectrum(&mut d, sym);
        self.inverse(d)
    }

    pub fn multiply_spectrum(&self, d: &mut [Complex64], sym: impl Fn(f64, f64, bool, bool) -> Complex64) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let (k1, k2) = self.k(i, j);
                d[i * n2 + j] *= sym(k1, k2, is_nyquist(i, n1), is_nyquist(j, n2));
            }
        }
    }

    /// Spectral derivative `d1^a d2^b f`. Every nonzero order drops the Nyquist mode,
    /// so products of derivative operators compose exactly.
    pub fn deriv(&self, f: &[f64], a: u32, b: u32) -> Vec<f64> {
        if a == 0 && b == 0 {
            return f.to_vec();
        }
        self.multiply(f, |k1, k2, n1, n2| deriv_symbol(k1, k2, n1, n2, a, b))
    }

    /// Several derivatives of the same field from one forward transform.
    pub fn derivs(&self, f: &[f64], orders: &[(u32, u32)]) -> Vec<Vec<f64>> {
        let hat = self.forward(f);
        orders
            .iter()
            .map(|&(a, b)| {
                if a == 0 && b == 0 {
                    return f.to_vec();
                }
                let mut d = hat.clone();
                self.multiply_spectrum(&mut d, |k1, k2, n1, n2| deriv_symbol(k1, k2, n1, n2, a, b));
                self.inverse(d)
            })
            .collect()
    }

    /// `H^s` norm with weight `(1 + |k|^2)^s`; `s = 0` is the `L^2` norm.
    pub fn sobolev_norm(&self, f: &[f64], s: f64) -> f64 {
        let hat = self.forward(f);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let mut acc = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let (k1, k2) = self.k(i, j);
                acc += (1.0 + k1 * k1 + k2 * k2).powf(s) * hat[i * n2 + j].norm_sqr();
            }
        }
        let n = self.grid.len() as f64;
        (acc * self.grid.l1 * self.grid.l2 / (n * n)).sqrt()
    }

    /// Homogeneous seminorm with weight `|k|^(2s)`.
    pub fn sobolev_seminorm(&self, f: &[f64], s: f64) -> f64 {
        let hat = self.forward(f);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let mut acc = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let (k1, k2) = self.k(i, j);
                let k2s = k1 * k1 + k2 * k2;
                if k2s > 0.0 {
                    acc += k2s.powf(s) * hat[i * n2 + j].norm_sqr();
                }
            }
        }
        let n = self.grid.len() as f64;
        (acc * self.grid.l1 * self.grid.l2 / (n * n)).sqrt()
    }
}

pub fn deriv_symbol(k1: f64, k2: f64, nyq1: bool, nyq2: bool, a: u32, b: u32) -> Complex64 {
    if (nyq1 && a > 0) || (nyq2 && b > 0) {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, k1).powu(a) * Complex64::new(0.0, k2).powu(b)
}

/// Trigonometric interpolant of a grid field, evaluable with derivatives anywhere.
#[derive(Debug, Clone)]
pub struct TrigInterp {
    grid: Grid2,
    modes: Vec<(usize, usize, Complex64)>,
}

impl TrigInterp {
    /// Coefficients below `1e-15` of the largest one are dropped.
    pub fn new(fft: &Fft2, f: &[f64]) -> Self {
        let grid = *fft.grid();
        let hat = fft.forward(f);
        let n = grid.len() as f64;
        let cmax = hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let cut = cmax * 1e-15;
        let mut modes = Vec::new();
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let c = hat[i * grid.n2 + j];
                if c.norm() > cut {
                    modes.push((i, j, c / n));
                }
            }
        }
        TrigInterp { grid, modes }
    }

    fn basis(n: usize, l: f64, x: f64, order: u32) -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let k = 2.0 * PI / l * mode(i, n) as f64;
                if is_nyquist(i, n) {
                    if order > 0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new((k * x).cos(), 0.0)
                    }
                } else {
                    Complex64::new(0.0, k).powu(order) * Complex64::from_polar(1.0, k * x)
                }
            })
            .collect()
    }

    /// `d1^a d2^b` of the interpolant at `p`.
    pub fn eval(&self, p: [f64; 2], a: u32, b: u32) -> f64 {
        let e1 = Self::basis(self.grid.n1, self.grid.l1, p[0], a);
        let e2 = Self::basis(self.grid.n2, self.grid.l2, p[1], b);
        self.modes.iter().map(|&(i, j, c)| (c * e1[i] * e2[j]).re).sum()
    }

    /// Several derivative orders at one point, sharing the basis tables.
    pub fn eval_many(&self, p: [f64; 2], orders: &[(u32, u32)]) -> Vec<f64> {
        let maxo = orders.iter().map(|o| o.0.max(o.1)).max().unwrap_or(0);
        let t1: Vec<_> = (0..=maxo).map(|o| Self::basis(self.grid.n1, self.grid.l1, p[0], o)).collect();
        let t2: Vec<_> = (0..=maxo).map(|o| Self::basis(self.grid.n2, self.grid.l2, p[1], o)).collect();
        orders
            .iter()
            .map(|&(a, b)| {
                let (e1, e2) = (&t1[a as usize], &t2[b as usize]);
                self.modes.iter().map(|&(i, j, c)| (c * e1[i] * e2[j]).re).sum()
            })
            .collect()
    }
}
