//! Interpolation of periodic grid fields at off-grid points.

use serde::{Deserialize, Serialize};

use crate::grid::Grid2;
use crate::spectral::{Fft2, TrigInterp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Periodic cubic Lagrange on a 4x4 stencil.
    Cubic,
    Trigonometric,
}

fn lagrange(t: f64, order: u32) -> [f64; 4] {
    match order {
        0 => [-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0, -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0],
        1 => [-(3.0 * t * t - 6.0 * t + 2.0) / 6.0, (3.0 * t * t - 4.0 * t - 1.0) / 2.0, -(3.0 * t * t - 2.0 * t - 2.0) / 2.0, (3.0 * t * t - 1.0) / 6.0],
        _ => [-(t - 1.0), 3.0 * t - 2.0, -(3.0 * t - 1.0), t],
    }
}

/// Sparse weights of one interpolation (or derivative) functional.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub idx: [usize; 16],
    pub w: [f64; 16],
}

impl Stencil {
    pub fn apply(&self, f: &[f64]) -> f64 {
        self.idx.iter().zip(&self.w).map(|(&k, &w)| w * f[k]).sum()
    }
}

/// Cubic stencil for `d1^a d2^b` at `p`, `a, b <= 2`.
pub fn cubic_stencil(g: &Grid2, p: [f64; 2], a: u32, b: u32) -> Stencil {
    let (h1, h2) = (g.h1(), g.h2());
    let s1 = p[0] / h1;
    let s2 = p[1] / h2;
    let i0 = s1.floor();
    let j0 = s2.floor();
    let w1 = lagrange(s1 - i0, a);
    let w2 = lagrange(s2 - j0, b);
    let sc = h1.powi(-(a as i32)) * h2.powi(-(b as i32));
    let mut st = Stencil { idx: [0; 16], w: [0.0; 16] };
    for m in 0..4 {
        for n in 0..4 {
            st.idx[m * 4 + n] = g.wrap(i0 as isize + m as isize - 1, j0 as isize + n as isize - 1);
            st.w[m * 4 + n] = w1[m] * w2[n] * sc;
        }
    }
    st
}

/// Evaluates a grid field and derivatives at many points.
pub struct PointSampler {
    grid: Grid2,
    method: Interpolation,
    trig: Option<TrigInterp>,
    field: Vec<f64>,
}

impl PointSampler {
    pub fn new(fft: &Fft2, f: &[f64], method: Interpolation) -> Self {
        let grid = *fft.grid();
        let trig = match method {
            Interpolation::Trigonometric => Some(TrigInterp::new(fft, f)),
            Interpolation::Cubic => None,
        };
        PointSampler { grid, method, trig, field: f.to_vec() }
    }

    pub fn eval(&self, p: [f64; 2], a: u32, b: u32) -> f64 {
        match self.method {
            Interpolation::Cubic => cubic_stencil(&self.grid, p, a, b).apply(&self.field),
            Interpolation::Trigonometric => self.trig.as_ref().expect("trig table").eval(p, a, b),
        }
    }

    pub fn eval_many(&self, p: [f64; 2], orders: &[(u32, u32)]) -> Vec<f64> {
        match self.method {
            Interpolation::Cubic => orders.iter().map(|&(a, b)| self.eval(p, a, b)).collect(),
            Interpolation::Trigonometric => self.trig.as_ref().expect("trig table").eval_many(p, orders),
        }
    }

    pub fn at_points(&self, pts: &[[f64; 2]]) -> Vec<f64> {
        pts.iter().map(|&p| self.eval(p, 0, 0)).collect()
    }
}

/// Sparse linear map from grid values to values at fixed points, with its transpose.
#[derive(Debug, Clone)]
pub struct PointOperator {
    pub stencils: Vec<Stencil>,
    pub n_in: usize,
}

impl PointOperator {
    pub fn cubic(g: &Grid2, pts: &[[f64; 2]]) -> Self {
        PointOperator { stencils: pts.iter().map(|&p| cubic_stencil(g, p, 0, 0)).collect(), n_in: g.len() }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.stencils.iter().map(|s| s.apply(f)).collect()
    }

    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_in];
        for (s, &v) in self.stencils.iter().zip(r) {
            for (&k, &w) in s.idx.iter().zip(&s.w) {
                out[k] += w * v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cubic_is_exact_on_cubics_locally() {
        let g = Grid2::unit(16).unwrap();
        // a cubic in x reproduced away from the periodic seam
        let f = g.sample(|x, y| x * x * x - 0.5 * x + 2.0 * y);
        let p = [0.41, 0.52];
        let v = cubic_stencil(&g, p, 0, 0).apply(&f);
        assert!((v - (p[0].powi(3) - 0.5 * p[0] + 2.0 * p[1])).abs() < 1e-12);
        let dx = cubic_stencil(&g, p, 1, 0).apply(&f);
        assert!((dx - (3.0 * p[0] * p[0] - 0.5)).abs() < 1e-11);
    }

    #[test]
    fn cubic_converges_fourth_order() {
        let e = |n: usize| {
            let g = Grid2::unit(n).unwrap();
            let f = g.sample(|x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
            let mut m: f64 = 0.0;
            for q in 0..97 {
                let p = [0.0137 * q as f64 % 1.0, 0.0291 * q as f64 % 1.0];
                let v = cubic_stencil(&g, p, 0, 0).apply(&f);
                m = m.max((v - (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()).abs());
            }
            m
        };
        let rate = (e(32) / e(64)).log2();
        assert!(rate > 3.7, "rate {rate}");
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid2::unit(8).unwrap();
        let pts = vec![[0.1, 0.9], [0.55, 0.02], [0.99, 0.5]];
        let op = PointOperator::cubic(&g, &pts);
        let f = g.sample(|x, y| (x * 3.0).sin() + y);
        let r = vec![0.3, -1.0, 2.0];
        let lhs: f64 = op.apply(&f).iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = op.apply_transpose(&r).iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }
}
