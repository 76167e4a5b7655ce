//! Initial pressure `q0`, the initial acceleration `u1` and the residuals of the
//! boundary compatibility conditions.
//!
//! `q0` lives at cell centers and solves the seven point problem
//! `Delta q0 = -grad u0 : grad u0^T + div F` with a homogeneous Neumann wall at the bottom
//! and the Dirichlet value `nu 2 d_z u0^z + sigma L(h0) + kappa Delta_0^2 u0 . N` on the
//! shell face, imposed through the ghost `2b - q`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{shape_check, Error, Result};
use crate::geometry::ReferenceSurface;
use crate::grid::Grid3;
use crate::mat::{M3, V3};
use crate::regularization::boundary_biharmonic;
use crate::shell::{shell_operator_l, ShellParams};
use crate::spectral::Fft2;

use super::fem::cell_gradient;

/// Symbol of the five point Laplacian in the horizontal directions.
fn horizontal_symbol(g: &Grid3, i: usize, j: usize) -> f64 {
    let h = g.h();
    let s1 = (PI * i as f64 / g.n1 as f64).sin();
    let s2 = (PI * j as f64 / g.n2 as f64).sin();
    -4.0 * s1 * s1 / (h[0] * h[0]) - 4.0 * s2 * s2 / (h[1] * h[1])
}

/// Seven point Laplacian of a cell field with the wall and face conditions.
pub fn cell_laplacian(g: &Grid3, q: &[f64], top: &[f64]) -> Vec<f64> {
    let h = g.h();
    let (n1, n2, n3) = (g.n1, g.n2, g.n3);
    let at = |i: usize, j: usize, k: usize| q[g.cell(i, j, k)];
    let mut out = vec![0.0; q.len()];
    for k in 0..n3 {
        for i in 0..n1 {
            for j in 0..n2 {
                let c = at(i, j, k);
                let xx = (at((i + 1) % n1, j, k) - 2.0 * c + at((i + n1 - 1) % n1, j, k)) / (h[0] * h[0]);
                let yy = (at(i, (j + 1) % n2, k) - 2.0 * c + at(i, (j + n2 - 1) % n2, k)) / (h[1] * h[1]);
                let below = if k == 0 { c } else { at(i, j, k - 1) };
                let above = if k + 1 == n3 { 2.0 * top[i * n2 + j] - c } else { at(i, j, k + 1) };
                out[g.cell(i, j, k)] = xx + yy + (above - 2.0 * c + below) / (h[2] * h[2]);
            }
        }
    }
    out
}

/// Solves `cell_laplacian(q, top) = rhs` by FFT in `y` and a tridiagonal sweep in `z`.
pub fn solve_pressure(g: &Grid3, rhs: &[f64], top: &[f64]) -> Result<Vec<f64>> {
    shape_check("pressure source", rhs.len(), g.cells())?;
    shape_check("pressure face value", top.len(), g.layer())?;
    let fft = Fft2::new(g.surface());
    let (n3, layer) = (g.n3, g.layer());
    let hz2 = g.h()[2] * g.h()[2];
    let mut r: Vec<Vec<Complex64>> = (0..n3).map(|k| fft.forward(&rhs[k * layer..(k + 1) * layer])).collect();
    let bt = fft.forward(top);
    for (m, b) in bt.iter().enumerate() {
        r[n3 - 1][m] -= 2.0 * b / hz2;
    }
    let mut out = vec![vec![Complex64::new(0.0, 0.0); layer]; n3];
    let off = 1.0 / hz2;
    let mut cp = vec![Complex64::new(0.0, 0.0); n3];
    let mut dp = vec![Complex64::new(0.0, 0.0); n3];
    for i in 0..g.n1 {
        for j in 0..g.n2 {
            let m = i * g.n2 + j;
            let lam = horizontal_symbol(g, i, j);
            let diag = |k: usize| {
                let mut d = -2.0 / hz2 + lam;
                if k == 0 {
                    d += 1.0 / hz2;
                }
                if k + 1 == n3 {
                    d -= 1.0 / hz2;
                }
                d
            };
            let mut den = diag(0);
            cp[0] = Complex64::new(off / den, 0.0);
            dp[0] = r[0][m] / den;
            for k in 1..n3 {
                den = diag(k) - off * cp[k - 1].re;
                if den == 0.0 {
                    return Err(Error::Solver("singular pressure mode".into()));
                }
                cp[k] = Complex64::new(off / den, 0.0);
                dp[k] = (r[k][m] - off * dp[k - 1]) / den;
            }
            out[n3 - 1][m] = dp[n3 - 1];
            for k in (0..n3 - 1).rev() {
                out[k][m] = dp[k] - cp[k] * out[k + 1][m];
            }
        }
    }
    Ok(out.into_iter().flat_map(|s| fft.inverse(s)).collect())
}

/// `G[i][k] = d_k u^i` at a node: central in the periodic directions, second order
/// one sided at the walls.
pub fn node_gradient(g: &Grid3, u: &[V3], n: usize) -> M3 {
    let (i, j, k) = g.node_ijk(n);
    let h = g.h();
    let (n1, n2, n3) = (g.n1, g.n2, g.n3);
    let at = |i: usize, j: usize, k: usize| u[g.node(i, j, k)];
    let dx = |a: V3, b: V3, s: f64| -> V3 { std::array::from_fn(|c| (a[c] - b[c]) / s) };
    let gx = dx(at((i + 1) % n1, j, k), at((i + n1 - 1) % n1, j, k), 2.0 * h[0]);
    let gy = dx(at(i, (j + 1) % n2, k), at(i, (j + n2 - 1) % n2, k), 2.0 * h[1]);
    let gz: V3 = if k == 0 {
        let (a, b, c) = (at(i, j, 0), at(i, j, 1), at(i, j, 2));
        std::array::from_fn(|m| (3.0 * (b[m] - a[m]) - (c[m] - b[m])) / (2.0 * h[2]))
    } else if k == n3 {
        let (a, b, c) = (at(i, j, n3), at(i, j, n3 - 1), at(i, j, n3 - 2));
        std::array::from_fn(|m| (3.0 * (a[m] - b[m]) - (b[m] - c[m])) / (2.0 * h[2]))
    } else {
        dx(at(i, j, k + 1), at(i, j, k - 1), 2.0 * h[2])
    };
    std::array::from_fn(|c| [gx[c], gy[c], gz[c]])
}

/// Nodal seven point Laplacian, second order one sided in `z` at the walls.
fn node_laplacian(g: &Grid3, u: &[V3], n: usize) -> V3 {
    let (i, j, k) = g.node_ijk(n);
    let h = g.h();
    let (n1, n2, n3) = (g.n1, g.n2, g.n3);
    let at = |i: usize, j: usize, k: usize| u[g.node(i, j, k)];
    let c = at(i, j, k);
    let (xp, xm) = (at((i + 1) % n1, j, k), at((i + n1 - 1) % n1, j, k));
    let (yp, ym) = (at(i, (j + 1) % n2, k), at(i, (j + n2 - 1) % n2, k));
    std::array::from_fn(|m| {
        // written in differences so that z independent fields give exactly zero
        let wall = |s: isize| {
            let z = |o: isize| at(i, j, (k as isize + s * o) as usize)[m];
            2.0 * (z(0) - z(1)) - 3.0 * (z(1) - z(2)) + (z(2) - z(3))
        };
        let zz = if k == 0 {
            wall(1)
        } else if k == n3 {
            wall(-1)
        } else {
            (at(i, j, k + 1)[m] - c[m]) - (c[m] - at(i, j, k - 1)[m])
        };
        (xp[m] - 2.0 * c[m] + xm[m]) / (h[0] * h[0]) + (yp[m] - 2.0 * c[m] + ym[m]) / (h[1] * h[1]) + zz / (h[2] * h[2])
    })
}

/// Gradient of a cell field at the nodes, averaged over the four adjacent differences.
fn pressure_gradient(g: &Grid3, q: &[f64], top: &[f64]) -> Vec<V3> {
    let h = g.h();
    let (n1, n2, n3) = (g.n1, g.n2, g.n3);
    let cq = |i: usize, j: usize, k: isize| -> f64 {
        if k < 0 {
            q[g.cell(i, j, 0)]
        } else if k as usize >= n3 {
            2.0 * top[i * n2 + j] - q[g.cell(i, j, n3 - 1)]
        } else {
            q[g.cell(i, j, k as usize)]
        }
    };
    (0..g.nodes())
        .map(|n| {
            let (i, j, k) = g.node_ijk(n);
            let im = (i + n1 - 1) % n1;
            let jm = (j + n2 - 1) % n2;
            let k = k as isize;
            let mut out = [0.0; 3];
            for a in [im, i] {
                for b in [jm, j] {
                    out[2] += (cq(a, b, k) - cq(a, b, k - 1)) / (4.0 * h[2]);
                }
            }
            for b in [jm, j] {
                for c in [k - 1, k] {
                    out[0] += (cq(i, b, c) - cq(im, b, c)) / (4.0 * h[0]);
                }
            }
            for a in [im, i] {
                for c in [k - 1, k] {
                    out[1] += (cq(a, j, c) - cq(a, jm, c)) / (4.0 * h[1]);
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Compatibility {
    /// Cell centered initial pressure.
    pub q0: Vec<f64>,
    /// Dirichlet value on the shell face, per surface node.
    pub boundary: Vec<f64>,
    pub u1: Vec<V3>,
    /// Relative residual of the discrete elliptic problem.
    pub elliptic_residual: f64,
    /// The three terms of `CP` at the top nodes.
    pub cp_terms: [Vec<V3>; 3],
    /// `[Def u0 N]_tan` at the top nodes.
    pub def_tan: Vec<[f64; 2]>,
}

impl Compatibility {
    pub fn cp_max(&self) -> f64 {
        let n = self.cp_terms[0].len();
        (0..n).map(|k| (0..3).map(|c| (self.cp_terms[0][k][c] + self.cp_terms[1][k][c] + self.cp_terms[2][k][c]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max)
    }

    pub fn def_tan_max(&self) -> f64 {
        self.def_tan.iter().map(|d| d[0].abs().max(d[1].abs())).fold(0.0, f64::max)
    }
}

/// Initial pressure, acceleration and compatibility residuals for data `(u0, F, h0)`.
#[allow(clippy::too_many_arguments)]
pub fn compatibility_initial(
    g: &Grid3,
    surface: &ReferenceSurface,
    u0: &[V3],
    force: &[V3],
    h0: &[f64],
    nu: f64,
    kappa: f64,
    shell: &ShellParams,
) -> Result<Compatibility> {
    shape_check("u0", u0.len(), g.nodes())?;
    shape_check("forcing", force.len(), g.nodes())?;
    if !surface.is_flat() {
        return Err(Error::Domain("the fluid slab needs a flat reference surface".into()));
    }
    let rhs: Vec<f64> = (0..g.cells())
        .map(|c| {
            let gu = cell_gradient(g, u0, c);
            let gf = cell_gradient(g, force, c);
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += gu[i][j] * gu[j][i];
                }
            }
            -s + gf[0][0] + gf[1][1] + gf[2][2]
        })
        .collect();
    let top = g.top_offset();
    let l = shell_operator_l(surface, h0, shell)?;
    let uz: Vec<f64> = (0..g.layer()).map(|m| u0[top + m][2]).collect();
    let bih = boundary_biharmonic(surface, &uz, kappa)?;
    let boundary: Vec<f64> = (0..g.layer()).map(|m| 2.0 * nu * node_gradient(g, u0, top + m)[2][2] + shell.sigma * l[m] + bih[m]).collect();
    let face: Vec<f64> = (0..g.n1)
        .flat_map(|i| {
            let b = &boundary;
            (0..g.n2).map(move |j| {
                let i1 = (i + 1) % g.n1;
                let j1 = (j + 1) % g.n2;
                0.25 * (b[i * g.n2 + j] + b[i1 * g.n2 + j] + b[i * g.n2 + j1] + b[i1 * g.n2 + j1])
            })
        })
        .collect();
    let q0 = solve_pressure(g, &rhs, &face)?;
    let lq = cell_laplacian(g, &q0, &face);
    let scale = rhs.iter().chain(&face).map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let elliptic_residual = lq.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    let gq = pressure_gradient(g, &q0, &face);
    let u1: Vec<V3> = (0..g.nodes())
        .map(|n| {
            let lap = node_laplacian(g, u0, n);
            std::array::from_fn(|c| nu * lap[c] - gq[n][c] + force[n][c])
        })
        .collect();
    let mut cp_terms = [vec![[0.0; 3]; g.layer()], vec![[0.0; 3]; g.layer()], vec![[0.0; 3]; g.layer()]];
    let mut def_tan = vec![[0.0; 2]; g.layer()];
    for m in 0..g.layer() {
        let n = top + m;
        let g0 = node_gradient(g, u0, n);
        let g1 = node_gradient(g, &u1, n);
        let q = boundary[m];
        let stress: M3 = std::array::from_fn(|i| std::array::from_fn(|j| nu * (g0[i][j] + g0[j][i]) - if i == j { q } else { 0.0 }));
        let p: M3 = std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| g0[i][k] * g0[k][j]).sum()));
        let mut t1 = [0.0; 3];
        for l in 0..3 {
            t1[l] = g0[2][l] * stress[2][2];
        }
        t1[2] += (0..3).map(|i| g0[2][i] * stress[i][2]).sum::<f64>();
        let mut t2 = [0.0; 3];
        let mut t3 = [0.0; 3];
        for l in 0..2 {
            t2[l] = nu * (g1[l][2] + g1[2][l] - p[l][2] - p[2][l]);
            t3[l] = -(0..3).map(|j| stress[l][j] * g0[2][j]).sum::<f64>();
        }
        cp_terms[0][m] = t1;
        cp_terms[1][m] = t2;
        cp_terms[2][m] = t3;
        def_tan[m] = [g0[0][2] + g0[2][0], g0[1][2] + g0[2][1]];
    }
    Ok(Compatibility { q0, boundary, u1, elliptic_residual, cp_terms, def_tan })
}
