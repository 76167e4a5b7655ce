//! Trilinear elements on the slab: reference integrals, the 27 point block operator
//! for the viscous and penalty terms, and the cell divergence.
//!
//! Unknowns are the velocities of nodes with `k >= 1`; the bottom wall is no-slip.
//! Unknown `u` of node `(i, j, k)` is `node - layer`, three components each.

use crate::grid::Grid3;
use crate::mat::M3;

/// Gradients of the eight shape functions at a point of the unit cell, scaled by `1/h`.
fn shape_grad(h: [f64; 3], xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, ga) in g.iter_mut().enumerate() {
        let d = [(a >> 2) & 1, (a >> 1) & 1, a & 1];
        let f = |c: usize| if d[c] == 1 { xi[c] } else { 1.0 - xi[c] };
        let s = |c: usize| if d[c] == 1 { 1.0 } else { -1.0 };
        ga[0] = s(0) * f(1) * f(2) / h[0];
        ga[1] = f(0) * s(1) * f(2) / h[1];
        ga[2] = f(0) * f(1) * s(2) / h[2];
    }
    g
}

/// Reference integrals of one cell.
#[derive(Debug, Clone)]
pub struct Element {
    /// `gkl[k][l][a][b] = int d_k N_a d_l N_b`.
    pub gkl: [[[[f64; 8]; 8]; 3]; 3],
    /// Shape gradients at the center.
    pub center: [[f64; 3]; 8],
    pub volume: f64,
}

impl Element {
    pub fn new(h: [f64; 3]) -> Self {
        let volume = h[0] * h[1] * h[2];
        let q = 0.5 / 3f64.sqrt();
        let mut gkl = [[[[0.0; 8]; 8]; 3]; 3];
        for gp in 0..8 {
            let xi = [0.5 + if gp & 4 != 0 { q } else { -q }, 0.5 + if gp & 2 != 0 { q } else { -q }, 0.5 + if gp & 1 != 0 { q } else { -q }];
            let g = shape_grad(h, xi);
            for k in 0..3 {
                for l in 0..3 {
                    for a in 0..8 {
                        for b in 0..8 {
                            gkl[k][l][a][b] += volume / 8.0 * g[a][k] * g[b][l];
                        }
                    }
                }
            }
        }
        Element { gkl, center: shape_grad(h, [0.5; 3]), volume }
    }

    /// `beta[a][m] = sum_k a^k_m d_k N_a` at the center.
    pub fn beta(&self, a: &M3) -> [[f64; 3]; 8] {
        let mut b = [[0.0; 3]; 8];
        for (n, bn) in b.iter_mut().enumerate() {
            for m in 0..3 {
                bn[m] = (0..3).map(|k| a[k][m] * self.center[n][k]).sum();
            }
        }
        b
    }

    /// Element matrix `[a*3+m][b*3+n]` of `nu/2 int D(v):D(phi) + theta^-1 |cell| div v div phi`.
    pub fn matrix(&self, a: &M3, nu: f64, inv_theta: f64) -> [[f64; 24]; 24] {
        let mut c = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                c[k][l] = (0..3).map(|i| a[k][i] * a[l][i]).sum();
            }
        }
        let mut coef = [[[[0.0; 3]; 3]; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                for m in 0..3 {
                    for n in 0..3 {
                        coef[k][l][m][n] = nu * (if m == n { c[k][l] } else { 0.0 } + a[k][n] * a[l][m]);
                    }
                }
            }
        }
        let be = self.beta(a);
        let s = inv_theta * self.volume;
        let mut ke = [[0.0; 24]; 24];
        for aa in 0..8 {
            for bb in aa..8 {
                let mut blk = [[0.0; 3]; 3];
                for k in 0..3 {
                    for l in 0..3 {
                        let w = self.gkl[k][l][aa][bb];
                        for m in 0..3 {
                            for n in 0..3 {
                                blk[m][n] += coef[k][l][m][n] * w;
                            }
                        }
                    }
                }
                for m in 0..3 {
                    for n in 0..3 {
                        let v = blk[m][n] + s * be[aa][m] * be[bb][n];
                        ke[aa * 3 + m][bb * 3 + n] = v;
                        ke[bb * 3 + n][aa * 3 + m] = v;
                    }
                }
            }
        }
        ke
    }
}

/// Symmetric operator on the unknown nodes stored as 27 blocks of 3x3 per node.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    grid: Grid3,
    blocks: Vec<[f64; 9]>,
}

fn offset_index(di: isize, dj: isize, dk: isize) -> usize {
    ((di + 1) * 9 + (dj + 1) * 3 + (dk + 1)) as usize
}

fn wrap_delta(d: isize, n: usize) -> isize {
    let n = n as isize;
    let r = d.rem_euclid(n);
    if r > n / 2 {
        r - n
    } else {
        r
    }
}

impl BlockOperator {
    pub fn zeros(grid: &Grid3) -> Self {
        BlockOperator { grid: *grid, blocks: vec![[0.0; 9]; unknown_nodes(grid) * 27] }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    /// Adds the element matrices `ke(c)` of every cell.
    pub fn assemble(grid: &Grid3, mut ke: impl FnMut(usize) -> [[f64; 24]; 24]) -> Self {
        let mut op = Self::zeros(grid);
        let layer = grid.layer() as isize;
        for c in 0..grid.cells() {
            let nodes = grid.cell_nodes(c);
            let m = ke(c);
            for (a, &na) in nodes.iter().enumerate() {
                if (na as isize) < layer {
                    continue;
                }
                let (ia, ja, ka) = grid.node_ijk(na);
                let row = na - grid.layer();
                for (b, &nb) in nodes.iter().enumerate() {
                    if (nb as isize) < layer {
                        continue;
                    }
                    let (ib, jb, kb) = grid.node_ijk(nb);
                    let o =
                        offset_index(wrap_delta(ib as isize - ia as isize, grid.n1), wrap_delta(jb as isize - ja as isize, grid.n2), kb as isize - ka as isize);
                    let blk = &mut op.blocks[row * 27 + o];
                    for mm in 0..3 {
                        for nn in 0..3 {
                            blk[mm * 3 + nn] += m[a * 3 + mm][b * 3 + nn];
                        }
                    }
                }
            }
        }
        op
    }

    /// Adds `d[u]` to the diagonal of node `u` for all three components.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        let o = offset_index(0, 0, 0);
        for (u, &v) in d.iter().enumerate() {
            let b = &mut self.blocks[u * 27 + o];
            b[0] += v;
            b[4] += v;
            b[8] += v;
        }
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let (n1, n2, n3) = (g.n1, g.n2, g.n3);
        for k in 1..=n3 {
            for i in 0..n1 {
                for j in 0..n2 {
                    let u = g.node(i, j, k) - g.layer();
                    let mut acc = [0.0; 3];
                    for dk in -1isize..=1 {
                        let kk = k as isize + dk;
                        if kk < 1 || kk > n3 as isize {
                            continue;
                        }
                        for di in -1isize..=1 {
                            let ii = (i as isize + di).rem_euclid(n1 as isize) as usize;
                            for dj in -1isize..=1 {
                                let jj = (j as isize + dj).rem_euclid(n2 as isize) as usize;
                                let b = &self.blocks[u * 27 + offset_index(di, dj, dk)];
                                let v = (g.node(ii, jj, kk as usize) - g.layer()) * 3;
                                for m in 0..3 {
                                    acc[m] += b[m * 3] * x[v] + b[m * 3 + 1] * x[v + 1] + b[m * 3 + 2] * x[v + 2];
                                }
                            }
                        }
                    }
                    y[u * 3..u * 3 + 3].copy_from_slice(&acc);
                }
            }
        }
    }
}

/// `G[i][k] = d_k u^i` at a cell center as the mean of the four edge differences per
/// direction; equal to the trilinear gradient, and exactly zero along constant directions.
pub fn cell_gradient(g: &Grid3, u: &[[f64; 3]], c: usize) -> M3 {
    let n = g.cell_nodes(c);
    let h = g.h();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for (dir, step) in [4usize, 2, 1].into_iter().enumerate() {
            let mut s = 0.0;
            for a in (0..8).filter(|a| a & step == 0) {
                s += u[n[a + step]][i] - u[n[a]][i];
            }
            out[i][dir] = s / (4.0 * h[dir]);
        }
    }
    out
}

pub fn unknown_nodes(g: &Grid3) -> usize {
    g.layer() * g.n3
}

/// Lumped mass per unknown node.
pub fn lumped_mass(g: &Grid3) -> Vec<f64> {
    let v = g.cell_volume();
    (0..unknown_nodes(g)).map(|u| if u >= g.layer() * (g.n3 - 1) { v / 2.0 } else { v }).collect()
}

/// Full nodal field (bottom layer zero) from unknowns.
pub fn expand(g: &Grid3, x: &[f64]) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; g.nodes()];
    for u in 0..unknown_nodes(g) {
        out[u + g.layer()] = [x[3 * u], x[3 * u + 1], x[3 * u + 2]];
    }
    out
}

pub fn restrict(g: &Grid3, v: &[[f64; 3]]) -> Vec<f64> {
    v[g.layer()..].iter().flat_map(|w| w.iter().copied()).collect()
}

/// `sum_a beta_am v_a^m` per cell: the discrete `a : grad v` at cell centers.
pub fn cell_divergence(g: &Grid3, el: &Element, a: &[M3], v: &[[f64; 3]]) -> Vec<f64> {
    (0..g.cells())
        .map(|c| {
            let be = el.beta(&a[c]);
            g.cell_nodes(c).iter().enumerate().map(|(n, &nd)| (0..3).map(|m| be[n][m] * v[nd][m]).sum::<f64>()).sum()
        })
        .collect()
}

/// Weak load `sum_c |c| s_c beta_am` of a cell field against the test divergence.
pub fn divergence_transpose(g: &Grid3, el: &Element, a: &[M3], s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; unknown_nodes(g) * 3];
    for c in 0..g.cells() {
        let be = el.beta(&a[c]);
        for (n, &nd) in g.cell_nodes(c).iter().enumerate() {
            if nd < g.layer() {
                continue;
            }
            let u = nd - g.layer();
            for m in 0..3 {
                out[3 * u + m] += el.volume * s[c] * be[n][m];
            }
        }
    }
    out
}
