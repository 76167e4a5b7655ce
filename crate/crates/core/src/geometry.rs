//! Reference surface charts and the tubular metric `G = G_z + dz^2` on `Gamma x (-eps, eps)`.

use serde::{Deserialize, Serialize};

use crate::backend::{multi_indices, Backend, Diff};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::jet::Jet;
use crate::mat::{self, M2, V3};

/// Christoffel symbols `gamma[k][i][j]`, index 2 is the z direction.
pub type Christoffel = [[[f64; 3]; 3]; 3];

/// One Fourier mode `c cos(k.y) + s sin(k.y)` of a graph profile, `k = 2 pi (m1/l1, m2/l2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMode {
    pub m1: i32,
    pub m2: i32,
    pub cos: f64,
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    /// The plane `z = 0` with `N = e_z`.
    Flat,
    /// The graph `X(y) = (y1, y2, w(y))` of a trigonometric profile.
    Graph(Vec<ProfileMode>),
    /// Only `(g0, C, N)` are known; there is no map into space.
    Abstract,
}

/// Embedding data at an arbitrary chart point.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: V3,
    pub dx: [V3; 2],
    pub n: V3,
    pub dn: [V3; 2],
}

/// Per node metric with cached inverse and area factor.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub values: Vec<M2>,
    pub inverse: Vec<M2>,
    pub sqrt_det: Vec<f64>,
}

impl MetricField {
    pub fn new(values: Vec<M2>) -> Result<Self> {
        let mut inverse = Vec::with_capacity(values.len());
        let mut sqrt_det = Vec::with_capacity(values.len());
        for (k, m) in values.iter().enumerate() {
            let d = mat::det2(m);
            if !(d > 0.0) || mat::min_eig2(m) <= 0.0 || (m[0][1] - m[1][0]).abs() > 1e-12 * (1.0 + m[0][1].abs()) {
                return Err(Error::Degeneracy { node: k, what: format!("metric not SPD, det {d:.3e}") });
            }
            inverse.push(mat::inv2(m).expect("positive determinant"));
            sqrt_det.push(d.sqrt());
        }
        Ok(MetricField { values, inverse, sqrt_det })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn trig_deriv(theta: f64, n: u32, cosine: bool) -> f64 {
    let phase = theta + n as f64 * std::f64::consts::FRAC_PI_2;
    if cosine {
        phase.cos()
    } else {
        phase.sin()
    }
}

fn profile_deriv(modes: &[ProfileMode], l: [f64; 2], y: [f64; 2], a: u32, b: u32) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    modes
        .iter()
        .map(|m| {
            let k1 = tau * m.m1 as f64 / l[0];
            let k2 = tau * m.m2 as f64 / l[1];
            let th = k1 * y[0] + k2 * y[1];
            let s = k1.powi(a as i32) * k2.powi(b as i32);
            s * (m.cos * trig_deriv(th, a + b, true) + m.sin * trig_deriv(th, a + b, false))
        })
        .sum()
}

/// Periodic chart of the reference surface with `g0`, `C`, `N` and derivative data.
#[derive(Debug, Clone)]
pub struct ReferenceSurface {
    diff: Diff,
    embedding: Embedding,
    pub g0: Vec<M2>,
    pub c: Vec<M2>,
    pub normal: Vec<V3>,
    dg0: [Vec<M2>; 2],
    dc: [Vec<M2>; 2],
    jets: Vec<[Jet; 6]>,
    thickness: f64,
}

const JET_DEG: usize = 3;

impl ReferenceSurface {
    pub fn flat(grid: Grid2, backend: Backend, thickness: f64) -> Result<Self> {
        let n = grid.len();
        Self::build(grid, backend, Embedding::Flat, vec![mat::I2; n], vec![[[0.0; 2]; 2]; n], vec![[0.0, 0.0, 1.0]; n], thickness)
    }

    pub fn graph(grid: Grid2, backend: Backend, modes: Vec<ProfileMode>, thickness: f64) -> Result<Self> {
        let l = [grid.l1, grid.l2];
        let mut g0 = Vec::with_capacity(grid.len());
        let mut c = Vec::with_capacity(grid.len());
        let mut normal = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let y = grid.point(k);
            let w1 = profile_deriv(&modes, l, y, 1, 0);
            let w2 = profile_deriv(&modes, l, y, 0, 1);
            let s = (1.0 + w1 * w1 + w2 * w2).sqrt();
            g0.push([[1.0 + w1 * w1, w1 * w2], [w1 * w2, 1.0 + w2 * w2]]);
            let w11 = profile_deriv(&modes, l, y, 2, 0);
            let w12 = profile_deriv(&modes, l, y, 1, 1);
            let w22 = profile_deriv(&modes, l, y, 0, 2);
            c.push([[w11 / s, w12 / s], [w12 / s, w22 / s]]);
            normal.push([-w1 / s, -w2 / s, 1.0 / s]);
        }
        Self::build(grid, backend, Embedding::Graph(modes), g0, c, normal, thickness)
    }

    /// Curved reference given only by its fundamental forms and normal.
    pub fn from_fields(grid: Grid2, backend: Backend, g0: Vec<M2>, c: Vec<M2>, normal: Vec<V3>, thickness: f64) -> Result<Self> {
        Self::build(grid, backend, Embedding::Abstract, g0, c, normal, thickness)
    }

    fn build(grid: Grid2, backend: Backend, embedding: Embedding, g0: Vec<M2>, c: Vec<M2>, normal: Vec<V3>, thickness: f64) -> Result<Self> {
        grid.check("g0", &g0.iter().map(|_| 0.0).collect::<Vec<_>>())?;
        crate::error::shape_check("C", c.len(), grid.len())?;
        crate::error::shape_check("N", normal.len(), grid.len())?;
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::Domain(format!("thickness_eps must be positive, got {thickness}")));
        }
        let g0_field = MetricField::new(g0.clone())?;
        for (k, nv) in normal.iter().enumerate() {
            if (mat::norm3(*nv) - 1.0).abs() > 1e-12 {
                return Err(Error::Degeneracy { node: k, what: "normal is not unit".into() });
            }
            let cc = &c[k];
            if (cc[0][1] - cc[1][0]).abs() > 1e-12 {
                return Err(Error::Degeneracy { node: k, what: "C not symmetric".into() });
            }
            // shape operator g0^{-1} C has principal curvatures; the collar needs eps |kappa| < 1
            let s = mat::mul2(&g0_field.inverse[k], cc);
            let tr = s[0][0] + s[1][1];
            let det = mat::det2(&s);
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let kmax = (tr / 2.0).abs() + disc;
            if kmax * thickness >= 1.0 {
                return Err(Error::Domain(format!("thickness {thickness} exceeds the focal distance {:.3e} at node {k}", 1.0 / kmax)));
            }
        }
        let diff = Diff::new(grid, backend);
        let comp = |f: &[M2], a: usize, b: usize| f.iter().map(|m| m[a][b]).collect::<Vec<f64>>();
        let pairs = [(0, 0), (0, 1), (1, 1)];
        let orders = multi_indices(JET_DEG as u32);
        let mut derivs: Vec<Vec<Vec<f64>>> = Vec::new();
        for src in [&g0, &c] {
            for &(a, b) in &pairs {
                derivs.push(diff.many(&comp(src, a, b), &orders));
            }
        }
        let sym = |f: &[Vec<f64>], k: usize| -> M2 { [[f[0][k], f[1][k]], [f[1][k], f[2][k]]] };
        let d_field = |which: usize, dir: usize| -> Vec<M2> {
            let oi = if dir == 0 { 1 } else { 2 };
            let comps: Vec<Vec<f64>> = (0..3).map(|p| derivs[which * 3 + p][oi].clone()).collect();
            (0..grid.len()).map(|k| sym(&comps, k)).collect()
        };
        let dg0 = [d_field(0, 0), d_field(0, 1)];
        let dc = [d_field(1, 0), d_field(1, 1)];
        let jets = (0..grid.len())
            .map(|k| {
                std::array::from_fn(|f| {
                    let d = &derivs[f];
                    Jet::from_derivs(JET_DEG, |a, b| {
                        let pos = orders.iter().position(|&o| o == (a as u32, b as u32)).expect("order");
                        d[pos][k]
                    })
                })
            })
            .collect();
        Ok(ReferenceSurface { diff, embedding, g0, c, normal, dg0, dc, jets, thickness })
    }

    pub fn grid(&self) -> &Grid2 {
        self.diff.grid()
    }

    pub fn diff(&self) -> &Diff {
        &self.diff
    }

    pub fn backend(&self) -> Backend {
        self.diff.backend()
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.embedding, Embedding::Flat)
    }

    /// Degree three jets of `(g0_11, g0_12, g0_22, C_11, C_12, C_22)` at node `k`.
    pub fn jets(&self, k: usize) -> &[Jet; 6] {
        &self.jets[k]
    }

    pub fn sqrt_det_g0(&self) -> Vec<f64> {
        self.g0.iter().map(|m| mat::det2(m).sqrt()).collect()
    }

    fn q(&self, k: usize) -> M2 {
        let gi = mat::inv2(&self.g0[k]).expect("g0 SPD");
        mat::mul2(&self.c[k], &mat::mul2(&gi, &self.c[k]))
    }

    /// `G_z` at node `k`.
    pub fn metric_point(&self, k: usize, z: f64) -> M2 {
        let q = self.q(k);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = self.g0[k][i][j] - 2.0 * z * self.c[k][i][j] + z * z * q[i][j];
            }
        }
        m
    }

    /// `d G_z / dz`, exact from the quadratic z dependence.
    pub fn metric_dz(&self, k: usize, z: f64) -> M2 {
        mat::add2(&self.c[k], &self.q(k), -z).map(|r| r.map(|v| -2.0 * v))
    }

    /// `d G_z / dy_dir` at fixed z.
    pub fn metric_dy(&self, k: usize, z: f64, dir: usize) -> M2 {
        let gi = mat::inv2(&self.g0[k]).expect("g0 SPD");
        let dgi = mat::mul2(&gi, &mat::mul2(&self.dg0[dir][k], &gi)).map(|r| r.map(|v| -v));
        let c = &self.c[k];
        let dcm = &self.dc[dir][k];
        let dq = {
            let a = mat::mul2(dcm, &mat::mul2(&gi, c));
            let b = mat::mul2(c, &mat::mul2(&dgi, c));
            let d = mat::mul2(c, &mat::mul2(&gi, dcm));
            mat::add2(&mat::add2(&a, &b, 1.0), &d, 1.0)
        };
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = self.dg0[dir][k][i][j] - 2.0 * z * dcm[i][j] + z * z * dq[i][j];
            }
        }
        m
    }

    pub fn metric_at(&self, z: f64) -> Result<MetricField> {
        if z.abs() >= self.thickness {
            return Err(Error::Domain(format!("|z| = {} outside the collar of half width {}", z.abs(), self.thickness)));
        }
        MetricField::new((0..self.grid().len()).map(|k| self.metric_point(k, z)).collect())
    }

    /// Metric `G_z` evaluated at `z = h(y)` node by node.
    pub fn metric_along(&self, h: &[f64]) -> Result<MetricField> {
        self.check_height(h)?;
        MetricField::new(h.iter().enumerate().map(|(k, &z)| self.metric_point(k, z)).collect())
    }

    pub fn check_height(&self, h: &[f64]) -> Result<()> {
        self.grid().check("h", h)?;
        if let Some((k, v)) = h.iter().enumerate().find(|(_, v)| !(v.abs() < self.thickness)) {
            return Err(Error::Domain(format!("height {v} at node {k} leaves the collar")));
        }
        Ok(())
    }

    /// Christoffel symbols of `G_z + dz^2` at node `k`, height `z`.
    pub fn christoffel_point(&self, k: usize, z: f64) -> Result<Christoffel> {
        let g = self.metric_point(k, z);
        let gi = mat::inv2(&g).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_z".into() })?;
        if mat::det2(&g) <= 0.0 {
            return Err(Error::Degeneracy { node: k, what: "G_z not positive".into() });
        }
        Ok(christoffel_from(&gi, [self.metric_dy(k, z, 0), self.metric_dy(k, z, 1)], self.metric_dz(k, z)))
    }

    /// Christoffel fields sampled at the given heights.
    pub fn tubular_christoffels(&self, z_samples: &[f64]) -> Result<Vec<Vec<Christoffel>>> {
        z_samples
            .iter()
            .map(|&z| {
                self.metric_at(z)?;
                (0..self.grid().len()).map(|k| self.christoffel_point(k, z)).collect()
            })
            .collect()
    }

    /// Embedding frame at an arbitrary chart point.
    pub fn frame(&self, y: [f64; 2]) -> Result<Frame> {
        match &self.embedding {
            Embedding::Flat => Ok(Frame { x: [y[0], y[1], 0.0], dx: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], n: [0.0, 0.0, 1.0], dn: [[0.0; 3]; 2] }),
            Embedding::Graph(modes) => {
                let l = [self.grid().l1, self.grid().l2];
                let w = profile_deriv(modes, l, y, 0, 0);
                let w1 = profile_deriv(modes, l, y, 1, 0);
                let w2 = profile_deriv(modes, l, y, 0, 1);
                let w11 = profile_deriv(modes, l, y, 2, 0);
                let w12 = profile_deriv(modes, l, y, 1, 1);
                let w22 = profile_deriv(modes, l, y, 0, 2);
                let nt = [-w1, -w2, 1.0];
                let s = mat::norm3(nt);
                let dnt = [[-w11, -w12, 0.0], [-w12, -w22, 0.0]];
                let dn = dnt.map(|d| {
                    let p = mat::dot3(nt, d) / (s * s * s);
                    [d[0] / s - nt[0] * p, d[1] / s - nt[1] * p, d[2] / s - nt[2] * p]
                });
                Ok(Frame { x: [y[0], y[1], w], dx: [[1.0, 0.0, w1], [0.0, 1.0, w2]], n: [nt[0] / s, nt[1] / s, nt[2] / s], dn })
            }
            Embedding::Abstract => Err(Error::Domain("reference surface has no embedding".into())),
        }
    }

    /// The immersion `B(y, z) = X(y) + z N(y)`.
    pub fn immersion(&self, y: [f64; 2], z: f64) -> Result<V3> {
        let f = self.frame(y)?;
        Ok([f.x[0] + z * f.n[0], f.x[1] + z * f.n[1], f.x[2] + z * f.n[2]])
    }
}

/// Christoffel symbols of `diag(G, 1)` from `G^{-1}`, `dG/dy` and `dG/dz`.
pub fn christoffel_from(gi: &M2, dgy: [M2; 2], dgz: M2) -> Christoffel {
    // full 3x3 metric derivative d_l G_ij, zero in the z row and column
    let dg = |l: usize, i: usize, j: usize| -> f64 {
        if i == 2 || j == 2 {
            return 0.0;
        }
        if l < 2 {
            dgy[l][i][j]
        } else {
            dgz[i][j]
        }
    };
    let ginv = |k: usize, l: usize| -> f64 {
        match (k, l) {
            (2, 2) => 1.0,
            (2, _) | (_, 2) => 0.0,
            _ => gi[k][l],
        }
    };
    let mut out = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in i..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    let gkl = ginv(k, l);
                    if gkl != 0.0 {
                        s += gkl * (dg(i, j, l) + dg(j, i, l) - dg(l, i, j));
                    }
                }
                out[k][i][j] = 0.5 * s;
                out[k][j][i] = 0.5 * s;
            }
        }
    }
    out
}

/// Divergence form Laplace-Beltrami operator `(1/sqrt g) d_a (sqrt g g^ab d_b f)`.
///
/// Built from the antisymmetric first derivative, so it kills constants exactly and is
/// self-adjoint in the `sqrt g` weighted inner product.
pub fn laplace_beltrami(diff: &Diff, metric: &MetricField, f: &[f64]) -> Result<Vec<f64>> {
    let n = diff.grid().len();
    crate::error::shape_check("laplace_beltrami field", f.len(), n)?;
    crate::error::shape_check("laplace_beltrami metric", metric.len(), n)?;
    let df = diff.gradient(f);
    let mut flux = [vec![0.0; n], vec![0.0; n]];
    for k in 0..n {
        let gi = &metric.inverse[k];
        let s = metric.sqrt_det[k];
        for a in 0..2 {
            flux[a][k] = s * (gi[a][0] * df[0][k] + gi[a][1] * df[1][k]);
        }
    }
    let d0 = diff.d1(&flux[0], 0);
    let d1 = diff.d1(&flux[1], 1);
    Ok((0..n).map(|k| (d0[k] + d1[k]) / metric.sqrt_det[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn bumpy(n: usize, backend: Backend) -> ReferenceSurface {
        let modes = vec![
            ProfileMode { m1: 1, m2: 0, cos: 0.02, sin: 0.01 },
            ProfileMode { m1: 1, m2: 1, cos: -0.015, sin: 0.0 },
            ProfileMode { m1: 0, m2: 2, cos: 0.0, sin: 0.008 },
        ];
        ReferenceSurface::graph(Grid2::unit(n).unwrap(), backend, modes, 0.3).unwrap()
    }

    #[test]
    fn flat_metric_is_identity_and_z0_gives_g0() {
        let s = ReferenceSurface::flat(Grid2::unit(8).unwrap(), Backend::FiniteDifference, 0.5).unwrap();
        let m = s.metric_at(0.2).unwrap();
        assert!(m.values.iter().all(|v| *v == mat::I2));
        let b = bumpy(16, Backend::Spectral);
        let m0 = b.metric_at(0.0).unwrap();
        for (a, g) in m0.values.iter().zip(&b.g0) {
            assert_eq!(a, g);
        }
        assert!(b.metric_at(0.3).is_err());
    }

    #[test]
    fn metric_matches_pullback_through_immersion() {
        let s = bumpy(32, Backend::Spectral);
        let z = 0.1;
        let d = 1e-5;
        for k in [0, 77, 500] {
            let y = s.grid().point(k);
            let g = s.metric_point(k, z);
            let mut t = [[0.0; 3]; 2];
            for a in 0..2 {
                let mut yp = y;
                let mut ym = y;
                yp[a] += d;
                ym[a] -= d;
                let p = s.immersion(yp, z).unwrap();
                let m = s.immersion(ym, z).unwrap();
                for c in 0..3 {
                    t[a][c] = (p[c] - m[c]) / (2.0 * d);
                }
            }
            for a in 0..2 {
                for b in 0..2 {
                    assert!((g[a][b] - mat::dot3(t[a], t[b])).abs() < 1e-8, "{k} {a}{b}");
                }
            }
        }
    }

    #[test]
    fn christoffels_vanish_when_flat_and_are_symmetric() {
        let s = ReferenceSurface::flat(Grid2::unit(8).unwrap(), Backend::Spectral, 0.5).unwrap();
        let c = s.tubular_christoffels(&[0.1]).unwrap();
        assert!(c[0].iter().all(|g| g.iter().flatten().flatten().all(|v| *v == 0.0)));
        let b = bumpy(16, Backend::Spectral);
        let c = b.tubular_christoffels(&[-0.1, 0.1]).unwrap();
        for g in c.iter().flatten() {
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(g[k][i][j], g[k][j][i]);
                    }
                }
            }
        }
    }

    fn christoffel_fd_error(n: usize) -> f64 {
        // finite difference oracle on sampled metrics against the analytic z and spectral y derivatives
        let s = bumpy(n, Backend::FiniteDifference);
        let z = 0.05;
        let dz = 1e-4;
        let g = s.grid();
        let m = s.metric_at(z).unwrap();
        let mp = s.metric_at(z + dz).unwrap();
        let mm = s.metric_at(z - dz).unwrap();
        let comp = |f: &MetricField, a: usize, b: usize| f.values.iter().map(|v| v[a][b]).collect::<Vec<_>>();
        let mut err: f64 = 0.0;
        let diff = Diff::new(*g, Backend::FiniteDifference);
        let dy: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|p| {
                let (a, b) = (p / 2, p % 2);
                diff.gradient(&comp(&m, a, b)).to_vec()
            })
            .collect();
        let exact = bumpy(128, Backend::Spectral);
        let step = 128 / n;
        for k in (0..g.len()).step_by(7) {
            let mut dgy = [[[0.0; 2]; 2]; 2];
            let mut dgz = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for l in 0..2 {
                        dgy[l][a][b] = dy[a * 2 + b][l][k];
                    }
                    dgz[a][b] = (mp.values[k][a][b] - mm.values[k][a][b]) / (2.0 * dz);
                }
            }
            let oracle = christoffel_from(&m.inverse[k], dgy, dgz);
            let (i, j) = (k / n, k % n);
            let ke = exact.grid().idx(i * step, j * step);
            let got = exact.christoffel_point(ke, z).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        err = err.max((oracle[a][b][c] - got[a][b][c]).abs());
                    }
                }
            }
        }
        err
    }

    #[test]
    fn christoffels_match_fd_oracle_at_second_order() {
        let rate = (christoffel_fd_error(32) / christoffel_fd_error(64)).log2();
        assert!((rate - 2.0).abs() < 0.2, "rate {rate}");
    }

    #[test]
    fn laplace_beltrami_constants_and_eigenfunctions() {
        for be in [Backend::FiniteDifference, Backend::Spectral] {
            let b = bumpy(32, be);
            let m = b.metric_at(0.05).unwrap();
            let lap = laplace_beltrami(b.diff(), &m, &vec![3.7; 1024]).unwrap();
            assert!(lap.iter().all(|v| v.abs() < 1e-13));
        }
        let g = Grid2::unit(32).unwrap();
        let s = ReferenceSurface::flat(g, Backend::Spectral, 0.5).unwrap();
        let m = s.metric_at(0.0).unwrap();
        let f = g.sample(|x, _| (2.0 * PI * x).sin());
        let lap = laplace_beltrami(s.diff(), &m, &f).unwrap();
        for (a, b) in lap.iter().zip(&f) {
            assert!((a + 4.0 * PI * PI * b).abs() < 1e-9);
        }
    }

    #[test]
    fn laplace_beltrami_weak_form_and_self_adjoint() {
        let b = bumpy(32, Backend::FiniteDifference);
        let g = *b.grid();
        let m = b.metric_at(0.1).unwrap();
        let f = g.sample(|x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos() + 0.2 * (2.0 * PI * y).sin());
        let p = g.sample(|x, y| (2.0 * PI * (x + y)).cos());
        let lf = laplace_beltrami(b.diff(), &m, &f).unwrap();
        let lp = laplace_beltrami(b.diff(), &m, &p).unwrap();
        let w = |u: &[f64], v: &[f64]| -> f64 { (0..g.len()).map(|k| u[k] * v[k] * m.sqrt_det[k]).sum() };
        let scale = w(&f, &f).sqrt() * w(&p, &p).sqrt();
        assert!((w(&lf, &p) - w(&f, &lp)).abs() < 1e-10 * scale);
        // weak form: <Lap f, p> = -<g^ab f_b, p_a> sqrt g
        let df = b.diff().gradient(&f);
        let dp = b.diff().gradient(&p);
        let mut weak = 0.0;
        for k in 0..g.len() {
            let gi = &m.inverse[k];
            for a in 0..2 {
                for c in 0..2 {
                    weak -= gi[a][c] * df[c][k] * dp[a][k] * m.sqrt_det[k];
                }
            }
        }
        assert!((w(&lf, &p) - weak).abs() < 1e-9 * weak.abs().max(1.0));
    }

    #[test]
    fn thickness_beyond_focal_distance_is_rejected() {
        let modes = vec![ProfileMode { m1: 1, m2: 0, cos: 0.2, sin: 0.0 }];
        assert!(ReferenceSurface::graph(Grid2::unit(16).unwrap(), Backend::Spectral, modes, 0.5).is_err());
    }
}
