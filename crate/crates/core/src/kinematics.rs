//! Normal/tangential factorization `eta = eta^nu o eta^tau` of the boundary motion
//! and the geometric identities relating the induced metric to the graph metric.

use crate::error::{shape_check, Error, Result};
use crate::geometry::{laplace_beltrami, Embedding, MetricField, ReferenceSurface};
use crate::grid::Grid2;
use crate::interp::{Interpolation, PointOperator, PointSampler};
use crate::mat::{self, M2, V3};
use crate::shell;

const NEWTON_MAX: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// Positions in space of the material points that started at the Gamma nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    pub positions: Vec<V3>,
}

impl BoundaryMap {
    /// The reference surface itself.
    pub fn identity(surface: &ReferenceSurface) -> Result<Self> {
        let g = surface.grid();
        Ok(BoundaryMap { positions: (0..g.len()).map(|k| surface.immersion(g.point(k), 0.0)).collect::<Result<_>>()? })
    }
}

/// Chart diffeomorphism `eta^tau(y) = y + d(y)` with periodic displacement `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentialMap {
    grid: Grid2,
    disp: [Vec<f64>; 2],
    grad: Vec<M2>,
}

impl TangentialMap {
    pub fn identity(g: &Grid2) -> Self {
        TangentialMap { grid: *g, disp: [vec![0.0; g.len()], vec![0.0; g.len()]], grad: vec![mat::I2; g.len()] }
    }

    /// Builds the map and `grad0 eta^tau`, failing on the first fold.
    pub fn from_displacement(surface: &ReferenceSurface, disp: [Vec<f64>; 2]) -> Result<Self> {
        let g = *surface.grid();
        g.check("displacement", &disp[0])?;
        g.check("displacement", &disp[1])?;
        let d = surface.diff();
        let dd = [d.gradient(&disp[0]), d.gradient(&disp[1])];
        // grad[k][kappa][alpha] = d_alpha eta^kappa
        let grad = (0..g.len()).map(|k| [[1.0 + dd[0][0][k], dd[0][1][k]], [dd[1][0][k], 1.0 + dd[1][1][k]]]).collect();
        let t = TangentialMap { grid: g, disp, grad };
        t.check()?;
        Ok(t)
    }

    pub fn displacement(&self) -> &[Vec<f64>; 2] {
        &self.disp
    }

    pub fn grad(&self) -> &[M2] {
        &self.grad
    }

    pub fn det(&self) -> Vec<f64> {
        self.grad.iter().map(mat::det2).collect()
    }

    pub fn check(&self) -> Result<()> {
        match self.grad.iter().enumerate().find(|(_, m)| !(mat::det2(m) > 0.0)) {
            Some((k, m)) => Err(Error::MeshTangling { cell: k, det: mat::det2(m) }),
            None => Ok(()),
        }
    }

    /// `eta^tau(y_k)` at every node, not wrapped into the chart.
    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.grid.len())
            .map(|k| {
                let y = self.grid.point(k);
                [y[0] + self.disp[0][k], y[1] + self.disp[1][k]]
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.disp.iter().all(|d| d.iter().all(|v| *v == 0.0))
    }

    /// Preimages `xi_j` with `eta^tau(xi_j) = y_j` for every node `y_j`.
    pub fn inverse_points(&self, surface: &ReferenceSurface, method: Interpolation) -> Result<Vec<[f64; 2]>> {
        let g = self.grid;
        if self.is_identity() {
            return Ok(g.points());
        }
        let fft = surface.diff().fft();
        let s = [PointSampler::new(fft, &self.disp[0], method), PointSampler::new(fft, &self.disp[1], method)];
        let orders = [(0, 0), (1, 0), (0, 1)];
        (0..g.len())
            .map(|j| {
                let y = g.point(j);
                let mut xi = [y[0] - self.disp[0][j], y[1] - self.disp[1][j]];
                for _ in 0..NEWTON_MAX {
                    let a = s[0].eval_many(xi, &orders);
                    let b = s[1].eval_many(xi, &orders);
                    let r = [xi[0] + a[0] - y[0], xi[1] + b[0] - y[1]];
                    let jm = [[1.0 + a[1], a[2]], [b[1], 1.0 + b[2]]];
                    let ji = mat::inv2(&jm).ok_or(Error::MeshTangling { cell: j, det: mat::det2(&jm) })?;
                    let step = mat::mv2(&ji, r);
                    xi = [xi[0] - step[0], xi[1] - step[1]];
                    if step[0].abs().max(step[1].abs()) < NEWTON_TOL {
                        return Ok(xi);
                    }
                }
                Err(Error::Convergence(format!("inverse of the tangential map at node {j}")))
            })
            .collect()
    }

    /// Cubic resampling operator taking material values `f o eta^tau` to grid values of `f`.
    pub fn resampler(&self, surface: &ReferenceSurface) -> Result<PointOperator> {
        let xi = self.inverse_points(surface, Interpolation::Cubic)?;
        Ok(PointOperator::cubic(&self.grid, &xi))
    }

    /// Moves the map by `dt u` with `u = u^tau o eta^tau` sampled at the nodes.
    pub fn advance(&self, surface: &ReferenceSurface, u: &[Vec<f64>; 2], dt: f64) -> Result<Self> {
        let disp = [0, 1].map(|c| self.disp[c].iter().zip(&u[c]).map(|(d, v)| d + dt * v).collect());
        TangentialMap::from_displacement(surface, disp)
    }
}

/// `f o eta^tau` on the nodes.
pub fn compose(surface: &ReferenceSurface, f: &[f64], tau: &TangentialMap, method: Interpolation) -> Vec<f64> {
    if tau.is_identity() {
        return f.to_vec();
    }
    PointSampler::new(surface.diff().fft(), f, method).at_points(&tau.points())
}

fn project_from(surface: &ReferenceSurface, p: V3, seed: [f64; 2]) -> Result<([f64; 2], f64)> {
    let eval = |y: [f64; 2], z: f64| -> Result<(V3, mat::M3)> {
        let f = surface.frame(y)?;
        let b = [0, 1, 2].map(|i| f.x[i] + z * f.n[i] - p[i]);
        let jm = [0, 1, 2].map(|i| [f.dx[0][i] + z * f.dn[0][i], f.dx[1][i] + z * f.dn[1][i], f.n[i]]);
        Ok((b, jm))
    };
    let mut y = seed;
    let n0 = surface.frame(y)?.n;
    let x0 = surface.frame(y)?.x;
    let mut z = mat::dot3(n0, [p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]]);
    let (mut r, mut jm) = eval(y, z)?;
    for _ in 0..NEWTON_MAX {
        let step = mat::solve3(&jm, r).ok_or_else(|| Error::Projection("singular tubular Jacobian".into()))?;
        let norm0 = mat::norm3(r);
        let mut t = 1.0;
        loop {
            let yn = [y[0] - t * step[0], y[1] - t * step[1]];
            let zn = z - t * step[2];
            let (rn, jn) = eval(yn, zn)?;
            if mat::norm3(rn) < norm0 || t < 1e-4 {
                y = yn;
                z = zn;
                r = rn;
                jm = jn;
                break;
            }
            t *= 0.5;
        }
        if t * step[0].abs().max(step[1].abs()).max(step[2].abs()) < NEWTON_TOL {
            if !(z.abs() < surface.thickness()) {
                return Err(Error::Projection(format!("point at height {z:.3e} is outside the collar")));
            }
            return Ok((y, z));
        }
    }
    Err(Error::Convergence("tubular projection did not converge".into()))
}

/// Inverts `B(y, z) = X(y) + z N(y)`.
///
/// Newton is seeded from the node nearest to `p`, searched in a 5x5 window around
/// `hint` when given and over the whole chart otherwise. The returned `y` is not
/// wrapped into the fundamental cell.
pub fn tubular_project(surface: &ReferenceSurface, p: V3, hint: Option<[f64; 2]>) -> Result<([f64; 2], f64)> {
    let g = surface.grid();
    if matches!(surface.embedding(), Embedding::Abstract) {
        return Err(Error::Domain("projection needs an embedded reference surface".into()));
    }
    // X(y + L e) = X(y) + L e for the flat and graph embeddings
    let shift = [(p[0] / g.l1).floor() * g.l1, (p[1] / g.l2).floor() * g.l2];
    let q = [p[0] - shift[0], p[1] - shift[1], p[2]];
    let dist = |i: isize, j: isize| -> Result<f64> {
        let y = [i as f64 * g.h1(), j as f64 * g.h2()];
        let x = surface.immersion(y, 0.0)?;
        Ok((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2) + (x[2] - q[2]).powi(2))
    };
    let mut best = (f64::INFINITY, 0isize, 0isize);
    let mut consider = |i: isize, j: isize| -> Result<()> {
        let d = dist(i, j)?;
        if d < best.0 {
            best = (d, i, j);
        }
        Ok(())
    };
    match hint {
        Some(hy) => {
            let c = [((hy[0] - shift[0]) / g.h1()).round() as isize, ((hy[1] - shift[1]) / g.h2()).round() as isize];
            for di in -2..=2 {
                for dj in -2..=2 {
                    consider(c[0] + di, c[1] + dj)?;
                }
            }
        }
        None => {
            for i in -1..=g.n1 as isize {
                for j in -1..=g.n2 as isize {
                    consider(i, j)?;
                }
            }
        }
    }
    let seed = [best.1 as f64 * g.h1(), best.2 as f64 * g.h2()];
    let (y, z) = project_from(surface, q, seed)?;
    Ok(([y[0] + shift[0], y[1] + shift[1]], z))
}

/// Splits the boundary map into a height over the chart and a tangential map.
///
/// Projecting `eta(y_k)` gives `eta^tau(y_k)` and `(h o eta^tau)(y_k)`; `h` on the grid
/// is then `(h o eta^tau) o (eta^tau)^-1`, evaluated through the inverse map.
pub fn decompose_boundary(surface: &ReferenceSurface, bmap: &BoundaryMap, method: Interpolation) -> Result<(Vec<f64>, TangentialMap)> {
    let g = *surface.grid();
    shape_check("boundary map", bmap.positions.len(), g.len())?;
    let mut disp = [vec![0.0; g.len()], vec![0.0; g.len()]];
    let mut hc = vec![0.0; g.len()];
    for k in 0..g.len() {
        let y = g.point(k);
        let (yy, z) = tubular_project(surface, bmap.positions[k], Some(y))?;
        for (c, l) in [g.l1, g.l2].into_iter().enumerate() {
            let d = yy[c] - y[c];
            disp[c][k] = d - (d / l).round() * l;
        }
        hc[k] = z;
    }
    let tau = TangentialMap::from_displacement(surface, disp).map_err(|e| match e {
        Error::MeshTangling { cell, det } => Error::Decomposition(format!("boundary is not a graph: tangential map folds at node {cell} (det {det:.3e})")),
        other => other,
    })?;
    let h = if tau.is_identity() {
        hc
    } else {
        let xi = tau.inverse_points(surface, method)?;
        PointSampler::new(surface.diff().fft(), &hc, method).at_points(&xi)
    };
    surface.check_height(&h).map_err(|e| Error::GraphViolation(e.to_string()))?;
    Ok((h, tau))
}

/// `eta(y) = B(eta^tau(y), h(eta^tau(y)))`.
pub fn recompose(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<BoundaryMap> {
    let hc = compose(surface, h, tau, method);
    let pts = tau.points();
    Ok(BoundaryMap { positions: pts.iter().zip(&hc).map(|(y, z)| surface.immersion(*y, *z)).collect::<Result<_>>()? })
}

/// Tubular components at `B(eta^tau(y_k), (h o eta^tau)(y_k))` of spatial vectors at the nodes.
pub fn tubular_components(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, v: &[V3], method: Interpolation) -> Result<Vec<V3>> {
    shape_check("boundary velocity", v.len(), surface.grid().len())?;
    let hc = compose(surface, h, tau, method);
    tau.points()
        .iter()
        .zip(&hc)
        .zip(v)
        .map(|((y, &z), vv)| {
            let f = surface.frame(*y)?;
            let jm = [0, 1, 2].map(|i| [f.dx[0][i] + z * f.dn[0][i], f.dx[1][i] + z * f.dn[1][i], f.n[i]]);
            mat::solve3(&jm, *vv).ok_or_else(|| Error::Degeneracy { node: 0, what: "singular tubular frame".into() })
        })
        .collect()
}

/// Velocities of the factors along the material nodes.
#[derive(Debug, Clone)]
pub struct FactorVelocity {
    /// `u^tau o eta^tau`, the chart velocity of `eta^tau`.
    pub u_tau: [Vec<f64>; 2],
    /// `h_t o eta^tau`.
    pub h_t: Vec<f64>,
}

/// Splits a boundary velocity into `u^tau` and `h_t`.
///
/// With `u` in tubular components at the graph, `u - h_t e_z` must be tangent to the
/// graph, which fixes `u^tau = (u^1, u^2)` and `h_t = u^z - h_a u^a`.
pub fn tangential_velocity(surface: &ReferenceSurface, v_gamma: &[V3], h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<FactorVelocity> {
    let u = tubular_components(surface, h, tau, v_gamma, method)?;
    factor_velocity(surface, &u, h, tau, method)
}

/// As [`tangential_velocity`] for velocities already in tubular components.
pub fn factor_velocity(surface: &ReferenceSurface, u: &[V3], h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<FactorVelocity> {
    shape_check("boundary velocity", u.len(), surface.grid().len())?;
    let d = surface.diff();
    let grad = d.gradient(h);
    let hx = compose(surface, &grad[0], tau, method);
    let hy = compose(surface, &grad[1], tau, method);
    Ok(FactorVelocity {
        u_tau: [u.iter().map(|w| w[0]).collect(), u.iter().map(|w| w[1]).collect()],
        h_t: (0..u.len()).map(|k| u[k][2] - hx[k] * u[k][0] - hy[k] * u[k][1]).collect(),
    })
}

/// Explicit height update `h + dt (u^z - h_a u^a)` resampled from the material nodes.
pub fn advance_height(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, u: &[V3], dt: f64) -> Result<Vec<f64>> {
    let fv = factor_velocity(surface, u, h, tau, Interpolation::Cubic)?;
    let rate = if tau.is_identity() { fv.h_t } else { tau.resampler(surface)?.apply(&fv.h_t) };
    let out: Vec<f64> = h.iter().zip(&rate).map(|(a, b)| a + dt * b).collect();
    surface.check_height(&out).map_err(|e| Error::GraphViolation(e.to_string()))?;
    Ok(out)
}

/// The two expressions for the area factor `Theta`.
#[derive(Debug, Clone)]
pub struct ThetaFactor {
    /// `sqrt(det g) (J_h^-1 o eta^tau)`, with `g` induced by the spatial map.
    pub via_metric: Vec<f64>,
    /// `det(grad0 eta^tau) sqrt(det G_h o eta^tau)`.
    pub via_tangential: Vec<f64>,
}

impl ThetaFactor {
    pub fn residual(&self) -> f64 {
        rel_residual(&self.via_metric, &self.via_tangential)
    }
}

/// Graph quantities along `eta^tau`: `G_h`, `grad h` and `J_h`.
struct Pulled {
    gh: Vec<M2>,
    p: Vec<[f64; 2]>,
    j: Vec<f64>,
}

fn pull_graph(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<Pulled> {
    let n = h.len();
    let grad = surface.diff().gradient(h);
    let comp = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { compose(surface, &(0..n).map(f).collect::<Vec<_>>(), tau, method) };
    let z = compose(surface, h, tau, method);
    let px = compose(surface, &grad[0], tau, method);
    let py = compose(surface, &grad[1], tau, method);
    let q: Vec<M2> = (0..n)
        .map(|k| {
            let gi = mat::inv2(&surface.g0[k]).expect("g0 SPD");
            mat::mul2(&surface.c[k], &mat::mul2(&gi, &surface.c[k]))
        })
        .collect();
    let mut fields: Vec<Vec<f64>> = Vec::new();
    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
        fields.push(comp(&|k| surface.g0[k][a][b]));
        fields.push(comp(&|k| surface.c[k][a][b]));
        fields.push(comp(&|k| q[k][a][b]));
    }
    let mut gh = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut j = Vec::with_capacity(n);
    for k in 0..n {
        let e = |c: usize| fields[3 * c][k] - 2.0 * z[k] * fields[3 * c + 1][k] + z[k] * z[k] * fields[3 * c + 2][k];
        let m = [[e(0), e(1)], [e(1), e(2)]];
        let gi = mat::inv2(&m).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_h".into() })?;
        let pk = [px[k], py[k]];
        let w = mat::mv2(&gi, pk);
        j.push((1.0 + pk[0] * w[0] + pk[1] * w[1]).sqrt());
        gh.push(m);
        p.push(pk);
    }
    Ok(Pulled { gh, p, j })
}

type Derivatives = ([Vec<V3>; 2], [Vec<V3>; 3]);

/// First and second derivatives of the spatial map `eta` at the nodes, for the flat
/// and graph embeddings where `eta - (y1, y2, 0)` is periodic.
fn spatial_derivatives(surface: &ReferenceSurface, bmap: &BoundaryMap) -> Result<Derivatives> {
    let g = *surface.grid();
    let d = surface.diff();
    let per: [Vec<f64>; 3] = std::array::from_fn(|c| {
        (0..g.len())
            .map(|k| {
                let y = g.point(k);
                bmap.positions[k][c] - if c < 2 { y[c] } else { 0.0 }
            })
            .collect()
    });
    let orders = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
    let dd: Vec<Vec<Vec<f64>>> = per.iter().map(|f| d.many(f, &orders)).collect();
    let vec_at = |o: usize, k: usize| -> V3 { [dd[0][o][k], dd[1][o][k], dd[2][o][k]] };
    let first = [0, 1].map(|a| {
        (0..g.len())
            .map(|k| {
                let mut v = vec_at(a, k);
                v[a] += 1.0;
                v
            })
            .collect()
    });
    let second = [2, 3, 4].map(|o| (0..g.len()).map(|k| vec_at(o, k)).collect());
    Ok((first, second))
}

fn rel_residual(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn theta_factor(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<ThetaFactor> {
    let bmap = recompose(surface, h, tau, method)?;
    let (d1, _) = spatial_derivatives(surface, &bmap)?;
    let pulled = pull_graph(surface, h, tau, method)?;
    let det_tau = tau.det();
    let n = h.len();
    let mut via_metric = Vec::with_capacity(n);
    let mut via_tangential = Vec::with_capacity(n);
    for k in 0..n {
        let gm = induced(&d1, k);
        via_metric.push(mat::det2(&gm).sqrt() / pulled.j[k]);
        via_tangential.push(det_tau[k] * mat::det2(&pulled.gh[k]).sqrt());
    }
    if let Some(k) = via_tangential.iter().position(|t| !(*t > 0.0)) {
        return Err(Error::Degeneracy { node: k, what: "Theta is not positive".into() });
    }
    Ok(ThetaFactor { via_metric, via_tangential })
}

fn induced(d1: &[Vec<V3>; 2], k: usize) -> M2 {
    let e = |a: usize, b: usize| mat::dot3(d1[a][k], d1[b][k]);
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

/// Maximum relative residuals of the pullback identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `g = grad eta^tau^T (Gcal o eta^tau) grad eta^tau`.
    pub metric_pullback: f64,
    /// `det g = det(grad eta^tau)^2 (det G_h J_h^2) o eta^tau`.
    pub det_g: f64,
    /// The two expressions for `Theta`.
    pub theta: f64,
    /// `(Delta_Gcal H) o eta^tau = Delta_g (H o eta^tau)`.
    pub laplacian_symmetry: f64,
    /// Mean curvature of the spatial map against `H o eta^tau`.
    pub curvature_invariance: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        [self.metric_pullback, self.det_g, self.theta, self.laplacian_symmetry, self.curvature_invariance].into_iter().fold(0.0, f64::max)
    }
}

/// Evaluates both sides of each identity for the boundary map built from `(h, tau)`.
pub fn identity_suite(surface: &ReferenceSurface, h: &[f64], tau: &TangentialMap, method: Interpolation) -> Result<IdentityReport> {
    let n = h.len();
    let bmap = recompose(surface, h, tau, method)?;
    let (d1, d2) = spatial_derivatives(surface, &bmap)?;
    let pulled = pull_graph(surface, h, tau, method)?;
    let det_tau = tau.det();
    let grad = tau.grad();

    let mut g_direct = Vec::with_capacity(n);
    let mut g_pulled = Vec::with_capacity(n);
    let (mut det_l, mut det_r, mut th_l, mut th_r) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut h_direct = vec![0.0; n];
    for k in 0..n {
        let gd = induced(&d1, k);
        let p = pulled.p[k];
        let gh = pulled.gh[k];
        let cal = [[gh[0][0] + p[0] * p[0], gh[0][1] + p[0] * p[1]], [gh[1][0] + p[1] * p[0], gh[1][1] + p[1] * p[1]]];
        let t = grad[k];
        let mut gp = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for kk in 0..2 {
                    for s in 0..2 {
                        gp[a][b] += cal[kk][s] * t[kk][a] * t[s][b];
                    }
                }
            }
        }
        det_l[k] = mat::det2(&gd);
        det_r[k] = det_tau[k].powi(2) * mat::det2(&gh) * pulled.j[k].powi(2);
        th_l[k] = det_l[k].sqrt() / pulled.j[k];
        th_r[k] = det_tau[k] * mat::det2(&gh).sqrt();
        // H = -g^ab (nu . eta_ab) with nu = eta_1 x eta_2 / |.|
        let nu = mat::cross3(d1[0][k], d1[1][k]);
        let nn = mat::norm3(nu);
        let gi = mat::inv2(&gd).ok_or_else(|| Error::Degeneracy { node: k, what: "singular induced metric".into() })?;
        let b = [[d2[0][k], d2[1][k]], [d2[1][k], d2[2][k]]];
        let mut hv = 0.0;
        for a in 0..2 {
            for c in 0..2 {
                hv -= gi[a][c] * mat::dot3(nu, b[a][c]) / nn;
            }
        }
        h_direct[k] = hv;
        g_direct.push(gd);
        g_pulled.push(gp);
    }
    let flat = |v: &[M2]| -> Vec<f64> { v.iter().flat_map(|m| [m[0][0], m[0][1], m[1][1]]).collect() };
    let metric_pullback = rel_residual(&flat(&g_direct), &flat(&g_pulled));

    let fields = shell::shell_fields(surface, h)?;
    let hm: Vec<f64> = fields.iter().map(|f| f.h_mean).collect();
    let grid_h = surface.diff().gradient(h);
    let cal_grid: Vec<M2> = (0..n)
        .map(|k| {
            let gh = surface.metric_point(k, h[k]);
            let p = [grid_h[0][k], grid_h[1][k]];
            [[gh[0][0] + p[0] * p[0], gh[0][1] + p[0] * p[1]], [gh[1][0] + p[1] * p[0], gh[1][1] + p[1] * p[1]]]
        })
        .collect();
    let lap_graph = laplace_beltrami(surface.diff(), &MetricField::new(cal_grid)?, &hm)?;
    let lhs = compose(surface, &lap_graph, tau, method);
    let h_pulled = compose(surface, &hm, tau, method);
    let rhs = laplace_beltrami(surface.diff(), &MetricField::new(g_pulled)?, &h_pulled)?;

    Ok(IdentityReport {
        metric_pullback,
        det_g: rel_residual(&det_l, &det_r),
        theta: rel_residual(&th_l, &th_r),
        laplacian_symmetry: rel_residual(&lhs, &rhs),
        curvature_invariance: rel_residual(&h_pulled, &h_direct),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use crate::geometry::ProfileMode;
    use crate::random::smooth_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flat(n: usize) -> ReferenceSurface {
        ReferenceSurface::flat(Grid2::unit(n).unwrap(), Backend::Spectral, 0.5).unwrap()
    }

    fn bumpy(n: usize, be: Backend) -> ReferenceSurface {
        let modes = vec![ProfileMode { m1: 1, m2: 0, cos: 0.03, sin: 0.01 }, ProfileMode { m1: 1, m2: 1, cos: -0.02, sin: 0.0 }];
        ReferenceSurface::graph(Grid2::unit(n).unwrap(), be, modes, 0.3).unwrap()
    }

    fn random_tau(s: &ReferenceSurface, seed: u64, amp: f64) -> TangentialMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = smooth_field(s.grid(), &mut rng, 2, 2.0, amp);
        let d1 = smooth_field(s.grid(), &mut rng, 2, 2.0, amp);
        TangentialMap::from_displacement(s, [d0, d1]).unwrap()
    }

    fn random_h(s: &ReferenceSurface, seed: u64, amp: f64) -> Vec<f64> {
        smooth_field(s.grid(), &mut ChaCha8Rng::seed_from_u64(seed), 2, 2.0, amp)
    }

    #[test]
    fn projection_inverts_the_immersion() {
        let s = bumpy(32, Backend::Spectral);
        let y0 = [0.37, 0.81];
        let z0 = 0.3 * 0.3;
        let p = s.immersion(y0, z0).unwrap();
        let (y, z) = tubular_project(&s, p, None).unwrap();
        assert!((y[0] - y0[0]).abs() < 1e-11 && (y[1] - y0[1]).abs() < 1e-11 && (z - z0).abs() < 1e-11);
        let (y, z) = tubular_project(&s, s.immersion([0.5, 0.25], 0.0).unwrap(), None).unwrap();
        assert!(z.abs() < 1e-12 && (y[0] - 0.5).abs() < 1e-12 && (y[1] - 0.25).abs() < 1e-12);
        let far = s.immersion(y0, 0.0).unwrap();
        assert!(tubular_project(&s, [far[0], far[1], far[2] + 0.6], None).is_err());
    }

    #[test]
    fn projection_round_trip_random_points() {
        let s = bumpy(32, Backend::Spectral);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        use rand::Rng;
        for _ in 0..200 {
            let p = [rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.2..0.2)];
            let (y, z) = tubular_project(&s, p, None).unwrap();
            let b = s.immersion(y, z).unwrap();
            assert!(mat::norm3([b[0] - p[0], b[1] - p[1], b[2] - p[2]]) < 1e-10 * 0.3);
            assert!(z.abs() < 0.3);
        }
    }

    #[test]
    fn identity_and_normal_offsets_decompose_trivially() {
        let s = bumpy(16, Backend::Spectral);
        let (h, tau) = decompose_boundary(&s, &BoundaryMap::identity(&s).unwrap(), Interpolation::Trigonometric).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12));
        assert!(tau.displacement().iter().flatten().all(|v| v.abs() < 1e-12));
        let h0 = random_h(&s, 3, 0.05);
        let b = recompose(&s, &h0, &TangentialMap::identity(s.grid()), Interpolation::Trigonometric).unwrap();
        let (h, tau) = decompose_boundary(&s, &b, Interpolation::Trigonometric).unwrap();
        assert!(h.iter().zip(&h0).all(|(a, b)| (a - b).abs() < 1e-11));
        assert!(tau.displacement().iter().flatten().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn decomposition_recovers_known_factors() {
        let s = bumpy(48, Backend::Spectral);
        let h0 = random_h(&s, 4, 0.05);
        let t0 = random_tau(&s, 5, 0.02);
        let b = recompose(&s, &h0, &t0, Interpolation::Trigonometric).unwrap();
        let (h, tau) = decompose_boundary(&s, &b, Interpolation::Trigonometric).unwrap();
        for c in 0..2 {
            let e = tau.displacement()[c].iter().zip(&t0.displacement()[c]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(e < 1e-10, "{e}");
        }
        let eh = h.iter().zip(&h0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(eh < 1e-9, "{eh}");
        let back = recompose(&s, &h, &tau, Interpolation::Trigonometric).unwrap();
        for (p, q) in back.positions.iter().zip(&b.positions) {
            assert!(mat::norm3([p[0] - q[0], p[1] - q[1], p[2] - q[2]]) < 1e-9);
        }
    }

    #[test]
    fn folded_boundary_is_rejected() {
        let s = flat(16);
        let g = *s.grid();
        let mut b = BoundaryMap::identity(&s).unwrap();
        // a fold: the x coordinate runs backwards on part of the chart
        for (k, p) in b.positions.iter_mut().enumerate() {
            let y = g.point(k);
            p[0] = y[0] + 0.3 * (2.0 * PI * y[0]).sin();
        }
        assert!(matches!(decompose_boundary(&s, &b, Interpolation::Trigonometric), Err(Error::Decomposition(_))));
    }

    #[test]
    fn zero_and_normal_velocities() {
        let s = flat(16);
        let h = vec![0.1; 256];
        let tau = TangentialMap::identity(s.grid());
        let fv = tangential_velocity(&s, &vec![[0.0; 3]; 256], &h, &tau, Interpolation::Cubic).unwrap();
        assert!(fv.u_tau.iter().flatten().all(|v| *v == 0.0) && fv.h_t.iter().all(|v| *v == 0.0));
        let fv = tangential_velocity(&s, &vec![[0.0, 0.0, 2.0]; 256], &h, &tau, Interpolation::Cubic).unwrap();
        assert!(fv.u_tau.iter().flatten().all(|v| *v == 0.0) && fv.h_t.iter().all(|v| *v == 2.0));
        let up = advance_height(&s, &vec![0.0; 256], &tau, &vec![[0.0, 0.0, 1.0]; 256], 0.01).unwrap();
        assert!(up.iter().all(|v| (v - 0.01).abs() < 1e-15));
        let side = advance_height(&s, &h, &tau, &vec![[0.3, -0.2, 0.0]; 256], 0.01).unwrap();
        assert!(side.iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    fn advect_errors(dt: f64) -> (f64, f64) {
        let s = bumpy(32, Backend::Spectral);
        let g = *s.grid();
        let h = random_h(&s, 6, 0.04);
        let tau = random_tau(&s, 7, 0.015);
        let m = Interpolation::Trigonometric;
        let b = recompose(&s, &h, &tau, m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<V3> = {
            let c: [Vec<f64>; 3] = std::array::from_fn(|_| smooth_field(&g, &mut rng, 2, 2.0, 0.5));
            (0..g.len()).map(|k| [c[0][k], c[1][k], c[2][k]]).collect()
        };
        let moved = BoundaryMap { positions: b.positions.iter().zip(&v).map(|(p, w)| [p[0] + dt * w[0], p[1] + dt * w[1], p[2] + dt * w[2]]).collect() };
        let (h1, t1) = decompose_boundary(&s, &moved, m).unwrap();
        let fv = tangential_velocity(&s, &v, &h, &tau, m).unwrap();
        let t2 = tau.advance(&s, &fv.u_tau, dt).unwrap();
        let et = (0..2).map(|c| t1.displacement()[c].iter().zip(&t2.displacement()[c]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        let u = tubular_components(&s, &h, &tau, &v, m).unwrap();
        let h2 = advance_height(&s, &h, &tau, &u, dt).unwrap();
        let eh = h1.iter().zip(&h2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (et, eh)
    }

    #[test]
    fn factor_velocities_match_redecomposition_to_second_order() {
        let (a1, b1) = advect_errors(2e-3);
        let (a2, b2) = advect_errors(1e-3);
        let rt = (a1 / a2).log2();
        let rh = (b1 / b2).log2();
        assert!((rt - 2.0).abs() < 0.2, "tau order {rt}");
        assert!((rh - 2.0).abs() < 0.2, "h order {rh} ({b1} {b2})");
    }

    #[test]
    fn theta_trivial_cases_and_agreement() {
        let s = flat(16);
        let id = TangentialMap::identity(s.grid());
        let t = theta_factor(&s, &vec![0.0; 256], &id, Interpolation::Trigonometric).unwrap();
        assert!(t.via_metric.iter().chain(&t.via_tangential).all(|v| (v - 1.0).abs() < 1e-13));
        let h0 = random_h(&s, 9, 0.05);
        let t = theta_factor(&s, &h0, &id, Interpolation::Trigonometric).unwrap();
        assert!(t.via_tangential.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let s = bumpy(48, Backend::Spectral);
        let t = theta_factor(&s, &random_h(&s, 10, 0.05), &random_tau(&s, 11, 0.02), Interpolation::Trigonometric).unwrap();
        assert!(t.residual() < 1e-9, "{}", t.residual());
    }

    #[test]
    fn identity_suite_on_identity_map_is_rounding() {
        let s = bumpy(32, Backend::Spectral);
        let h = random_h(&s, 12, 0.05);
        let r = identity_suite(&s, &h, &TangentialMap::identity(s.grid()), Interpolation::Trigonometric).unwrap();
        assert!(r.metric_pullback < 1e-10 && r.det_g < 1e-10 && r.theta < 1e-10, "{r:?}");
        assert!(r.laplacian_symmetry < 1e-12, "{r:?}");
    }

    #[test]
    fn identity_suite_random_pair() {
        let s = bumpy(64, Backend::Spectral);
        let r = identity_suite(&s, &random_h(&s, 13, 0.05), &random_tau(&s, 14, 0.02), Interpolation::Trigonometric).unwrap();
        assert!(r.metric_pullback < 1e-8 && r.det_g < 1e-8 && r.theta < 1e-8, "{r:?}");
        assert!(r.curvature_invariance < 1e-8 && r.laplacian_symmetry < 1e-6, "{r:?}");
    }

    #[test]
    fn resampler_inverts_composition() {
        let s = flat(32);
        let tau = random_tau(&s, 15, 0.02);
        let f = random_h(&s, 16, 1.0);
        let fc = compose(&s, &f, &tau, Interpolation::Trigonometric);
        let back = tau.resampler(&s).unwrap().apply(&fc);
        let e = back.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(e < 2e-3, "{e}");
    }
}
