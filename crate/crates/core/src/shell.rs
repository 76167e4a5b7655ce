//! Shell as a graph `z = h(y)` in tubular coordinates: curvatures, the bending
//! tensor, the traction operator `L(h)`, energies and the linearized operator.
//!
//! Curvature conventions: `H` is the trace of the shape operator, `H = div n`,
//! positive on the top of a bump. With `E_ben = 1/2 int H^2 dS` the first
//! variation under a normal speed `V` is
//! `int (-(Delta H + H^3/2 - 2 H K)) V dS`, and the area gives `int H V dS`.
//! `L = -(Delta H + H^3/2 - 2 H K) + (gamma/sigma) H` is therefore the
//! `L^2(dS)` gradient of `E_ben + (gamma/sigma) Area`.

use serde::{Deserialize, Serialize};

use crate::backend::multi_indices;
use crate::error::{Error, Result};
use crate::geometry::{christoffel_from, ReferenceSurface};
use crate::jet::Jet;
use crate::mat::{self, M2, V3};

/// `A[a][b][c][d]` for `A^{abcd}`.
pub type Tensor4 = [[[[f64; 2]; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellParams {
    /// Bending modulus on `H^2`.
    pub sigma: f64,
    /// Surface tension.
    pub gamma: f64,
    /// Coefficient of the Gaussian curvature term; it has no traction on a closed chart.
    #[serde(default)]
    pub sigma_k: f64,
}

impl ShellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.gamma >= 0.0) || !self.sigma_k.is_finite() {
            return Err(Error::Config(format!("shell parameters need sigma > 0 and gamma >= 0, got sigma {} gamma {}", self.sigma, self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureForm {
    Divergence,
    Quasilinear,
}

type JM = [[Jet; 2]; 2];

fn jsym(a: Jet, b: Jet, c: Jet) -> JM {
    [[a, b], [b, c]]
}

fn jmul(a: &JM, b: &JM) -> JM {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

fn jdet(a: &JM) -> Jet {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

fn jinv(a: &JM) -> JM {
    let r = jdet(a).recip();
    [[a[1][1] * r, -(a[0][1] * r)], [-(a[1][0] * r), a[0][0] * r]]
}

fn jmap(a: &JM, f: impl Fn(&Jet) -> Jet) -> JM {
    std::array::from_fn(|i| std::array::from_fn(|j| f(&a[i][j])))
}

fn jdiff(a: &JM, dir: usize) -> JM {
    jmap(a, |x| x.diff(dir))
}

fn jtrunc(a: &JM, d: usize) -> JM {
    jmap(a, |x| x.truncate(d))
}

/// Pointwise shell geometry computed from truncated Taylor expansions.
#[derive(Debug, Clone, Copy)]
pub struct NodeShell {
    /// Mean curvature (trace convention).
    pub h_mean: f64,
    pub gauss: f64,
    /// `-(Delta_g H + H^3/2 - 2 H K)`.
    pub l_ben: f64,
    pub j: f64,
    pub sqrt_det_gh: f64,
    /// `sqrt det` of the induced metric, the chart density of `dS`.
    pub area_density: f64,
}

struct NodeJets {
    h_mean: Jet,
    gauss: Jet,
    cal_inv: JM,
    sqrt_cal: Jet,
    j: Jet,
    sqrt_det_gh: f64,
}

fn node_jets(surface: &ReferenceSurface, k: usize, h: &Jet) -> Result<NodeJets> {
    let sj = surface.jets(k);
    let g0 = jsym(sj[0], sj[1], sj[2]);
    let c = jsym(sj[3], sj[4], sj[5]);
    let g0i = jinv(&g0);
    let q = jmul(&c, &jmul(&g0i, &c));
    let z3 = h.truncate(3);
    let z2 = h.truncate(2);
    let p: [Jet; 2] = [h.diff(0), h.diff(1)];
    let zz = z3 * z3;
    let g: JM = std::array::from_fn(|i| std::array::from_fn(|j| g0[i][j] - c[i][j] * z3 * 2.0 + q[i][j] * zz));
    let det_g = jdet(&g);
    if !(det_g.value() > 0.0) {
        return Err(Error::Degeneracy { node: k, what: "G_h not positive".into() });
    }
    let gi = jinv(&g);
    let zz2 = z2 * z2;
    let dgy: [JM; 2] = std::array::from_fn(|d| {
        let (dg0, dc, dq) = (jdiff(&g0, d), jdiff(&c, d), jdiff(&q, d));
        std::array::from_fn(|i| std::array::from_fn(|j| dg0[i][j] - dc[i][j] * z2 * 2.0 + dq[i][j] * zz2))
    });
    let q2 = jtrunc(&q, 2);
    let c2 = jtrunc(&c, 2);
    let dgz: JM = std::array::from_fn(|i| std::array::from_fn(|j| (q2[i][j] * z2 - c2[i][j]) * 2.0));

    // unit normal n^a = -(G^-1 p)^a / J, n^z = 1 / J
    let gip: [Jet; 2] = [gi[0][0] * p[0] + gi[0][1] * p[1], gi[1][0] * p[0] + gi[1][1] * p[1]];
    let j2 = gip[0] * p[0] + gip[1] * p[1] + 1.0;
    let jinv_ = j2.powf(-0.5);
    let nv: [Jet; 3] = [-(gip[0] * jinv_), -(gip[1] * jinv_), jinv_];
    let dn: [[Jet; 3]; 2] = std::array::from_fn(|a| std::array::from_fn(|i| nv[i].diff(a)));

    // Christoffel symbols of diag(G, 1) along the graph
    let gi2 = jtrunc(&gi, 2);
    let dg = |l: usize, i: usize, jj: usize| -> Option<Jet> {
        if i == 2 || jj == 2 {
            None
        } else if l < 2 {
            Some(dgy[l][i][jj])
        } else {
            Some(dgz[i][jj])
        }
    };
    let zero = Jet::constant(0.0, 2);
    let mut gam = [[[zero; 3]; 3]; 3];
    for kk in 0..3 {
        for i in 0..3 {
            for jj in i..3 {
                let mut s = zero;
                for l in 0..3 {
                    let gkl = match (kk, l) {
                        (2, 2) => Some(Jet::constant(1.0, 2)),
                        (2, _) | (_, 2) => None,
                        _ => Some(gi2[kk][l]),
                    };
                    if let Some(gkl) = gkl {
                        let mut t = zero;
                        if let Some(v) = dg(i, jj, l) {
                            t = t + v;
                        }
                        if let Some(v) = dg(jj, i, l) {
                            t = t + v;
                        }
                        if let Some(v) = dg(l, i, jj) {
                            t = t - v;
                        }
                        s = s + gkl * t;
                    }
                }
                gam[kk][i][jj] = s * 0.5;
                gam[kk][jj][i] = s * 0.5;
            }
        }
    }
    let p2 = [p[0].truncate(2), p[1].truncate(2)];
    let one = Jet::constant(1.0, 2);
    let phi: [[Jet; 3]; 2] = [[one, zero, p2[0]], [zero, one, p2[1]]];
    let n2: [Jet; 3] = std::array::from_fn(|i| nv[i].truncate(2));
    // covariant derivative of n along the graph tangents
    let cov: [[Jet; 3]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|kk| {
            let mut s = dn[a][kk];
            for i in 0..3 {
                for jj in 0..3 {
                    s = s + gam[kk][i][jj] * phi[a][i] * n2[jj];
                }
            }
            s
        })
    });
    let g2 = jtrunc(&g, 2);
    let b: JM = std::array::from_fn(|a| std::array::from_fn(|bb| g2[bb][0] * cov[a][0] + g2[bb][1] * cov[a][1] + cov[a][2] * p2[bb]));
    let bs = jsym(b[0][0], (b[0][1] + b[1][0]) * 0.5, b[1][1]);
    let cal: JM = std::array::from_fn(|i| std::array::from_fn(|jj| g2[i][jj] + p2[i] * p2[jj]));
    let cal_inv = jinv(&cal);
    let det_cal = jdet(&cal);
    let h_mean = cal_inv[0][0] * bs[0][0] + cal_inv[0][1] * bs[1][0] + cal_inv[1][0] * bs[0][1] + cal_inv[1][1] * bs[1][1];
    let gauss = jdet(&bs) * det_cal.recip();
    Ok(NodeJets { h_mean, gauss, cal_inv, sqrt_cal: det_cal.sqrt(), j: j2.truncate(2).sqrt(), sqrt_det_gh: det_g.value().sqrt() })
}

fn finish(nj: &NodeJets) -> NodeShell {
    let h = nj.h_mean;
    let dh = [h.diff(0), h.diff(1)];
    let s1 = nj.sqrt_cal.truncate(1);
    let ci = jtrunc(&nj.cal_inv, 1);
    let flux: [Jet; 2] = std::array::from_fn(|a| (ci[a][0] * dh[0] + ci[a][1] * dh[1]) * s1);
    let lap = (flux[0].diff(0).value() + flux[1].diff(1).value()) / nj.sqrt_cal.value();
    let hv = h.value();
    let kv = nj.gauss.value();
    NodeShell {
        h_mean: hv,
        gauss: kv,
        l_ben: -(lap + 0.5 * hv * hv * hv - 2.0 * hv * kv),
        j: nj.j.value(),
        sqrt_det_gh: nj.sqrt_det_gh,
        area_density: nj.sqrt_cal.value(),
    }
}

/// Degree four jets of `h` at every node from backend derivatives.
pub fn height_jets(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<Jet>> {
    surface.check_height(h)?;
    let orders = multi_indices(4);
    let d = surface.diff().many(h, &orders);
    Ok((0..h.len())
        .map(|k| {
            Jet::from_derivs(4, |a, b| {
                let pos = orders.iter().position(|&o| o == (a as u32, b as u32)).expect("order");
                d[pos][k]
            })
        })
        .collect())
}

/// Curvatures, `L_ben`, Jacobian and area density at every node.
pub fn shell_fields(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<NodeShell>> {
    let jets = height_jets(surface, h)?;
    jets.iter().enumerate().map(|(k, hj)| Ok(finish(&node_jets(surface, k, hj)?))).collect()
}

pub fn jacobian_jh(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<f64>> {
    surface.check_height(h)?;
    let grad = surface.diff().gradient(h);
    (0..h.len())
        .map(|k| {
            let g = surface.metric_point(k, h[k]);
            let gi = mat::inv2(&g).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_h".into() })?;
            let p = [grad[0][k], grad[1][k]];
            let q = mat::mv2(&gi, p);
            Ok((1.0 + p[0] * q[0] + p[1] * q[1]).sqrt())
        })
        .collect()
}

/// Unit normal of the graph in tubular components `(n^1, n^2, n^z)`.
pub fn unit_normal(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<V3>> {
    surface.check_height(h)?;
    let grad = surface.diff().gradient(h);
    (0..h.len())
        .map(|k| {
            let g = surface.metric_point(k, h[k]);
            let gi = mat::inv2(&g).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_h".into() })?;
            let p = [grad[0][k], grad[1][k]];
            let q = mat::mv2(&gi, p);
            let j = (1.0 + p[0] * q[0] + p[1] * q[1]).sqrt();
            Ok([-q[0] / j, -q[1] / j, 1.0 / j])
        })
        .collect()
}

/// Mean curvature on the grid by the divergence or the quasilinear form.
///
/// The divergence form extends `n` constantly in z. Since `|n|_G` then varies off
/// the graph on a curved reference, the term `-J/2 (d_z G)(n, n)` restores the
/// surface divergence; it vanishes on a flat reference.
pub fn mean_curvature(surface: &ReferenceSurface, h: &[f64], form: CurvatureForm) -> Result<Vec<f64>> {
    surface.check_height(h)?;
    let d = surface.diff();
    let n = h.len();
    let grad = d.gradient(h);
    let mut lower = vec![0.0; n];
    let mut flux = [vec![0.0; n], vec![0.0; n]];
    let mut quasi = vec![0.0; n];
    let second = match form {
        CurvatureForm::Quasilinear => Some([d.d(h, 2, 0), d.d(h, 1, 1), d.d(h, 0, 2)]),
        CurvatureForm::Divergence => None,
    };
    for k in 0..n {
        let z = h[k];
        let g = surface.metric_point(k, z);
        let gi = mat::inv2(&g).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_h".into() })?;
        let dgy = [surface.metric_dy(k, z, 0), surface.metric_dy(k, z, 1)];
        let dgz = surface.metric_dz(k, z);
        let gam = christoffel_from(&gi, dgy, dgz);
        let p = [grad[0][k], grad[1][k]];
        let q = mat::mv2(&gi, p);
        let j = (1.0 + p[0] * q[0] + p[1] * q[1]).sqrt();
        let tr = |i: usize| -> f64 { (0..3).map(|jj| gam[jj][jj][i]).sum() };
        let nvec = [-q[0] / j, -q[1] / j];
        let mut corr = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                corr += -0.5 * j * dgz[a][b] * nvec[a] * nvec[b];
            }
        }
        lower[k] = (-(q[0] * tr(0) + q[1] * tr(1)) + tr(2)) / j + corr;
        flux[0][k] = q[0] / j;
        flux[1][k] = q[1] / j;
        if let Some(s) = &second {
            let hh: M2 = [[s[0][k], s[1][k]], [s[1][k], s[2][k]]];
            // total derivatives of G^{-1}(y, h(y)) along y
            let dgi: [M2; 2] = std::array::from_fn(|dd| {
                let tot = mat::add2(&dgy[dd], &dgz, p[dd]);
                mat::mul2(&gi, &mat::mul2(&tot, &gi)).map(|r| r.map(|v| -v))
            });
            let mut principal = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    principal -= gi[a][b] * hh[a][b] / j;
                }
            }
            let mut rest = 0.0;
            for dd in 0..2 {
                let dj2 = 2.0 * (hh[0][dd] * q[0] + hh[1][dd] * q[1]) + (0..2).map(|a| (0..2).map(|b| p[a] * dgi[dd][a][b] * p[b]).sum::<f64>()).sum::<f64>();
                let djinv = -0.5 * dj2 / (j * j * j);
                for c in 0..2 {
                    rest -= p[c] * (gi[c][dd] * djinv + dgi[dd][c][dd] / j);
                }
            }
            quasi[k] = principal + rest;
        }
    }
    Ok(match form {
        CurvatureForm::Divergence => {
            let d0 = d.d1(&flux[0], 0);
            let d1 = d.d1(&flux[1], 1);
            (0..n).map(|k| -(d0[k] + d1[k]) + lower[k]).collect()
        }
        CurvatureForm::Quasilinear => (0..n).map(|k| quasi[k] + lower[k]).collect(),
    })
}

/// Gauss curvature, the determinant of the shape operator on graph tangents.
pub fn gauss_curvature(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<f64>> {
    Ok(shell_fields(surface, h)?.iter().map(|s| s.gauss).collect())
}

/// Bending tensor `A^{abcd} = Ginv_cal^{ac} a^{bd}`, times `sqrt det G_h` when linearized.
///
/// `Ginv_cal = J^-2 [G_h^-1 + adj(dh dh^T) / det G_h]` is the inverse induced metric and
/// `a = J^-1 (G_h^-1 - J^-2 G_h^-1 dh dh^T G_h^-1)`.
pub fn bending_tensor_a(surface: &ReferenceSurface, h: &[f64], linearized: bool) -> Result<Vec<Tensor4>> {
    surface.check_height(h)?;
    let grad = surface.diff().gradient(h);
    (0..h.len())
        .map(|k| {
            let g = surface.metric_point(k, h[k]);
            let det = mat::det2(&g);
            let gi = mat::inv2(&g).ok_or_else(|| Error::Degeneracy { node: k, what: "singular G_h".into() })?;
            let p = [grad[0][k], grad[1][k]];
            let q = mat::mv2(&gi, p);
            let j2 = 1.0 + p[0] * q[0] + p[1] * q[1];
            let j = j2.sqrt();
            let adj = [[p[1] * p[1], -p[0] * p[1]], [-p[0] * p[1], p[0] * p[0]]];
            let cinv = mat::add2(&gi, &adj, 1.0 / det).map(|r| r.map(|v| v / j2));
            let mut a = [[0.0; 2]; 2];
            for b in 0..2 {
                for d in 0..2 {
                    a[b][d] = (gi[b][d] - q[b] * q[d] / j2) / j;
                }
            }
            let w = if linearized { det.sqrt() } else { 1.0 };
            let mut t = [[[[0.0; 2]; 2]; 2]; 2];
            for i in 0..2 {
                for jj in 0..2 {
                    for c in 0..2 {
                        for d in 0..2 {
                            t[i][jj][c][d] = w * cinv[i][c] * a[jj][d];
                        }
                    }
                }
            }
            Ok(t)
        })
        .collect()
}

/// `L(h)` with the membrane term, so `sigma L` is the gradient of `sigma E_ben + gamma Area`.
pub fn shell_operator_l(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<Vec<f64>> {
    params.validate()?;
    let r = params.gamma / params.sigma;
    Ok(shell_fields(surface, h)?.iter().map(|s| s.l_ben + r * s.h_mean).collect())
}

/// Decomposition `L = P + L1 . D^3 h + L2` at every node.
#[derive(Debug, Clone)]
pub struct ShellSplit {
    /// Divergence form principal part with the tensor `A`.
    pub principal: Vec<f64>,
    /// Coefficients of `(h_111, h_112, h_122, h_222)`.
    pub l1: Vec<[f64; 4]>,
    pub l2: Vec<f64>,
    pub third: Vec<[f64; 4]>,
}

const THIRD: [(usize, usize); 4] = [(3, 0), (2, 1), (1, 2), (0, 3)];

fn principal_node(surface: &ReferenceSurface, k: usize, h: &Jet, nj: &NodeJets) -> f64 {
    let sj = surface.jets(k);
    let sg0 = (sj[0] * sj[2] - sj[1] * sj[1]).truncate(2).sqrt();
    let jinv_ = nj.j.recip();
    let hh: JM = std::array::from_fn(|a| std::array::from_fn(|b| h.diff(a).diff(b)));
    let ci = &nj.cal_inv;
    let mut out = 0.0;
    for c in 0..2 {
        for d in 0..2 {
            let mut inner = Jet::constant(0.0, 2);
            for a in 0..2 {
                for b in 0..2 {
                    inner = inner + ci[a][c] * ci[b][d] * hh[a][b];
                }
            }
            let inner = inner * jinv_ * sg0;
            out += inner.diff(c).diff(d).value();
        }
    }
    out / sg0.value()
}

pub fn shell_split(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<ShellSplit> {
    params.validate()?;
    let r = params.gamma / params.sigma;
    let jets = height_jets(surface, h)?;
    let n = h.len();
    let mut out = ShellSplit { principal: vec![0.0; n], l1: vec![[0.0; 4]; n], l2: vec![0.0; n], third: vec![[0.0; 4]; n] };
    for (k, hj) in jets.iter().enumerate() {
        let rem = |jet: &Jet| -> Result<(f64, f64)> {
            let nj = node_jets(surface, k, jet)?;
            let s = finish(&nj);
            let p = principal_node(surface, k, jet, &nj);
            Ok((s.l_ben + r * s.h_mean - p, p))
        };
        let (r0, p0) = rem(hj)?;
        out.principal[k] = p0;
        let mut flat3 = *hj;
        for (c, &(a, b)) in THIRD.iter().enumerate() {
            out.third[k][c] = hj.deriv_at(a, b);
            flat3.set_deriv(a, b, 0.0);
        }
        let (base, _) = rem(&flat3)?;
        out.l2[k] = base;
        for (c, &(a, b)) in THIRD.iter().enumerate() {
            let mut e = flat3;
            e.set_deriv(a, b, 1.0);
            out.l1[k][c] = rem(&e)?.0 - base;
        }
        let _ = r0;
    }
    Ok(out)
}

/// `(1/sqrt g0) D_cd (sqrt g0 A~^{abcd} D_ab h)`, self-adjoint in the `sqrt g0` weight.
pub fn linearized_operator(surface: &ReferenceSurface, htilde: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let a = bending_tensor_a(surface, htilde, true)?;
    apply_bending(surface, &a, h)
}

pub fn apply_bending(surface: &ReferenceSurface, a: &[Tensor4], h: &[f64]) -> Result<Vec<f64>> {
    surface.grid().check("h", h)?;
    let d = surface.diff();
    let n = h.len();
    let sg0 = surface.sqrt_det_g0();
    let hd = [d.d(h, 2, 0), d.d(h, 1, 1), d.d(h, 0, 2)];
    let comp = |a: usize, b: usize| -> usize { a + b };
    let mut inner = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..n {
        for c in 0..2 {
            for dd in 0..2 {
                let mut s = 0.0;
                for x in 0..2 {
                    for y in 0..2 {
                        s += a[k][x][y][c][dd] * hd[comp(x, y)][k];
                    }
                }
                inner[c * 2 + dd][k] = sg0[k] * s;
            }
        }
    }
    let t11 = d.d(&inner[0], 2, 0);
    let t12 = d.d(&inner[1].iter().zip(&inner[2]).map(|(x, y)| x + y).collect::<Vec<_>>(), 1, 1);
    let t22 = d.d(&inner[3], 0, 2);
    Ok((0..n).map(|k| (t11[k] + t12[k] + t22[k]) / sg0[k]).collect())
}

/// Lower order remainder `M(h~) = sqrt det G_h~ L(h~) - sqrt g0 Lin_h~(h~)`, a chart density.
pub fn lower_order_m(surface: &ReferenceSurface, htilde: &[f64], params: &ShellParams) -> Result<Vec<f64>> {
    let l = shell_operator_l(surface, htilde, params)?;
    let lin = linearized_operator(surface, htilde, htilde)?;
    let sg0 = surface.sqrt_det_g0();
    let sgh: Vec<f64> = (0..htilde.len()).map(|k| mat::det2(&surface.metric_point(k, htilde[k])).sqrt()).collect();
    Ok((0..htilde.len()).map(|k| sgh[k] * l[k] - sg0[k] * lin[k]).collect())
}

/// `-sigma L_ben n`, the bending traction on the fluid in tubular components.
pub fn bending_traction(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<Vec<V3>> {
    let f = shell_fields(surface, h)?;
    let n = unit_normal(surface, h)?;
    Ok(f.iter().zip(&n).map(|(s, nv)| nv.map(|c| -params.sigma * s.l_ben * c)).collect())
}

/// `-gamma H n`, the tension traction on the fluid.
pub fn membrane_traction(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<Vec<V3>> {
    let f = shell_fields(surface, h)?;
    let n = unit_normal(surface, h)?;
    Ok(f.iter().zip(&n).map(|(s, nv)| nv.map(|c| -params.gamma * s.h_mean * c)).collect())
}

/// `1/2 int H^2 dS`.
pub fn bending_energy(surface: &ReferenceSurface, h: &[f64]) -> Result<f64> {
    let f = shell_fields(surface, h)?;
    Ok(surface.grid().cell_area() * f.iter().map(|s| 0.5 * s.h_mean * s.h_mean * s.area_density).sum::<f64>())
}

/// `sigma/2 int H^2 dS + sigma_k int K dS`.
pub fn willmore_energy(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<f64> {
    let f = shell_fields(surface, h)?;
    let w = surface.grid().cell_area();
    Ok(w * f.iter().map(|s| (0.5 * params.sigma * s.h_mean * s.h_mean + params.sigma_k * s.gauss) * s.area_density).sum::<f64>())
}

/// Area of the graph, `int sqrt(det G_h) J dy`.
pub fn area(surface: &ReferenceSurface, h: &[f64]) -> Result<f64> {
    let j = jacobian_jh(surface, h)?;
    let w = surface.grid().cell_area();
    Ok(w * (0..h.len()).map(|k| mat::det2(&surface.metric_point(k, h[k])).sqrt() * j[k]).sum::<f64>())
}

pub fn membrane_energy(surface: &ReferenceSurface, h: &[f64], params: &ShellParams) -> Result<f64> {
    Ok(params.gamma * area(surface, h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use crate::geometry::ProfileMode;
    use crate::grid::Grid2;
    use crate::random::smooth_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flat(n: usize, be: Backend) -> ReferenceSurface {
        ReferenceSurface::flat(Grid2::unit(n).unwrap(), be, 1.0).unwrap()
    }

    fn bumpy(n: usize, be: Backend) -> ReferenceSurface {
        let modes = vec![ProfileMode { m1: 1, m2: 0, cos: 0.02, sin: 0.01 }, ProfileMode { m1: 1, m2: 1, cos: -0.015, sin: 0.0 }];
        ReferenceSurface::graph(Grid2::unit(n).unwrap(), be, modes, 0.3).unwrap()
    }

    fn rand_h(g: &Grid2, seed: u64, amp: f64) -> Vec<f64> {
        smooth_field(g, &mut ChaCha8Rng::seed_from_u64(seed), 3, 3.0, amp)
    }

    const P: ShellParams = ShellParams { sigma: 1.0, gamma: 0.1, sigma_k: 0.0 };

    #[test]
    fn jacobian_and_normal_of_linear_height() {
        // a periodic chart admits only periodic h; a tilted plane is tested pointwise
        let s = flat(16, Backend::Spectral);
        let h = vec![0.2; 256];
        assert!(jacobian_jh(&s, &h).unwrap().iter().all(|j| (j - 1.0).abs() < 1e-15));
        let n = unit_normal(&s, &h).unwrap();
        assert!(n.iter().all(|v| v[0].abs() < 1e-15 && (v[2] - 1.0).abs() < 1e-15));
        let hj = Jet::from_derivs(4, |a, b| match (a, b) {
            (1, 0) => 0.3,
            (0, 1) => -0.4,
            _ => 0.0,
        });
        let nj = node_jets(&s, 0, &hj).unwrap();
        assert!((nj.j.value() - 1.25f64.sqrt()).abs() < 1e-14);
        assert!(nj.h_mean.value().abs() < 1e-14 && nj.gauss.value().abs() < 1e-14);
    }

    #[test]
    fn normal_is_unit_and_orthogonal_to_graph() {
        let s = bumpy(32, Backend::Spectral);
        let h = rand_h(s.grid(), 1, 0.05);
        let n = unit_normal(&s, &h).unwrap();
        let grad = s.diff().gradient(&h);
        for k in (0..h.len()).step_by(13) {
            let g = s.metric_point(k, h[k]);
            let gn = n[k][0] * (g[0][0] * n[k][0] + g[0][1] * n[k][1]) + n[k][1] * (g[1][0] * n[k][0] + g[1][1] * n[k][1]) + n[k][2] * n[k][2];
            assert!((gn - 1.0).abs() < 1e-10);
            for a in 0..2 {
                let t = [if a == 0 { 1.0 } else { 0.0 }, if a == 1 { 1.0 } else { 0.0 }, grad[a][k]];
                let ip = t[0] * (g[0][0] * n[k][0] + g[0][1] * n[k][1]) + t[1] * (g[1][0] * n[k][0] + g[1][1] * n[k][1]) + t[2] * n[k][2];
                assert!(ip.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_height_gives_base_curvature() {
        let s = bumpy(32, Backend::Spectral);
        let h = vec![0.0; 1024];
        let hd = mean_curvature(&s, &h, CurvatureForm::Divergence).unwrap();
        for k in (0..1024).step_by(31) {
            let gam = s.christoffel_point(k, 0.0).unwrap();
            let want: f64 = (0..3).map(|j| gam[j][j][2]).sum();
            assert!((hd[k] - want).abs() < 1e-12);
        }
        let f = flat(16, Backend::FiniteDifference);
        assert!(mean_curvature(&f, &vec![0.0; 256], CurvatureForm::Quasilinear).unwrap().iter().all(|v| *v == 0.0));
        assert!(shell_operator_l(&f, &vec![0.0; 256], &P).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn curvature_of_bump_matches_classical_graph_formula() {
        // oracle: -div(grad h / sqrt(1 + |grad h|^2)) with analytic derivatives
        let n = 64;
        let s = flat(n, Backend::Spectral);
        let g = *s.grid();
        let a = 0.05;
        let h = g.sample(|x, y| a * (2.0 * PI * x).cos() * (2.0 * PI * y).cos());
        let w = 2.0 * PI;
        let oracle = |x: f64, y: f64| {
            let hx = -a * w * (w * x).sin() * (w * y).cos();
            let hy = -a * w * (w * x).cos() * (w * y).sin();
            let hxx = -a * w * w * (w * x).cos() * (w * y).cos();
            let hyy = hxx;
            let hxy = a * w * w * (w * x).sin() * (w * y).sin();
            let q = 1.0 + hx * hx + hy * hy;
            -((1.0 + hy * hy) * hxx - 2.0 * hx * hy * hxy + (1.0 + hx * hx) * hyy) / q.powf(1.5)
        };
        let hd = mean_curvature(&s, &h, CurvatureForm::Divergence).unwrap();
        let hq = mean_curvature(&s, &h, CurvatureForm::Quasilinear).unwrap();
        let hj = shell_fields(&s, &h).unwrap();
        for k in 0..g.len() {
            let p = g.point(k);
            let o = oracle(p[0], p[1]);
            assert!((hd[k] - o).abs() < 1e-9, "{} {}", hd[k], o);
            assert!((hq[k] - o).abs() < 1e-9);
            assert!((hj[k].h_mean - o).abs() < 1e-9);
        }
        // at the critical point (0,0) the value is -Lap h
        assert!((hd[0] - 2.0 * a * w * w).abs() < 1e-9);
    }

    #[test]
    fn three_curvature_routes_agree_on_curved_reference() {
        let s = bumpy(64, Backend::Spectral);
        let h = rand_h(s.grid(), 7, 0.04);
        let hd = mean_curvature(&s, &h, CurvatureForm::Divergence).unwrap();
        let hq = mean_curvature(&s, &h, CurvatureForm::Quasilinear).unwrap();
        let hj = shell_fields(&s, &h).unwrap();
        let scale = hd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..h.len() {
            assert!((hd[k] - hq[k]).abs() < 1e-8 * scale);
            assert!((hd[k] - hj[k].h_mean).abs() < 1e-8 * scale, "{k} {} {}", hd[k], hj[k].h_mean);
        }
    }

    fn form_gap(n: usize) -> f64 {
        let s = bumpy(n, Backend::FiniteDifference);
        let g = *s.grid();
        let h = g.sample(|x, y| 0.05 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.02 * (4.0 * PI * y).cos());
        let hd = mean_curvature(&s, &h, CurvatureForm::Divergence).unwrap();
        let hq = mean_curvature(&s, &h, CurvatureForm::Quasilinear).unwrap();
        hd.iter().zip(&hq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn divergence_and_quasilinear_forms_converge() {
        let (e1, e2, e3) = (form_gap(32), form_gap(64), form_gap(128));
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(r1 >= 1.8 && r2 >= 1.8, "rates {r1} {r2}");
    }

    #[test]
    fn gauss_bonnet_on_periodic_chart() {
        let s = flat(64, Backend::Spectral);
        let h = rand_h(s.grid(), 3, 0.05);
        let f = shell_fields(&s, &h).unwrap();
        let total: f64 = f.iter().map(|x| x.gauss * x.area_density).sum::<f64>() * s.grid().cell_area();
        let scale: f64 = f.iter().map(|x| x.gauss.abs() * x.area_density).sum::<f64>() * s.grid().cell_area();
        assert!(total.abs() < 1e-10 * scale.max(1.0), "{total}");
    }

    #[test]
    fn bending_tensor_matches_induced_metric_form() {
        // A = J^-1 Ginv_cal (x) Ginv_cal with Ginv_cal from a direct 2x2 inverse
        let s = bumpy(32, Backend::Spectral);
        let h = rand_h(s.grid(), 5, 0.05);
        let a = bending_tensor_a(&s, &h, false).unwrap();
        let grad = s.diff().gradient(&h);
        for k in (0..h.len()).step_by(17) {
            let g = s.metric_point(k, h[k]);
            let p = [grad[0][k], grad[1][k]];
            let cal = [[g[0][0] + p[0] * p[0], g[0][1] + p[0] * p[1]], [g[1][0] + p[1] * p[0], g[1][1] + p[1] * p[1]]];
            let ci = mat::inv2(&cal).unwrap();
            let j = (mat::det2(&cal) / mat::det2(&g)).sqrt();
            for x in 0..2 {
                for y in 0..2 {
                    for z in 0..2 {
                        for w in 0..2 {
                            assert!((a[k][x][y][z][w] - ci[x][z] * ci[y][w] / j).abs() < 1e-13);
                        }
                    }
                }
            }
        }
        let f = flat(8, Backend::Spectral);
        let a0 = bending_tensor_a(&f, &vec![0.0; 64], true).unwrap();
        assert_eq!(a0[0][0][1][0][1], 1.0);
        assert_eq!(a0[0][0][1][1][0], 0.0);
    }

    #[test]
    fn l_linearizes_to_bilaplacian() {
        let s = flat(32, Backend::Spectral);
        let g = *s.grid();
        let base = g.sample(|x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let bilap = s.diff().fft().multiply(&base, |k1, k2, n1, n2| {
            let z = if n1 || n2 { 0.0 } else { (k1 * k1 + k2 * k2).powi(2) };
            num_complex::Complex64::new(z, 0.0)
        });
        let p0 = ShellParams { sigma: 1.0, gamma: 0.0, sigma_k: 0.0 };
        let mut last = f64::INFINITY;
        for amp in [1e-3, 1e-4] {
            let h: Vec<f64> = base.iter().map(|v| v * amp).collect();
            let l = shell_operator_l(&s, &h, &p0).unwrap();
            let err = l.iter().zip(&bilap).map(|(a, b)| (a - amp * b).abs()).fold(0.0, f64::max) / (amp * bilap.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            assert!(err < 10.0 * amp, "amp {amp} err {err}");
            assert!(err < last);
            last = err;
        }
    }

    fn energy(s: &ReferenceSurface, h: &[f64]) -> f64 {
        P.sigma * bending_energy(s, h).unwrap() + membrane_energy(s, h, &P).unwrap()
    }

    #[test]
    fn traction_is_gradient_of_energy() {
        for s in [flat(32, Backend::Spectral), bumpy(32, Backend::Spectral)] {
            let g = *s.grid();
            let h = rand_h(&g, 11, 0.03);
            let dir = rand_h(&g, 12, 1.0);
            let l = shell_operator_l(&s, &h, &P).unwrap();
            let pairing: f64 = (0..g.len()).map(|k| P.sigma * l[k] * dir[k] * mat::det2(&s.metric_point(k, h[k])).sqrt()).sum::<f64>() * g.cell_area();
            let fd = |e: f64| {
                let hp: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + e * b).collect();
                let hm: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a - e * b).collect();
                (energy(&s, &hp) - energy(&s, &hm)) / (2.0 * e)
            };
            let e = 1e-4;
            let rich = (4.0 * fd(e / 2.0) - fd(e)) / 3.0;
            assert!((rich - pairing).abs() < 1e-6 * pairing.abs().max(1e-3), "{rich} {pairing}");
        }
    }

    #[test]
    fn bending_traction_is_normal_and_variational() {
        let s = flat(32, Backend::Spectral);
        let g = *s.grid();
        let h = rand_h(&g, 21, 0.03);
        let t = bending_traction(&s, &h, &P).unwrap();
        let n = unit_normal(&s, &h).unwrap();
        for (tv, nv) in t.iter().zip(&n) {
            let c = mat::cross3(*tv, *nv);
            assert!(mat::norm3(c) < 1e-10 * (1.0 + mat::norm3(*tv)));
        }
        let dir = rand_h(&g, 22, 1.0);
        let f = shell_fields(&s, &h).unwrap();
        // G(t, n) against the normal speed dir / J, integrated over dS
        let work: f64 = (0..g.len())
            .map(|k| {
                let m = s.metric_point(k, h[k]);
                let tn = t[k][0] * (m[0][0] * n[k][0] + m[0][1] * n[k][1]) + t[k][1] * (m[1][0] * n[k][0] + m[1][1] * n[k][1]) + t[k][2] * n[k][2];
                tn * dir[k] / f[k].j * f[k].area_density
            })
            .sum::<f64>()
            * g.cell_area();
        let e = 1e-4;
        let eb = |x: f64| {
            let hp: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + x * b).collect();
            P.sigma * bending_energy(&s, &hp).unwrap()
        };
        let d1 = (eb(e) - eb(-e)) / (2.0 * e);
        let d2 = (eb(e / 2.0) - eb(-e / 2.0)) / e;
        let rich = (4.0 * d2 - d1) / 3.0;
        assert!((work + rich).abs() < 1e-4 * rich.abs(), "{work} {rich}");
    }

    #[test]
    fn energies_of_trivial_states() {
        let s = flat(16, Backend::FiniteDifference);
        let z = vec![0.0; 256];
        assert_eq!(bending_energy(&s, &z).unwrap(), 0.0);
        assert!((membrane_energy(&s, &z, &P).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn area_matches_induced_metric_density() {
        let s = bumpy(32, Backend::Spectral);
        let h = rand_h(s.grid(), 2, 0.04);
        let a = area(&s, &h).unwrap();
        let f = shell_fields(&s, &h).unwrap();
        let b: f64 = f.iter().map(|x| x.area_density).sum::<f64>() * s.grid().cell_area();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn split_is_affine_in_third_derivatives() {
        let s = bumpy(32, Backend::Spectral);
        let h = rand_h(s.grid(), 9, 0.04);
        let l = shell_operator_l(&s, &h, &P).unwrap();
        let sp = shell_split(&s, &h, &P).unwrap();
        let scale = l.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..h.len() {
            let l1h: f64 = (0..4).map(|c| sp.l1[k][c] * sp.third[k][c]).sum();
            assert!((sp.principal[k] + l1h + sp.l2[k] - l[k]).abs() < 1e-9 * scale);
        }
        let f = flat(16, Backend::Spectral);
        let sp0 = shell_split(&f, &vec![0.0; 256], &P).unwrap();
        assert!(sp0.l1.iter().flatten().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn linearized_operator_is_bilaplacian_and_linear() {
        let s = flat(32, Backend::Spectral);
        let g = *s.grid();
        let f1 = rand_h(&g, 31, 0.1);
        let f2 = rand_h(&g, 32, 0.1);
        let z = vec![0.0; g.len()];
        let l0 = linearized_operator(&s, &z, &f1).unwrap();
        let bl = crate::regularization::bilaplacian(s.diff(), &f1);
        for (a, b) in l0.iter().zip(&bl) {
            assert!((a - b).abs() < 1e-9);
        }
        let ht = rand_h(&g, 33, 0.03);
        let comb: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lc = linearized_operator(&s, &ht, &comb).unwrap();
        let la = linearized_operator(&s, &ht, &f1).unwrap();
        let lb = linearized_operator(&s, &ht, &f2).unwrap();
        let scale = lc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..g.len() {
            assert!((lc[k] - 2.0 * la[k] + 3.0 * lb[k]).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn linearization_consistent_with_nonlinear_operator() {
        // sqrt(g0) Lin_h~(h) + M(h~) approximates sqrt(det G_h) L(h) to first order in h - h~
        let s = flat(32, Backend::Spectral);
        let g = *s.grid();
        let h = rand_h(&g, 41, 0.03);
        let dir = rand_h(&g, 42, 1.0);
        let l = shell_operator_l(&s, &h, &P).unwrap();
        let mut errs = Vec::new();
        for e in [1e-3, 5e-4] {
            let ht: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + e * b).collect();
            let m = lower_order_m(&s, &ht, &P).unwrap();
            let lin = linearized_operator(&s, &ht, &h).unwrap();
            let err = (0..g.len()).map(|k| (lin[k] + m[k] - l[k]).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 0.8, "rate {rate} errs {errs:?}");
    }
}
