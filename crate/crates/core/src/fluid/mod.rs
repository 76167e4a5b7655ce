//! Lagrangian Navier-Stokes on the periodic slab below the shell.
//!
//! Fields live on the nodes of a [`Grid3`]; the flow map is stored as the periodic
//! displacement `eta - x`. Cell quantities (cofactor, pressure) sit at cell centers.

pub mod compat;
pub mod fem;
pub mod precond;
pub mod step;
pub mod system;

use crate::error::{shape_check, Error, Result};
use crate::field_io::{FieldBlock, FieldSet};
use crate::geometry::ReferenceSurface;
use crate::grid::Grid3;
use crate::kinematics::TangentialMap;
use crate::mat::{self, M3, V3};

pub use compat::{compatibility_initial, Compatibility};
pub use step::{FluidContext, Frozen, StepParams, StepReport};

/// `grad eta` at every cell center from the nodal displacement.
pub fn flow_gradient(g: &Grid3, disp: &[V3]) -> Result<Vec<M3>> {
    shape_check("flow map", disp.len(), g.nodes())?;
    let el = fem::Element::new(g.h());
    Ok((0..g.cells())
        .map(|c| {
            let mut f = mat::I3;
            for (a, &n) in g.cell_nodes(c).iter().enumerate() {
                for i in 0..3 {
                    for k in 0..3 {
                        f[i][k] += disp[n][i] * el.center[a][k];
                    }
                }
            }
            f
        })
        .collect())
}

/// `a = (grad eta)^-1` per cell, `a[k][i] = a^k_i`, together with `det grad eta`.
pub fn cofactor(g: &Grid3, disp: &[V3]) -> Result<(Vec<M3>, Vec<f64>)> {
    let f = flow_gradient(g, disp)?;
    let mut a = Vec::with_capacity(f.len());
    let mut det = Vec::with_capacity(f.len());
    for (c, m) in f.iter().enumerate() {
        let d = mat::det3(m);
        if !(d > 0.0) {
            return Err(Error::MeshTangling { cell: c, det: d });
        }
        a.push(mat::inv3(m).ok_or(Error::MeshTangling { cell: c, det: d })?);
        det.push(d);
    }
    Ok((a, det))
}

/// `D_eta(v)[l][i] = a^k_l v^i_,k + a^k_i v^l_,k` per cell center.
pub fn deformation(g: &Grid3, v: &[V3], a: &[M3]) -> Result<Vec<M3>> {
    shape_check("velocity", v.len(), g.nodes())?;
    shape_check("cofactor", a.len(), g.cells())?;
    let el = fem::Element::new(g.h());
    Ok((0..g.cells())
        .map(|c| {
            // gv[i][k] = v^i_,k
            let mut gv = [[0.0; 3]; 3];
            for (n, &nd) in g.cell_nodes(c).iter().enumerate() {
                for i in 0..3 {
                    for k in 0..3 {
                        gv[i][k] += v[nd][i] * el.center[n][k];
                    }
                }
            }
            let mut w = [[0.0; 3]; 3];
            for l in 0..3 {
                for i in 0..3 {
                    w[l][i] = (0..3).map(|k| a[c][k][l] * gv[i][k]).sum();
                }
            }
            std::array::from_fn(|l| std::array::from_fn(|i| w[l][i] + w[i][l]))
        })
        .collect())
}

/// Lagrangian state of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub step: usize,
    /// Nodal velocity; the bottom layer is zero.
    pub v: Vec<V3>,
    /// Cell centered pressure.
    pub q: Vec<f64>,
    /// Displacement `eta - x` of the flow map.
    pub eta: Vec<V3>,
    /// Displacement of the mollified flow map.
    pub eta_bar: Vec<V3>,
    pub h: Vec<f64>,
    pub tau: TangentialMap,
    /// Tangential map driven by the mollified velocity.
    pub tau_bar: TangentialMap,
}

impl FluidState {
    pub fn initial(g: &Grid3, surface: &ReferenceSurface, v: Vec<V3>, h: Vec<f64>) -> Result<Self> {
        shape_check("velocity", v.len(), g.nodes())?;
        shape_check("height", h.len(), g.layer())?;
        surface.check_height(&h).map_err(|e| Error::GraphViolation(e.to_string()))?;
        let mut v = v;
        v[..g.layer()].iter_mut().for_each(|w| *w = [0.0; 3]);
        let tau = TangentialMap::identity(surface.grid());
        Ok(FluidState {
            t: 0.0,
            step: 0,
            v,
            q: vec![0.0; g.cells()],
            eta: vec![[0.0; 3]; g.nodes()],
            eta_bar: vec![[0.0; 3]; g.nodes()],
            h,
            tau: tau.clone(),
            tau_bar: tau,
        })
    }

    /// Velocity of the top layer, the shell nodes.
    pub fn top_velocity<'a>(&'a self, g: &Grid3) -> &'a [V3] {
        &self.v[g.top_offset()..]
    }

    pub fn to_fields(&self, g: &Grid3) -> Result<FieldSet> {
        let mut fs = FieldSet::default();
        fs.meta.insert("t".into(), format!("{:e}", self.t));
        fs.meta.insert("step".into(), self.step.to_string());
        let nd = [g.n1, g.n2, g.n3 + 1];
        let cd = [g.n1, g.n2, g.n3];
        let sd = [g.n1, g.n2, 1];
        let per = [g.l1, g.l2, 0.0];
        let flat = |v: &[V3]| v.iter().flat_map(|w| w.iter().copied()).collect::<Vec<f64>>();
        fs.fields.push(FieldBlock::new("v", nd, 3, per, flat(&self.v))?);
        fs.fields.push(FieldBlock::new("q", cd, 1, per, self.q.clone())?);
        fs.fields.push(FieldBlock::new("eta", nd, 3, per, flat(&self.eta))?);
        fs.fields.push(FieldBlock::new("eta_bar", nd, 3, per, flat(&self.eta_bar))?);
        fs.fields.push(FieldBlock::new("h", sd, 1, per, self.h.clone())?);
        for (name, tau) in [("tau", &self.tau), ("tau_bar", &self.tau_bar)] {
            let d = tau.displacement();
            let data = d[0].iter().zip(&d[1]).flat_map(|(a, b)| [*a, *b]).collect();
            fs.fields.push(FieldBlock::new(name, sd, 2, per, data)?);
        }
        Ok(fs)
    }

    pub fn from_fields(g: &Grid3, surface: &ReferenceSurface, fs: &FieldSet) -> Result<Self> {
        let vec3 = |name: &str| -> Result<Vec<V3>> {
            let b = fs.get(name)?;
            if b.components != 3 || b.dims != [g.n1, g.n2, g.n3 + 1] {
                return Err(Error::Format(format!("field {name} does not match the grid")));
            }
            Ok(b.data.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
        };
        let scalar = |name: &str, len: usize| -> Result<Vec<f64>> {
            let b = fs.get(name)?;
            if b.components != 1 || b.data.len() != len {
                return Err(Error::Format(format!("field {name} does not match the grid")));
            }
            Ok(b.data.clone())
        };
        let map = |name: &str| -> Result<TangentialMap> {
            let b = fs.get(name)?;
            if b.components != 2 || b.data.len() != 2 * g.layer() {
                return Err(Error::Format(format!("field {name} does not match the grid")));
            }
            let d0 = b.data.iter().step_by(2).copied().collect();
            let d1 = b.data.iter().skip(1).step_by(2).copied().collect();
            TangentialMap::from_displacement(surface, [d0, d1])
        };
        Ok(FluidState {
            t: fs.meta_parse("t")?,
            step: fs.meta_parse("step")?,
            v: vec3("v")?,
            q: scalar("q", g.cells())?,
            eta: vec3("eta")?,
            eta_bar: vec3("eta_bar")?,
            h: scalar("h", g.layer())?,
            tau: map("tau")?,
            tau_bar: map("tau_bar")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> Grid3 {
        Grid3::new(6, 5, 4, 1.0, 1.0, 1.0).unwrap()
    }

    fn smooth_disp(g: &Grid3, amp: f64, seed: u64) -> Vec<V3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..9).map(|_| rng.gen_range(-amp..amp)).collect();
        (0..g.nodes())
            .map(|n| {
                let p = g.node_point(n);
                let s = |k: usize| (2.0 * PI * p[0] + c[k]).sin() * (2.0 * PI * p[1]).cos() * p[2];
                [c[0] * s(3), c[1] * s(4), c[2] * s(5)]
            })
            .collect()
    }

    #[test]
    fn identity_and_rotation() {
        let g = grid();
        let (a, det) = cofactor(&g, &vec![[0.0; 3]; g.nodes()]).unwrap();
        assert!(a.iter().all(|m| *m == mat::I3));
        assert!(det.iter().all(|d| *d == 1.0));
        // a rotation about z is not periodic, so test the cell formula on a rotated linear map
        let r = [[0.6, -0.8, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 1.0]];
        let el = fem::Element::new(g.h());
        let nodes = g.cell_nodes(0);
        let mut f = mat::I3;
        for (a, &n) in nodes.iter().enumerate() {
            let p = g.node_point(n);
            let d: V3 = std::array::from_fn(|i| (0..3).map(|k| r[i][k] * p[k]).sum::<f64>() - p[i]);
            for i in 0..3 {
                for k in 0..3 {
                    f[i][k] += d[i] * el.center[a][k];
                }
            }
        }
        let inv = mat::inv3(&f).unwrap();
        let rt = mat::transpose3(&r);
        for i in 0..3 {
            for k in 0..3 {
                assert!((inv[i][k] - rt[i][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cofactor_matches_adjugate_over_determinant() {
        let g = grid();
        let disp = smooth_disp(&g, 0.05, 3);
        let f = flow_gradient(&g, &disp).unwrap();
        let (a, det) = cofactor(&g, &disp).unwrap();
        for c in 0..g.cells() {
            // adjugate by explicit cofactor expansion
            let m = &f[c];
            let d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            assert!((d - det[c]).abs() < 1e-12);
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    let cof = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
                    assert!((a[c][i][j] - cof / d).abs() < 1e-12);
                }
            }
            let p = mat::mul3(&a[c], m);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((p[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn folded_map_is_tangling() {
        let g = grid();
        let mut disp = vec![[0.0; 3]; g.nodes()];
        disp[g.node(1, 1, 1)] = [0.0, 0.0, -1.2];
        assert!(matches!(cofactor(&g, &disp), Err(Error::MeshTangling { .. })));
    }

    #[test]
    fn deformation_of_shear_and_rotation() {
        let g = grid();
        let a = vec![mat::I3; g.cells()];
        let shear: Vec<V3> = (0..g.nodes()).map(|n| [g.node_point(n)[2], 0.0, 0.0]).collect();
        let d = deformation(&g, &shear, &a).unwrap();
        for m in &d {
            assert!((m[0][2] - 1.0).abs() < 1e-12 && (m[2][0] - 1.0).abs() < 1e-12);
            assert!(m[0][0].abs() < 1e-12);
        }
        // v = (x3, 0, 0) is the z-shear; v = (-x3, 0, x1) restricted to one cell is a rotation
        let nodes = g.cell_nodes(0);
        let mut v = vec![[0.0; 3]; g.nodes()];
        for &n in &nodes {
            let p = g.node_point(n);
            v[n] = [-p[2], 0.0, p[0]];
        }
        let d = deformation(&g, &v, &a).unwrap();
        assert!(d[0].iter().flatten().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn deformation_matches_naive_formula() {
        let g = grid();
        let disp = smooth_disp(&g, 0.05, 8);
        let (a, _) = cofactor(&g, &disp).unwrap();
        let v = smooth_disp(&g, 1.0, 9);
        let d = deformation(&g, &v, &a).unwrap();
        let h = g.h();
        for c in 0..g.cells() {
            // v^i_,k by averaging the four edge differences of the cell
            let (ci, cj, ck) = g.cell_ijk(c);
            let at = |di: usize, dj: usize, dk: usize| v[g.node((ci + di) % g.n1, (cj + dj) % g.n2, ck + dk)];
            let mut gv = [[0.0; 3]; 3];
            for i in 0..3 {
                for p in 0..2 {
                    for q in 0..2 {
                        gv[i][0] += (at(1, p, q)[i] - at(0, p, q)[i]) / (4.0 * h[0]);
                        gv[i][1] += (at(p, 1, q)[i] - at(p, 0, q)[i]) / (4.0 * h[1]);
                        gv[i][2] += (at(p, q, 1)[i] - at(p, q, 0)[i]) / (4.0 * h[2]);
                    }
                }
            }
            for l in 0..3 {
                for i in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += a[c][k][l] * gv[i][k] + a[c][k][i] * gv[l][k];
                    }
                    assert!((d[c][l][i] - s).abs() < 1e-12);
                    assert_eq!(d[c][l][i], d[c][i][l]);
                }
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let g = grid();
        let s = ReferenceSurface::flat(g.surface(), Backend::Spectral, 0.5).unwrap();
        let mut st = FluidState::initial(&g, &s, smooth_disp(&g, 0.3, 1), vec![1e-3; g.layer()]).unwrap();
        st.t = 0.1 + 0.2;
        st.eta = smooth_disp(&g, 0.01, 2);
        let text = st.to_fields(&g).unwrap().to_text();
        let back = FluidState::from_fields(&g, &s, &FieldSet::parse(&text).unwrap()).unwrap();
        assert_eq!(back, st);
    }
}
