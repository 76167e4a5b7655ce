//! The implicit momentum system of one linearized step and its PCG solver.
//!
//! `A = M/dt + K_visc + K_pen + kappa |dA| Delta_0^2 + sigma dt T^T S T`, where the last
//! two act on the top layer only. `T v = (v_z - hbar_a v_a)` resampled through the
//! tangential map and `S f = K D^2^T (|dA| sqrt g0 A~ D^2 K f)` is the mollified
//! linearized bending form.

use crate::error::{Error, Result};
use crate::geometry::ReferenceSurface;
use crate::interp::{Interpolation, PointOperator};
use crate::kinematics::{compose, TangentialMap};
use crate::mat::V3;
use crate::regularization::{boundary_biharmonic, surface_mollify, MollifierSpec};
use crate::shell::{apply_bending, bending_tensor_a, Tensor4};

use super::fem::{unknown_nodes, BlockOperator};

/// Shell and artificial-viscosity terms acting on the top layer.
#[derive(Debug, Clone)]
pub struct Coupling {
    surface: ReferenceSurface,
    a_tilde: Vec<Tensor4>,
    slope: [Vec<f64>; 2],
    resample: Option<PointOperator>,
    mollifier: MollifierSpec,
    pub sigma: f64,
    pub kappa: f64,
    pub dt: f64,
}

impl Coupling {
    /// Coefficients frozen at `hbar` and the tangential map `tau_bar`.
    pub fn frozen(
        surface: &ReferenceSurface,
        hbar: &[f64],
        tau_bar: &TangentialMap,
        mollifier: MollifierSpec,
        sigma: f64,
        kappa: f64,
        dt: f64,
    ) -> Result<Self> {
        let a_tilde = bending_tensor_a(surface, hbar, true)?;
        let grad = surface.diff().gradient(hbar);
        let slope = [0, 1].map(|c| compose(surface, &grad[c], tau_bar, Interpolation::Trigonometric));
        let resample = if tau_bar.is_identity() { None } else { Some(tau_bar.resampler(surface)?) };
        Ok(Coupling { surface: surface.clone(), a_tilde, slope, resample, mollifier, sigma, kappa, dt })
    }

    /// The flat, undeformed reference.
    pub fn reference(surface: &ReferenceSurface, mollifier: MollifierSpec, sigma: f64, kappa: f64, dt: f64) -> Result<Self> {
        let n = surface.grid().len();
        Self::frozen(surface, &vec![0.0; n], &TangentialMap::identity(surface.grid()), mollifier, sigma, kappa, dt)
    }

    pub fn surface(&self) -> &ReferenceSurface {
        &self.surface
    }

    pub fn mollifier(&self) -> &MollifierSpec {
        &self.mollifier
    }

    /// `T v` on the reference grid.
    pub fn trace(&self, top: &[V3]) -> Vec<f64> {
        let m: Vec<f64> = top.iter().enumerate().map(|(k, v)| v[2] - self.slope[0][k] * v[0] - self.slope[1][k] * v[1]).collect();
        match &self.resample {
            Some(r) => r.apply(&m),
            None => m,
        }
    }

    pub fn trace_adjoint(&self, g: &[f64]) -> Vec<V3> {
        let m = match &self.resample {
            Some(r) => r.apply_transpose(g),
            None => g.to_vec(),
        };
        m.iter().enumerate().map(|(k, &x)| [-self.slope[0][k] * x, -self.slope[1][k] * x, x]).collect()
    }

    pub fn mollify(&self, f: &[f64]) -> Result<Vec<f64>> {
        surface_mollify(&self.surface, f, &self.mollifier)
    }

    /// `S f`, symmetric; `f . S f / 2` is the frozen elastic energy `E_hbar(K f) / 2`.
    pub fn stiffness(&self, f: &[f64]) -> Result<Vec<f64>> {
        let kf = self.mollify(f)?;
        let l = apply_bending(&self.surface, &self.a_tilde, &kf)?;
        let w = self.surface.grid().cell_area();
        let sg0 = self.surface.sqrt_det_g0();
        let d: Vec<f64> = l.iter().zip(&sg0).map(|(x, s)| w * s * x).collect();
        self.mollify(&d)
    }

    /// `|dA| Delta_0^2` applied to one component, without `kappa`.
    pub fn biharmonic(&self, f: &[f64]) -> Result<Vec<f64>> {
        let w = self.surface.grid().cell_area();
        Ok(boundary_biharmonic(&self.surface, f, 1.0)?.into_iter().map(|x| w * x).collect())
    }

    /// Top layer part of `A`.
    pub fn apply_top(&self, top: &[V3]) -> Result<Vec<V3>> {
        let mut out = vec![[0.0; 3]; top.len()];
        if self.kappa > 0.0 {
            for c in 0..3 {
                let comp: Vec<f64> = top.iter().map(|v| v[c]).collect();
                for (o, b) in out.iter_mut().zip(self.biharmonic(&comp)?) {
                    o[c] += self.kappa * b;
                }
            }
        }
        if self.sigma > 0.0 {
            let s = self.stiffness(&self.trace(top))?;
            let s: Vec<f64> = s.iter().map(|x| self.sigma * self.dt * x).collect();
            for (o, t) in out.iter_mut().zip(self.trace_adjoint(&s)) {
                for c in 0..3 {
                    o[c] += t[c];
                }
            }
        }
        Ok(out)
    }
}

/// Symmetric positive definite operator of the step.
#[derive(Debug, Clone)]
pub struct StepOperator {
    pub block: BlockOperator,
    pub coupling: Coupling,
}

impl StepOperator {
    pub fn len(&self) -> usize {
        unknown_nodes(self.block.grid()) * 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.block.apply(x, y);
        let g = self.block.grid();
        let off = (g.n3 - 1) * g.layer() * 3;
        let top: Vec<V3> = x[off..].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        for (k, t) in self.coupling.apply_top(&top)?.iter().enumerate() {
            for c in 0..3 {
                y[off + 3 * k + c] += t[c];
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients to `||r|| <= tol ||b||`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]) -> Result<()>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..=max_iter {
        let rn = dot(&r, &r).sqrt() / bn;
        if rn <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: rn });
        }
        if it == max_iter {
            return Err(Error::Solver(format!("PCG stalled at relative residual {rn:.3e} after {max_iter} iterations")));
        }
        apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!("operator not positive definite (p.Ap = {pap:.3e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}
