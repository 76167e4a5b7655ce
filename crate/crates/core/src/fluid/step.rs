//! One implicit step of the mollified, penalized linearization with frozen coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{shape_check, Error, Result};
use crate::geometry::ReferenceSurface;
use crate::grid::Grid3;
use crate::interp::Interpolation;
use crate::kinematics::{theta_factor, TangentialMap};
use crate::mat::{self, M3, V3};
use crate::regularization::{surface_mollify, volume_mollify, MollifierSpec};
use crate::shell::{lower_order_m, membrane_energy, willmore_energy, ShellParams};

use super::fem::{cell_divergence, divergence_transpose, expand, lumped_mass, restrict, BlockOperator, Element};
use super::precond::FourierPreconditioner;
use super::system::{pcg, Coupling, SolveStats, StepOperator};
use super::{cofactor, FluidState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepParams {
    pub nu: f64,
    pub theta: f64,
    pub kappa: f64,
    pub dt: f64,
    pub shell: ShellParams,
    /// Volume kernel for `v -> vbar`.
    pub velocity_mollifier: MollifierSpec,
    /// `K_eps^m` for `h~ -> hbar`.
    pub height_mollifier: MollifierSpec,
    /// `K_eps1^p` inside the shell coupling.
    pub shell_mollifier: MollifierSpec,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        self.shell.validate()?;
        for (name, v) in [("nu", self.nu), ("theta", self.theta), ("dt", self.dt), ("solver_tol", self.solver_tol)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        self.velocity_mollifier.validate()?;
        self.height_mollifier.validate()?;
        self.shell_mollifier.validate()?;
        Ok(())
    }
}

/// Coefficients frozen from a Picard iterate `(v~, h~)`.
#[derive(Debug, Clone)]
pub struct Frozen {
    pub v_bar: Vec<V3>,
    pub a: Vec<M3>,
    pub h_bar: Vec<f64>,
    pub tau_bar: TangentialMap,
    /// `|dA| K K M(hbar)`, the explicit lower order shell load.
    pub shell_load: Vec<f64>,
    pub coupling: Coupling,
}

/// Energy bookkeeping of one step; every term is a rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub solver: Option<SolveStats>,
    pub kinetic0: f64,
    pub kinetic1: f64,
    /// `sigma/2 h . S h` with the frozen form at both ends.
    pub elastic0: f64,
    pub elastic1: f64,
    pub viscous: f64,
    pub penalty: f64,
    pub artificial: f64,
    pub work_force: f64,
    pub work_pressure: f64,
    pub work_shell: f64,
    /// `dE/dt + dissipation - work`.
    pub balance: f64,
    /// `||abar : grad v||_L2`.
    pub divergence: f64,
    /// `theta ||q||^2`.
    pub pressure_energy: f64,
    pub traction_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FluidContext {
    pub grid: Grid3,
    pub surface: ReferenceSurface,
    pub params: StepParams,
    /// Penalty reference pressure, per cell.
    pub q0: Vec<f64>,
    element: Element,
    mass: Vec<f64>,
    precond: FourierPreconditioner,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl FluidContext {
    pub fn new(grid: Grid3, surface: ReferenceSurface, params: StepParams, q0: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if !surface.is_flat() {
            return Err(Error::Domain("the fluid slab needs a flat reference surface".into()));
        }
        if *surface.grid() != grid.surface() {
            return Err(Error::Shape("surface grid differs from the top layer of the slab".into()));
        }
        shape_check("q0", q0.len(), grid.cells())?;
        let element = Element::new(grid.h());
        let mass = lumped_mass(&grid);
        let block = Self::block(&grid, &element, &mass, &vec![mat::I3; grid.cells()], &params);
        let coupling = Coupling::reference(&surface, params.shell_mollifier, params.shell.sigma, params.kappa, params.dt)?;
        let precond = FourierPreconditioner::new(&StepOperator { block, coupling })?;
        Ok(FluidContext { grid, surface, params, q0, element, mass, precond })
    }

    fn block(g: &Grid3, el: &Element, mass: &[f64], a: &[M3], p: &StepParams) -> BlockOperator {
        let mut b = BlockOperator::assemble(g, |c| el.matrix(&a[c], p.nu, 1.0 / p.theta));
        b.add_diagonal(&mass.iter().map(|m| m / p.dt).collect::<Vec<_>>());
        b
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `1/2 v . M v`.
    pub fn kinetic_energy(&self, v: &[V3]) -> f64 {
        let l = self.grid.layer();
        0.5 * v[l..].iter().zip(&self.mass).map(|(w, m)| m * mat::dot3(*w, *w)).sum::<f64>()
    }

    /// `1/2 |v|_M^2 + sigma E_ben + gamma Area`.
    pub fn physical_energy(&self, st: &FluidState) -> Result<f64> {
        let sh = &self.params.shell;
        Ok(self.kinetic_energy(&st.v) + willmore_energy(&self.surface, &st.h, sh)? + membrane_energy(&self.surface, &st.h, sh)?)
    }

    /// Applies the volume mollifier to each component; the wall row is zeroed.
    pub fn mollify_volume(&self, v: &[V3]) -> Result<Vec<V3>> {
        shape_check("velocity", v.len(), self.grid.nodes())?;
        let comps: Vec<Vec<f64>> =
            (0..3).map(|c| volume_mollify(&self.grid, &v.iter().map(|w| w[c]).collect::<Vec<_>>(), &self.params.velocity_mollifier)).collect::<Result<_>>()?;
        Ok((0..v.len()).map(|n| if n < self.grid.layer() { [0.0; 3] } else { [comps[0][n], comps[1][n], comps[2][n]] }).collect())
    }

    /// Mollified coefficients of the iterate `(v~, h~)` for a step from `st`.
    pub fn freeze(&self, st: &FluidState, v_tilde: &[V3], h_tilde: &[f64]) -> Result<Frozen> {
        let p = &self.params;
        let g = &self.grid;
        let v_bar = self.mollify_volume(v_tilde)?;
        let eta_bar: Vec<V3> = st.eta_bar.iter().zip(&v_bar).map(|(e, v)| std::array::from_fn(|c| e[c] + p.dt * v[c])).collect();
        let (a, _) = cofactor(g, &eta_bar)?;
        let h_bar = surface_mollify(&self.surface, h_tilde, &p.height_mollifier)?;
        self.surface.check_height(&h_bar).map_err(|e| Error::GraphViolation(e.to_string()))?;
        let top = &v_bar[g.top_offset()..];
        let tau_bar = st.tau_bar.advance(&self.surface, &[0, 1].map(|c| top.iter().map(|w| w[c]).collect()), p.dt)?;
        let coupling = Coupling::frozen(&self.surface, &h_bar, &tau_bar, p.shell_mollifier, p.shell.sigma, p.kappa, p.dt)?;
        let m = lower_order_m(&self.surface, &h_bar, &p.shell)?;
        let w = self.surface.grid().cell_area();
        let shell_load = coupling.mollify(&coupling.mollify(&m)?)?.into_iter().map(|x| w * x).collect();
        Ok(Frozen { v_bar, a, h_bar, tau_bar, shell_load, coupling })
    }

    /// Right side without the shell terms: `M v/dt + M F + D^T q0`.
    fn fluid_load(&self, st: &FluidState, frozen: &Frozen, force: &[V3]) -> Vec<f64> {
        let dt = self.params.dt;
        let mut b = divergence_transpose(&self.grid, &self.element, &frozen.a, &self.q0);
        let l = self.grid.layer();
        for (u, m) in self.mass.iter().enumerate() {
            for c in 0..3 {
                b[3 * u + c] += m * (st.v[u + l][c] / dt + force[u + l][c]);
            }
        }
        b
    }

    fn shell_rhs(&self, frozen: &Frozen, h: &[f64]) -> Result<Vec<f64>> {
        let s = frozen.coupling.stiffness(h)?;
        Ok(s.iter().zip(&frozen.shell_load).map(|(a, b)| self.params.shell.sigma * (a + b)).collect())
    }

    /// Advances `st` by one step with frozen coefficients and nodal forcing `force`.
    pub fn step(&self, st: &FluidState, frozen: &Frozen, force: &[V3]) -> Result<(FluidState, StepReport)> {
        let g = &self.grid;
        let p = &self.params;
        shape_check("forcing", force.len(), g.nodes())?;
        let block = Self::block(g, &self.element, &self.mass, &frozen.a, p);
        let op = StepOperator { block, coupling: frozen.coupling.clone() };
        let mut b = self.fluid_load(st, frozen, force);
        let shell = self.shell_rhs(frozen, &st.h)?;
        let off = 3 * (g.n3 - 1) * g.layer();
        for (k, t) in frozen.coupling.trace_adjoint(&shell).iter().enumerate() {
            for c in 0..3 {
                b[off + 3 * k + c] -= t[c];
            }
        }
        let mut x = restrict(g, &st.v);
        let stats = pcg(|x, y| op.apply(x, y), |r| self.precond.apply(r), &b, &mut x, p.solver_tol, p.max_iter)?;
        let v = expand(g, &x);
        let top = &v[g.top_offset()..];
        let th = frozen.coupling.trace(top);
        let h: Vec<f64> = st.h.iter().zip(&th).map(|(a, b)| a + p.dt * b).collect();
        self.surface.check_height(&h).map_err(|e| Error::GraphViolation(e.to_string()))?;
        let eta: Vec<V3> = st.eta.iter().zip(&v).map(|(e, w)| std::array::from_fn(|c| e[c] + p.dt * w[c])).collect();
        cofactor(g, &eta)?;
        let eta_bar = st.eta_bar.iter().zip(&frozen.v_bar).map(|(e, w)| std::array::from_fn(|c| e[c] + p.dt * w[c])).collect();
        let tau = st.tau.advance(&self.surface, &[0, 1].map(|c| top.iter().map(|w| w[c]).collect()), p.dt)?;
        let div = cell_divergence(g, &self.element, &frozen.a, &v);
        let q: Vec<f64> = self.q0.iter().zip(&div).map(|(q0, d)| q0 - d / p.theta).collect();
        let next = FluidState { t: st.t + p.dt, step: st.step + 1, v, q, eta, eta_bar, h, tau, tau_bar: frozen.tau_bar.clone() };
        let mut report = self.report(st, &next, frozen, force, &op)?;
        report.solver = Some(stats);
        Ok((next, report))
    }

    fn report(&self, st: &FluidState, next: &FluidState, frozen: &Frozen, force: &[V3], op: &StepOperator) -> Result<StepReport> {
        let g = &self.grid;
        let p = &self.params;
        let l = g.layer();
        let vol = self.element.volume;
        let x = restrict(g, &next.v);
        let mut kx = vec![0.0; x.len()];
        op.block.apply(&x, &mut kx);
        let div = cell_divergence(g, &self.element, &frozen.a, &next.v);
        let div2: f64 = div.iter().map(|d| vol * d * d).sum();
        let penalty = div2 / p.theta;
        let kinetic1 = self.kinetic_energy(&next.v);
        let viscous = dot(&kx, &x) - 2.0 * kinetic1 / p.dt - penalty;
        let top = &next.v[g.top_offset()..];
        let mut artificial = 0.0;
        if p.kappa > 0.0 {
            for c in 0..3 {
                let comp: Vec<f64> = top.iter().map(|w| w[c]).collect();
                artificial += p.kappa * dot(&comp, &frozen.coupling.biharmonic(&comp)?);
            }
        }
        let work_force: f64 = (0..self.mass.len()).map(|u| self.mass[u] * mat::dot3(next.v[u + l], force[u + l])).sum();
        let work_pressure: f64 = self.q0.iter().zip(&div).map(|(q, d)| vol * q * d).sum();
        let th = frozen.coupling.trace(top);
        let work_shell = -p.shell.sigma * dot(&th, &frozen.shell_load);
        let e0 = 0.5 * p.shell.sigma * dot(&st.h, &frozen.coupling.stiffness(&st.h)?);
        let e1 = 0.5 * p.shell.sigma * dot(&next.h, &frozen.coupling.stiffness(&next.h)?);
        let kinetic0 = self.kinetic_energy(&st.v);
        let balance = (kinetic1 + e1 - kinetic0 - e0) / p.dt + viscous + penalty + artificial - work_force - work_pressure - work_shell;
        let pressure_energy = p.theta * next.q.iter().map(|q| vol * q * q).sum::<f64>();
        let traction_residual = self.traction_residual_with(&op.block, st, next, frozen, force)?;
        Ok(StepReport {
            solver: None,
            kinetic0,
            kinetic1,
            elastic0: e0,
            elastic1: e1,
            viscous,
            penalty,
            artificial,
            work_force,
            work_pressure,
            work_shell,
            balance,
            divergence: div2.sqrt(),
            pressure_energy,
            traction_residual,
        })
    }

    /// Mismatch, per unit area, between the weak traction the fluid exerts on the top
    /// nodes and the frozen shell and artificial viscosity load at the new state.
    pub fn boundary_traction_residual(&self, st: &FluidState, next: &FluidState, frozen: &Frozen, force: &[V3]) -> Result<f64> {
        let block = Self::block(&self.grid, &self.element, &self.mass, &frozen.a, &self.params);
        self.traction_residual_with(&block, st, next, frozen, force)
    }

    fn traction_residual_with(&self, block: &BlockOperator, st: &FluidState, next: &FluidState, frozen: &Frozen, force: &[V3]) -> Result<f64> {
        let g = &self.grid;
        let x = restrict(g, &next.v);
        let mut kx = vec![0.0; x.len()];
        block.apply(&x, &mut kx);
        let b = self.fluid_load(st, frozen, force);
        let off = 3 * (g.n3 - 1) * g.layer();
        let top = &next.v[g.top_offset()..];
        let mut shell = frozen.coupling.trace_adjoint(&self.shell_rhs(frozen, &next.h)?);
        if self.params.kappa > 0.0 {
            for c in 0..3 {
                let comp: Vec<f64> = top.iter().map(|w| w[c]).collect();
                for (s, v) in shell.iter_mut().zip(frozen.coupling.biharmonic(&comp)?) {
                    s[c] += self.params.kappa * v;
                }
            }
        }
        let w = self.surface.grid().cell_area();
        let mut r: f64 = 0.0;
        for (k, s) in shell.iter().enumerate() {
            for c in 0..3 {
                let i = off + 3 * k + c;
                r = r.max((kx[i] - b[i] + s[c]).abs() / w);
            }
        }
        Ok(r)
    }

    /// `||abar : grad v||_L2` with the cofactor of the state's own flow map.
    pub fn divergence_norm(&self, st: &FluidState) -> Result<f64> {
        let (a, _) = cofactor(&self.grid, &st.eta)?;
        let div = cell_divergence(&self.grid, &self.element, &a, &st.v);
        Ok(div.iter().map(|d| self.element.volume * d * d).sum::<f64>().sqrt())
    }

    /// Largest `|det grad eta - 1|`.
    pub fn volume_error(&self, st: &FluidState) -> Result<f64> {
        let (_, det) = cofactor(&self.grid, &st.eta)?;
        Ok(det.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max))
    }

    /// Largest deviation between `a^T N` on the shell and `Theta (-grad h o eta^tau, 1)`.
    pub fn theta_mismatch(&self, st: &FluidState) -> Result<f64> {
        let g = &self.grid;
        let (_, det) = cofactor(g, &st.eta)?;
        let top = &st.eta[g.top_offset()..];
        let d = self.surface.diff();
        let comp = |c: usize| top.iter().map(|w| w[c]).collect::<Vec<f64>>();
        let dd: Vec<[Vec<f64>; 2]> = (0..3).map(|c| d.gradient(&comp(c))).collect();
        let theta = theta_factor(&self.surface, &st.h, &st.tau, Interpolation::Cubic)?;
        let gh = d.gradient(&st.h);
        let slope = [0, 1].map(|c| crate::kinematics::compose(&self.surface, &gh[c], &st.tau, Interpolation::Cubic));
        let (n1, n2) = (g.n1, g.n2);
        let mut worst: f64 = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                let m = i * n2 + j;
                let e1: V3 = std::array::from_fn(|c| dd[c][0][m] + if c == 0 { 1.0 } else { 0.0 });
                let e2: V3 = std::array::from_fn(|c| dd[c][1][m] + if c == 1 { 1.0 } else { 0.0 });
                let im = (i + n1 - 1) % n1;
                let jm = (j + n2 - 1) % n2;
                let k = g.n3 - 1;
                let jac = 0.25 * (det[g.cell(i, j, k)] + det[g.cell(im, j, k)] + det[g.cell(i, jm, k)] + det[g.cell(im, jm, k)]);
                let lhs = mat::cross3(e1, e2).map(|x| x / jac);
                let t = theta.via_tangential[m];
                let rhs = [-t * slope[0][m], -t * slope[1][m], t];
                for c in 0..3 {
                    worst = worst.max((lhs[c] - rhs[c]).abs());
                }
            }
        }
        Ok(worst)
    }
}
