//! Run configuration: a TOML file with fixed sections; unknown keys are errors.
//!
//! ```toml
//! [grid]
//! n1 = 32
//! n2 = 32
//! n3 = 24
//!
//! [fluid]
//! nu = 1.0
//! theta = 1e-3
//! kappa = 1e-4
//!
//! [[initial.height]]
//! amp = 0.01
//! k1 = 1
//! k2 = 1
//! ```
//! Every key has a default. The defaults are the desk configuration, except that the
//! initial data default to rest (`SimConfig::desk` adds a small height mode).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::fluid::StepParams;
use crate::geometry::ReferenceSurface;
use crate::grid::Grid3;
use crate::mat::V3;
use crate::regularization::MollifierSpec;
use crate::shell::ShellParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub l1: f64,
    pub l2: f64,
    pub depth: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n1: 32, n2: 32, n3: 24, l1: 1.0, l2: 1.0, depth: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub backend: Backend,
    /// Half width of the tubular neighborhood.
    pub thickness: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { backend: Backend::Spectral, thickness: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidConfig {
    pub nu: f64,
    pub theta: f64,
    pub kappa: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        FluidConfig { nu: 1.0, theta: 1e-3, kappa: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShellConfig {
    pub sigma: f64,
    pub gamma: f64,
    pub sigma_k: f64,
}

impl Default for ShellConfig {
    fn default() -> Self {
        ShellConfig { sigma: 1.0, gamma: 0.1, sigma_k: 0.0 }
    }
}

/// Mollifier lengths in grid widths of the chart. The surface strength is the
/// squared length, the volume kernel radius is the length itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifierConfig {
    /// `eps`: volume kernel and height smoothing.
    pub eps_widths: f64,
    /// `eps1`: shell coupling.
    pub eps1_widths: f64,
    /// Order `m` of the height mollifier.
    pub height_order: f64,
    /// Order `p` of the shell coupling mollifier.
    pub shell_order: f64,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        MollifierConfig { eps_widths: 2.0, eps1_widths: 2.0, height_order: 4.0, shell_order: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { dt: 1e-3, t_final: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PicardMode {
    /// Freeze from the previous sweep of the same step.
    #[default]
    PerStep,
    /// Sweep the whole time window at once.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub mode: PicardMode,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { tol: 1e-8, max_sweeps: 8, mode: PicardMode::PerStep }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 500 }
    }
}

/// `amp cos(2 pi (k1 x / l1 + k2 y / l2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightMode {
    pub amp: f64,
    pub k1: i32,
    pub k2: i32,
}

/// Analytic velocity fields; all vanish on the bottom wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum VelocitySpec {
    #[default]
    Zero,
    /// `(amp sin(2 pi y) z, 0, 0)`: divergence free, shears the top.
    Shear { amp: f64 },
    /// `amp (sin(2 pi x) z, sin(2 pi y) z, 0)`: compressive, used by the theta sweep.
    Swirl { amp: f64 },
}

impl VelocitySpec {
    pub fn sample(&self, g: &Grid3) -> Vec<V3> {
        (0..g.nodes())
            .map(|n| {
                let [x, y, z] = g.node_point(n);
                let (sx, sy) = ((2.0 * PI * x / g.l1).sin(), (2.0 * PI * y / g.l2).sin());
                match *self {
                    VelocitySpec::Zero => [0.0; 3],
                    VelocitySpec::Shear { amp } => [amp * sy * z, 0.0, 0.0],
                    VelocitySpec::Swirl { amp } => [amp * sx * z, amp * sy * z, 0.0],
                }
            })
            .collect()
    }
}

/// Steady body force per unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ForcingSpec {
    #[default]
    None,
    /// `(amp sin(2 pi y) z, 0, 0)`.
    Shear { amp: f64 },
}

impl ForcingSpec {
    pub fn sample(&self, g: &Grid3) -> Vec<V3> {
        match *self {
            ForcingSpec::None => vec![[0.0; 3]; g.nodes()],
            ForcingSpec::Shear { amp } => VelocitySpec::Shear { amp }.sample(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub velocity: VelocitySpec,
    pub height: Vec<HeightMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Budget `M` on `||(v, h)||_{Y_T}^2`.
    pub m_ball: f64,
    /// Resets `eta^tau` from the boundary every this many steps; 0 disables.
    pub redecompose_every: usize,
    /// Coercivity floor below which a warning is flagged.
    pub coercivity_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, m_ball: 1e10, redecompose_every: 10, coercivity_floor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub surface: SurfaceConfig,
    pub fluid: FluidConfig,
    pub shell: ShellConfig,
    pub mollifier: MollifierConfig,
    pub time: TimeConfig,
    pub picard: PicardConfig,
    pub solver: SolverConfig,
    pub initial: InitialConfig,
    pub forcing: ForcingSpec,
    pub run: RunConfig,
}

impl SimConfig {
    /// The desk configuration with a small shell perturbation.
    pub fn desk() -> Self {
        SimConfig { initial: InitialConfig { velocity: VelocitySpec::Zero, height: vec![HeightMode { amp: 0.01, k1: 1, k2: 1 }] }, ..Default::default() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn steps(&self) -> usize {
        (self.time.t_final / self.time.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn grid3(&self) -> Result<Grid3> {
        let g = &self.grid;
        Grid3::new(g.n1, g.n2, g.n3, g.l1, g.l2, g.depth)
    }

    pub fn surface(&self) -> Result<ReferenceSurface> {
        ReferenceSurface::flat(self.grid3()?.surface(), self.surface.backend, self.surface.thickness)
    }

    pub fn shell_params(&self) -> ShellParams {
        ShellParams { sigma: self.shell.sigma, gamma: self.shell.gamma, sigma_k: self.shell.sigma_k }
    }

    /// One chart grid width.
    pub fn width(&self) -> f64 {
        (self.grid.l1 / self.grid.n1 as f64).max(self.grid.l2 / self.grid.n2 as f64)
    }

    pub fn step_params(&self) -> StepParams {
        let eps = self.mollifier.eps_widths * self.width();
        let eps1 = self.mollifier.eps1_widths * self.width();
        StepParams {
            nu: self.fluid.nu,
            theta: self.fluid.theta,
            kappa: self.fluid.kappa,
            dt: self.time.dt,
            shell: self.shell_params(),
            velocity_mollifier: MollifierSpec::volume(eps),
            height_mollifier: MollifierSpec::surface(eps * eps, self.mollifier.height_order),
            shell_mollifier: MollifierSpec::surface(eps1 * eps1, self.mollifier.shell_order),
            solver_tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn initial_height(&self) -> Result<Vec<f64>> {
        let g = self.grid3()?.surface();
        Ok(g.sample(|x, y| self.initial.height.iter().map(|m| m.amp * (2.0 * PI * (m.k1 as f64 * x / g.l1 + m.k2 as f64 * y / g.l2)).cos()).sum()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid3()?;
        self.shell_params().validate()?;
        self.step_params().validate()?;
        if !(self.time.t_final >= 0.0) {
            return Err(Error::Config("t_final must be >= 0".into()));
        }
        if !(self.picard.tol > 0.0) || self.picard.max_sweeps == 0 {
            return Err(Error::Config("picard needs tol > 0 and max_sweeps >= 1".into()));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be >= 1".into()));
        }
        if !(self.run.m_ball >= 0.0) {
            return Err(Error::Config("m_ball must be >= 0".into()));
        }
        if self.mollifier.eps_widths * self.width() >= g.depth {
            return Err(Error::Config("volume mollifier radius must be below the slab depth".into()));
        }
        let h0 = self.initial_height()?;
        let amp = h0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if amp >= self.surface.thickness {
            return Err(Error::Config(format!("initial height {amp} leaves the tubular neighborhood")));
        }
        // The scheme is implicit in the viscous and shell terms; only transport limits dt.
        let u = self.initial.velocity.sample(&g).iter().map(|w| w.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let hmin = g.h().into_iter().fold(f64::INFINITY, f64::min);
        if u * self.time.dt > 0.5 * hmin {
            return Err(Error::Config(format!("dt {} violates the transport limit dt |u| <= h/2 (|u| = {u})", self.time.dt)));
        }
        Ok(())
    }
}
