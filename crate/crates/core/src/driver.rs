//! Outer Picard iteration, whole runs with persistence, the uniqueness probe and
//! parameter sweeps.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{PicardMode, SimConfig, VelocitySpec};
use crate::diagnostics::{ball_check, coercivity, norms_table, BallStatus, EnergyLedger, NormSample, NormTracker};
use crate::error::{Error, Result};
use crate::field_io::FieldSet;
use crate::fluid::{compatibility_initial, Compatibility, FluidContext, FluidState, StepReport};
use crate::interp::Interpolation;
use crate::kinematics::{decompose_boundary, BoundaryMap};
use crate::mat::V3;
use crate::random::smooth_field;
use crate::regularization::{surface_mollify, volume_mollify};
use crate::shell::{membrane_energy, willmore_energy};
use crate::verify::fit_slope;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Format(_) | Error::Shape(_) => 2,
        Error::Io(_) => 3,
        Error::MeshTangling { .. } => 10,
        Error::GraphViolation(_) | Error::Decomposition(_) | Error::Domain(_) | Error::Degeneracy { .. } => 11,
        Error::Picard(_) => 12,
        Error::Solver(_) | Error::Convergence(_) => 14,
        Error::Projection(_) => 15,
    }
}

/// Exit code of a run that left the `Y_T` ball.
pub const EXIT_LEFT_BALL: i32 = 13;

/// Sweep history of one Picard solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PicardLog {
    /// `|v_{k+1} - v_k|_M + |h_{k+1} - h_k|_{H^2}` after each sweep.
    pub gaps: Vec<f64>,
}

impl PicardLog {
    pub fn sweeps(&self) -> usize {
        self.gaps.len()
    }

    /// Successive gap ratios.
    pub fn ratios(&self) -> Vec<f64> {
        self.gaps.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FluidState,
    pub report: StepReport,
    pub picard: PicardLog,
    pub h_bar: Vec<f64>,
}

/// Everything fixed for a run: grid, operators, forcing and the penalty pressure.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    pub ctx: FluidContext,
    pub force: Vec<V3>,
    /// Compatibility data of the mollified initial state; `q0` feeds the penalty.
    pub compat: Compatibility,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let g = config.grid3()?;
        let s = config.surface()?;
        let p = config.step_params();
        let force = config.forcing.sample(&g);
        let u0 = config.initial.velocity.sample(&g);
        let comps: Vec<Vec<f64>> =
            (0..3).map(|c| volume_mollify(&g, &u0.iter().map(|w| w[c]).collect::<Vec<_>>(), &p.velocity_mollifier)).collect::<Result<_>>()?;
        let u0m: Vec<V3> = (0..g.nodes()).map(|n| if n < g.layer() { [0.0; 3] } else { [comps[0][n], comps[1][n], comps[2][n]] }).collect();
        let h0m = surface_mollify(&s, &config.initial_height()?, &p.height_mollifier)?;
        let compat = compatibility_initial(&g, &s, &u0m, &force, &h0m, p.nu, p.kappa, &p.shell)?;
        let ctx = FluidContext::new(g, s, p, compat.q0.clone())?;
        Ok(Simulation { config, ctx, force, compat })
    }

    pub fn initial_state(&self) -> Result<FluidState> {
        let g = &self.ctx.grid;
        FluidState::initial(g, &self.ctx.surface, self.config.initial.velocity.sample(g), self.config.initial_height()?)
    }

    /// Distance used by the Picard stopping rule and the uniqueness probe.
    pub fn gap(&self, va: &[V3], vb: &[V3], ha: &[f64], hb: &[f64]) -> f64 {
        let dv: Vec<V3> = va.iter().zip(vb).map(|(a, b)| std::array::from_fn(|c| a[c] - b[c])).collect();
        let dh: Vec<f64> = ha.iter().zip(hb).map(|(a, b)| a - b).collect();
        (2.0 * self.ctx.kinetic_energy(&dv)).sqrt() + self.ctx.surface.diff().fft().sobolev_norm(&dh, 2.0)
    }

    /// Solves one step by Picard iteration on the frozen coefficients, starting from
    /// `guess` or from the current state.
    pub fn picard_step(&self, st: &FluidState, guess: Option<(Vec<V3>, Vec<f64>)>) -> Result<StepOutcome> {
        let pc = &self.config.picard;
        let (mut vt, mut ht) = guess.unwrap_or_else(|| (st.v.clone(), st.h.clone()));
        let mut log = PicardLog::default();
        for _ in 0..pc.max_sweeps {
            let frozen = self.ctx.freeze(st, &vt, &ht)?;
            let (next, report) = self.ctx.step(st, &frozen, &self.force)?;
            let gap = self.gap(&next.v, &vt, &next.h, &ht);
            log.gaps.push(gap);
            if gap < pc.tol {
                return Ok(StepOutcome { state: next, report, picard: log, h_bar: frozen.h_bar });
            }
            let n = log.gaps.len();
            if n >= 4 && (n - 3..n).all(|i| log.gaps[i] > log.gaps[i - 1]) {
                return Err(Error::Picard(format!("gap grew for 3 consecutive sweeps at step {}: {:?}", st.step + 1, log.gaps)));
            }
            vt = next.v;
            ht = next.h;
        }
        Err(Error::Picard(format!("no contraction within {} sweeps at step {}: gaps {:?}", pc.max_sweeps, st.step + 1, log.gaps)))
    }

    /// Resets `eta^tau` by decomposing the current top boundary.
    pub fn redecompose(&self, st: &mut FluidState) -> Result<()> {
        let g = &self.ctx.grid;
        let top = g.top_offset();
        let positions = (0..g.layer())
            .map(|m| {
                let [x, y, _] = g.node_point(top + m);
                let d = st.eta[top + m];
                [x + d[0], y + d[1], d[2]]
            })
            .collect();
        let (_, tau) = decompose_boundary(&self.ctx.surface, &BoundaryMap { positions }, Interpolation::Cubic)?;
        st.tau = tau;
        Ok(())
    }

    /// One accepted step: Picard, then the periodic re-decomposition.
    pub fn advance(&self, st: &FluidState, guess: Option<(Vec<V3>, Vec<f64>)>) -> Result<StepOutcome> {
        let mut out = self.picard_step(st, guess)?;
        let every = self.config.run.redecompose_every;
        if every > 0 && out.state.step % every == 0 {
            self.redecompose(&mut out.state)?;
        }
        Ok(out)
    }

    /// Picard over a whole window: every sweep reruns all `steps` with coefficients
    /// frozen from the previous sweep's trajectory.
    pub fn window(&self, st0: &FluidState, steps: usize) -> Result<WindowOutcome> {
        let pc = &self.config.picard;
        let mut guess: Vec<(Vec<V3>, Vec<f64>)> = vec![(st0.v.clone(), st0.h.clone()); steps];
        let mut log = PicardLog::default();
        for _ in 0..pc.max_sweeps {
            let mut st = st0.clone();
            let mut traj = Vec::with_capacity(steps);
            let mut reports = Vec::with_capacity(steps);
            let mut gap: f64 = 0.0;
            for (vt, ht) in &guess {
                let frozen = self.ctx.freeze(&st, vt, ht)?;
                let (mut next, report) = self.ctx.step(&st, &frozen, &self.force)?;
                gap = gap.max(self.gap(&next.v, vt, &next.h, ht));
                let every = self.config.run.redecompose_every;
                if every > 0 && next.step % every == 0 {
                    self.redecompose(&mut next)?;
                }
                traj.push((next.v.clone(), next.h.clone()));
                reports.push(report);
                st = next;
            }
            log.gaps.push(gap);
            if gap < pc.tol {
                return Ok(WindowOutcome { state: st, trajectory: traj, reports, picard: log });
            }
            let n = log.gaps.len();
            if n >= 4 && (n - 3..n).all(|i| log.gaps[i] > log.gaps[i - 1]) {
                return Err(Error::Picard(format!("window gap grew for 3 consecutive sweeps: {:?}", log.gaps)));
            }
            guess = traj;
        }
        Err(Error::Picard(format!("window iteration did not contract within {} sweeps: {:?}", pc.max_sweeps, log.gaps)))
    }

    pub fn checkpoint(&self, st: &FluidState) -> Result<FieldSet> {
        let mut fs = st.to_fields(&self.ctx.grid)?;
        fs.meta.insert("config".into(), self.config.hash());
        Ok(fs)
    }

    pub fn restore(&self, fs: &FieldSet) -> Result<FluidState> {
        let hash: String = fs.meta_parse("config")?;
        if hash != self.config.hash() {
            return Err(Error::Config("checkpoint was written with a different configuration".into()));
        }
        FluidState::from_fields(&self.ctx.grid, &self.ctx.surface, fs)
    }
}

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub state: FluidState,
    /// `(v, h)` after every step of the converged sweep.
    pub trajectory: Vec<(Vec<V3>, Vec<f64>)>,
    pub reports: Vec<StepReport>,
    pub picard: PicardLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    LeftBall { step: usize, t: f64 },
    Aborted { code: i32, message: String },
}

impl Termination {
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Completed => 0,
            Termination::LeftBall { .. } => EXIT_LEFT_BALL,
            Termination::Aborted { code, .. } => *code,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Termination::Completed => "completed".into(),
            Termination::LeftBall { step, t } => format!("left C_T(M) at step {step}, t = {t:e}"),
            Termination::Aborted { message, .. } => format!("aborted: {message}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub steps_completed: usize,
    pub t_reached: f64,
    pub termination: String,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Write a checkpoint every this many steps; 0 writes only the final state.
    pub checkpoint_every: usize,
    pub resume: Option<PathBuf>,
    /// Stop after this many steps even if `t_final` is further.
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: FluidState,
    pub ledger: EnergyLedger,
    pub norms: Vec<NormSample>,
    pub picard: Vec<PicardLog>,
    pub termination: Termination,
    pub warnings: Vec<String>,
    pub manifest: RunManifest,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Recorder<'a> {
    sim: &'a Simulation,
    ledger: EnergyLedger,
    tracker: NormTracker,
    picard: Vec<PicardLog>,
    warnings: Vec<String>,
    rng: ChaCha8Rng,
}

impl Recorder<'_> {
    fn record(&mut self, st: &FluidState, rep: &StepReport) -> Result<NormSample> {
        let s = &self.sim.ctx.surface;
        let sh = &self.sim.ctx.params.shell;
        self.ledger.record(st.step, st.t, self.sim.ctx.params.dt, rep, willmore_energy(s, &st.h, sh)?, membrane_energy(s, &st.h, sh)?);
        self.tracker.push(st.step, st.t, &st.v, &st.h)
    }

    fn coercivity(&mut self, step: usize, h_bar: &[f64]) -> Result<()> {
        let floor = self.sim.config.run.coercivity_floor;
        let c = coercivity(&self.sim.ctx.surface, h_bar, 20, floor, &mut self.rng)?;
        if c.flagged {
            self.warnings.push(format!("step {step}: coercivity constant {:.3} below {floor}", c.nu1));
        }
        Ok(())
    }
}

/// Runs `sim` to `t_final`, persisting outputs under `opts.out`. Numerical aborts end
/// the run with a termination reason instead of an error; the manifest is written
/// in every case.
pub fn simulate(sim: &Simulation, opts: &RunOptions) -> Result<RunSummary> {
    let started = unix_now();
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
    }
    let mut st = match &opts.resume {
        Some(p) => sim.restore(&FieldSet::read(p)?)?,
        None => sim.initial_state()?,
    };
    let cfg = &sim.config;
    let mut rec = Recorder {
        sim,
        ledger: EnergyLedger::default(),
        tracker: NormTracker::new(sim.ctx.grid, cfg.time.dt),
        picard: Vec::new(),
        warnings: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(cfg.run.seed),
    };
    let mut outputs = Vec::new();
    let total = cfg.steps();
    let last = opts.max_steps.map_or(total, |m| total.min(st.step + m));
    let every_check = if cfg.run.redecompose_every > 0 { cfg.run.redecompose_every } else { 10 };
    rec.tracker.push(st.step, st.t, &st.v, &st.h)?;
    let mut termination = Termination::Completed;
    if let BallStatus::Exceeded { step, t } = ball_check(&rec.tracker.samples, cfg.run.m_ball) {
        termination = Termination::LeftBall { step, t };
    }
    let h_bar0 = surface_mollify(&sim.ctx.surface, &st.h, &sim.ctx.params.height_mollifier)?;
    rec.coercivity(st.step, &h_bar0)?;

    let write_checkpoint = |st: &FluidState, name: String, outputs: &mut Vec<String>| -> Result<()> {
        if let Some(dir) = &opts.out {
            sim.checkpoint(st)?.write(&dir.join(&name))?;
            outputs.push(name);
        }
        Ok(())
    };

    if termination == Termination::Completed && st.step < last {
        let result: Result<()> = (|| {
            match cfg.picard.mode {
                PicardMode::PerStep => {
                    while st.step < last {
                        let out = sim.advance(&st, None)?;
                        let sample = rec.record(&out.state, &out.report)?;
                        rec.picard.push(out.picard);
                        if out.state.step % every_check == 0 {
                            rec.coercivity(out.state.step, &out.h_bar)?;
                        }
                        st = out.state;
                        if opts.checkpoint_every > 0 && st.step % opts.checkpoint_every == 0 && st.step < last {
                            write_checkpoint(&st, format!("checkpoint_{:06}.sf", st.step), &mut outputs)?;
                        }
                        if sample.y2 > cfg.run.m_ball {
                            termination = Termination::LeftBall { step: st.step, t: st.t };
                            break;
                        }
                    }
                }
                PicardMode::Window => {
                    let w = sim.window(&st, last - st.step)?;
                    let dt = cfg.time.dt;
                    for (i, ((v, h), rep)) in w.trajectory.iter().zip(&w.reports).enumerate() {
                        let step = st.step + i + 1;
                        let t = st.t + (i + 1) as f64 * dt;
                        let s = &sim.ctx.surface;
                        let sh = &sim.ctx.params.shell;
                        rec.ledger.record(step, t, dt, rep, willmore_energy(s, h, sh)?, membrane_energy(s, h, sh)?);
                        let sample = rec.tracker.push(step, t, v, h)?;
                        if sample.y2 > cfg.run.m_ball && termination == Termination::Completed {
                            termination = Termination::LeftBall { step, t };
                        }
                    }
                    rec.picard.push(w.picard);
                    st = w.state;
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            termination = Termination::Aborted { code: exit_code(&e), message: e.to_string() };
        }
    }

    write_checkpoint(&st, "final.sf".into(), &mut outputs)?;
    if let Some(dir) = &opts.out {
        let picard_table: String = std::iter::once("step,sweeps,gaps\n".to_string())
            .chain(
                rec.picard
                    .iter()
                    .enumerate()
                    .map(|(i, l)| format!("{},{},{}\n", i + 1, l.sweeps(), l.gaps.iter().map(|g| format!("{g:e}")).collect::<Vec<_>>().join(" "))),
            )
            .collect();
        let compat =
            format!("elliptic_residual {:e}\ncp_max {:e}\ndef_tan_max {:e}\n", sim.compat.elliptic_residual, sim.compat.cp_max(), sim.compat.def_tan_max());
        for (name, text) in [
            ("config.toml", cfg.to_toml()),
            ("energy.csv", rec.ledger.to_table()),
            ("norms.csv", norms_table(&rec.tracker.samples)),
            ("picard.csv", picard_table),
            ("compatibility.txt", compat),
        ] {
            std::fs::write(dir.join(name), text)?;
            outputs.push(name.to_string());
        }
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        steps_completed: st.step,
        t_reached: st.t,
        termination: termination.describe(),
        exit_code: termination.exit_code(),
        outputs: outputs.clone(),
        warnings: rec.warnings.clone(),
    };
    if let Some(dir) = &opts.out {
        write_manifest(dir, &manifest)?;
    }
    Ok(RunSummary { state: st, ledger: rec.ledger, norms: rec.tracker.samples, picard: rec.picard, termination, warnings: rec.warnings, manifest })
}

pub fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let mut m = m.clone();
    m.outputs.push("manifest.toml".into());
    let text = toml::to_string(&m).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// `(step, t, gap)` between the baseline and the perturbed-guess trajectory.
    pub gaps: Vec<(usize, f64, f64)>,
    pub max_sweeps: usize,
}

impl UniquenessReport {
    pub fn final_gap(&self) -> f64 {
        self.gaps.last().map_or(0.0, |g| g.2)
    }
}

/// Runs `steps` steps twice, once from the default Picard guess and once from a guess
/// displaced by `scale` times a seeded random field, and records the gap.
pub fn uniqueness_probe(sim: &Simulation, scale: f64, steps: usize, seed: u64) -> Result<UniquenessReport> {
    let g = sim.ctx.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = sim.initial_state()?;
    let mut b = a.clone();
    let mut gaps = Vec::new();
    let mut max_sweeps = 0;
    for _ in 0..steps {
        let oa = sim.advance(&a, None)?;
        let dv: Vec<V3> = (0..g.nodes()).map(|n| if n < g.layer() { [0.0; 3] } else { std::array::from_fn(|_| scale * rng.gen_range(-1.0..1.0)) }).collect();
        let dh = smooth_field(&g.surface(), &mut rng, 4, 2.0, scale);
        let guess = (b.v.iter().zip(&dv).map(|(x, d)| std::array::from_fn(|c| x[c] + d[c])).collect(), b.h.iter().zip(&dh).map(|(x, d)| x + d).collect());
        let ob = sim.advance(&b, Some(guess))?;
        max_sweeps = max_sweeps.max(oa.picard.sweeps()).max(ob.picard.sweeps());
        a = oa.state;
        b = ob.state;
        gaps.push((a.step, a.t, sim.gap(&a.v, &b.v, &a.h, &b.h)));
    }
    Ok(UniquenessReport { gaps, max_sweeps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Theta,
    Kappa,
    Eps,
    Eps1,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta" => Ok(SweepParam::Theta),
            "kappa" => Ok(SweepParam::Kappa),
            "eps" => Ok(SweepParam::Eps),
            "eps1" => Ok(SweepParam::Eps1),
            _ => Err(Error::Config(format!("unknown sweep parameter {s:?} (theta, kappa, eps, eps1)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Theta: `||abar : grad v||_{L2(0,T;L2)}` over the window. Others: gap to the
    /// previous row's final state.
    pub metric: f64,
    pub pressure_energy: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Fitted log-log slope of `metric` against `value`.
    pub slope: f64,
}

impl SweepResult {
    pub fn to_table(&self) -> String {
        let mut s = String::from("value,metric,pressure_energy,max_sweeps\n");
        for r in &self.rows {
            s += &format!("{:e},{:e},{:e},{}\n", r.value, r.metric, r.pressure_energy, r.max_sweeps);
        }
        s += &format!("# slope {:.4}\n", self.slope);
        s
    }
}

struct Window {
    state: FluidState,
    report: StepReport,
    sweeps: usize,
    /// `||abar : grad v||_{L2(0,T;L2)}` by left rectangles.
    divergence: f64,
}

fn run_steps(sim: &Simulation, steps: usize) -> Result<Window> {
    let mut st = sim.initial_state()?;
    let mut report = StepReport::default();
    let mut sweeps = 0;
    let mut div2 = 0.0;
    for _ in 0..steps {
        let out = sim.advance(&st, None)?;
        sweeps = sweeps.max(out.picard.sweeps());
        report = out.report;
        div2 += sim.ctx.params.dt * report.divergence.powi(2);
        st = out.state;
    }
    Ok(Window { state: st, report, sweeps, divergence: div2.sqrt() })
}

/// Steps per point of the theta sweep; the step is `theta / 16`.
pub const THETA_SWEEP_STEPS: usize = 32;

/// Halves `param` `halvings` times.
///
/// For `theta` the initial layer of a compressive probe velocity is resolved with
/// `dt = theta / 16` over a fixed number of steps and the space-time norm of the
/// divergence recorded.
/// The other parameters run `steps` steps of the base configuration and record the
/// distance between consecutive final states.
pub fn sweep(base: &SimConfig, param: SweepParam, halvings: usize, steps: usize) -> Result<SweepResult> {
    let mut rows = Vec::new();
    let mut prev: Option<FluidState> = None;
    let mut prev_sim: Option<Simulation> = None;
    for i in 0..=halvings {
        let f = 0.5f64.powi(i as i32);
        let mut c = base.clone();
        let n_steps = match param {
            SweepParam::Theta => {
                c.fluid.theta = base.fluid.theta * f;
                c.time.dt = c.fluid.theta / 16.0;
                if c.initial.velocity == VelocitySpec::Zero {
                    c.initial.velocity = VelocitySpec::Swirl { amp: 1.0 };
                }
                THETA_SWEEP_STEPS
            }
            SweepParam::Kappa => {
                c.fluid.kappa = base.fluid.kappa * f;
                steps
            }
            SweepParam::Eps => {
                c.mollifier.eps_widths = base.mollifier.eps_widths * f;
                steps
            }
            SweepParam::Eps1 => {
                c.mollifier.eps1_widths = base.mollifier.eps1_widths * f;
                steps
            }
        };
        c.time.t_final = c.time.dt * n_steps as f64;
        let value = match param {
            SweepParam::Theta => c.fluid.theta,
            SweepParam::Kappa => c.fluid.kappa,
            SweepParam::Eps => c.mollifier.eps_widths,
            SweepParam::Eps1 => c.mollifier.eps1_widths,
        };
        let sim = Simulation::new(c)?;
        let w = run_steps(&sim, n_steps)?;
        let (st, rep, sweeps) = (w.state, w.report, w.sweeps);
        let metric = match param {
            SweepParam::Theta => w.divergence,
            _ => match (&prev, &prev_sim) {
                (Some(p), Some(_)) => sim.gap(&st.v, &p.v, &st.h, &p.h),
                _ => f64::NAN,
            },
        };
        rows.push(SweepRow { value, metric, pressure_energy: rep.pressure_energy, max_sweeps: sweeps });
        prev = Some(st);
        prev_sim = Some(sim);
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.metric.is_finite() && r.metric > 0.0).map(|r| (r.value, r.metric)).collect();
    let slope = if pts.len() >= 2 { fit_slope(&pts) } else { f64::NAN };
    Ok(SweepResult { param, rows, slope })
}
