use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shellflow::config::SimConfig;
use shellflow::diagnostics::{coercivity, volume_sobolev_norm};
use shellflow::driver::{exit_code, simulate, sweep, RunOptions, Simulation, SweepParam};
use shellflow::field_io::FieldSet;
use shellflow::regularization::surface_mollify;
use shellflow::shell::{membrane_energy, willmore_energy};
use shellflow::spectral::Fft2;
use shellflow::verify::{identity_trials, mollifier_algebra, variational_check};
use shellflow::Error;

#[derive(Parser)]
#[command(name = "shellflow", version, about = "Viscous fluid coupled to an elastic shell with Willmore bending")]
struct Cli {
    /// TOML configuration; the desk configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint every N steps (0: final state only).
    #[arg(long, global = true, default_value_t = 0)]
    checkpoint_every: usize,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run to `t_final`.
    Simulate {
        /// Continue from a checkpoint written with the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many steps.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Geometric identities, the variational traction check and the mollifier algebra.
    VerifyIdentities {
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Halve one regularization parameter repeatedly and fit the rate.
    Sweep {
        /// theta, kappa, eps or eps1.
        #[arg(long)]
        param: String,
        #[arg(long, default_value_t = 5)]
        halvings: usize,
        /// Steps per point for kappa, eps and eps1.
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// Recompute diagnostics of a checkpoint.
    Diagnose { checkpoint: PathBuf },
}

fn load_config(cli: &Cli) -> shellflow::Result<SimConfig> {
    let mut c = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            SimConfig::parse(&text)?
        }
        None => SimConfig::desk(),
    };
    if let Some(s) = cli.seed {
        c.run.seed = s;
    }
    Ok(c)
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> shellflow::Result<()> {
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> shellflow::Result<i32> {
    let config = load_config(cli)?;
    match &cli.cmd {
        Cmd::Simulate { resume, max_steps } => {
            let sim = Simulation::new(config)?;
            let opts = RunOptions { out: cli.out.clone(), checkpoint_every: cli.checkpoint_every, resume: resume.clone(), max_steps: *max_steps };
            let s = simulate(&sim, &opts)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} after {} steps, t = {:e}", s.termination.describe(), s.manifest.steps_completed, s.manifest.t_reached);
            Ok(s.termination.exit_code())
        }
        Cmd::VerifyIdentities { trials } => {
            let n = config.grid.n1;
            let id = identity_trials(n, *trials, config.run.seed)?;
            let var = variational_check(n, 3, 3, config.run.seed)?;
            let mol = mollifier_algebra(n, config.run.seed)?;
            let rows = [
                ("metric_pullback", id.metric_pullback, 1e-8),
                ("det_g", id.det_g, 1e-8),
                ("theta", id.theta, 1e-8),
                // these two go through resampling and only hold to interpolation accuracy
                ("laplacian_symmetry", id.laplacian_symmetry, 1e-2),
                ("curvature_invariance", id.curvature_invariance, 1e-2),
                ("variational", var.max_rel_err, 1e-4),
                ("mollifier_self_adjoint", mol.self_adjoint, 1e-12),
                ("mollifier_symbol", mol.symbol, 1e-13),
                ("summation_by_parts", mol.summation_by_parts, 1e-11),
            ];
            let mut text = String::from("check,residual,tolerance,status\n");
            let mut ok = true;
            for (name, r, tol) in rows {
                let pass = r <= tol;
                ok &= pass;
                text += &format!("{name},{r:e},{tol:e},{}\n", if pass { "pass" } else { "FAIL" });
            }
            text += &format!("# curvature convention: {}\n", var.convention);
            emit(cli.out.as_deref(), "identities.csv", &text)?;
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Sweep { param, halvings, steps } => {
            let p: SweepParam = param.parse()?;
            let r = sweep(&config, p, *halvings, *steps)?;
            emit(cli.out.as_deref(), &format!("sweep_{param}.csv"), &r.to_table())?;
            Ok(0)
        }
        Cmd::Diagnose { checkpoint } => {
            let sim = Simulation::new(config)?;
            let st = sim.restore(&FieldSet::read(checkpoint)?)?;
            let (ctx, s) = (&sim.ctx, &sim.ctx.surface);
            let h_bar = surface_mollify(s, &st.h, &ctx.params.height_mollifier)?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(sim.config.run.seed);
            let c = coercivity(s, &h_bar, 20, sim.config.run.coercivity_floor, &mut rng)?;
            let fft = Fft2::new(*s.grid());
            let rows = [
                ("step", st.step as f64),
                ("t", st.t),
                ("kinetic", ctx.kinetic_energy(&st.v)),
                ("willmore", willmore_energy(s, &st.h, &ctx.params.shell)?),
                ("membrane", membrane_energy(s, &st.h, &ctx.params.shell)?),
                ("physical_energy", ctx.physical_energy(&st)?),
                ("divergence", ctx.divergence_norm(&st)?),
                ("volume_error", ctx.volume_error(&st)?),
                ("theta_mismatch", ctx.theta_mismatch(&st)?),
                ("v_h2", volume_sobolev_norm(&ctx.grid, &st.v, 2)?),
                ("h_h4", fft.sobolev_norm(&st.h, 4.0)),
                ("coercivity", c.nu1),
            ];
            let text: String = std::iter::once("quantity,value\n".to_string()).chain(rows.iter().map(|(k, v)| format!("{k},{v:e}\n"))).collect();
            emit(cli.out.as_deref(), "diagnose.csv", &text)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("shellflow: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
