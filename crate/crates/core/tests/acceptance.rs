//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero if any
//! fails. Runs several minutes on one core.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shellflow::backend::Backend;
use shellflow::config::{SimConfig, VelocitySpec};
use shellflow::diagnostics::coercivity;
use shellflow::driver::{simulate, sweep, uniqueness_probe, RunOptions, Simulation, SweepParam};
use shellflow::fluid::compatibility_initial;
use shellflow::geometry::ReferenceSurface;
use shellflow::grid::Grid2;
use shellflow::random::smooth_field;
use shellflow::spectral::Fft2;
use shellflow::verify::{fit_slope, identity_trials, mollifier_algebra, symmetry_refinement, variational_check};

type Outcome = shellflow::Result<(bool, String)>;
type Check = (&'static str, fn() -> Outcome);

fn identities() -> Outcome {
    let t = Instant::now();
    let r = identity_trials(64, 50, 11)?;
    let secs = t.elapsed().as_secs_f64();
    let ok = r.metric_pullback <= 1e-8 && r.det_g <= 1e-8 && r.theta <= 1e-8 && secs <= 60.0;
    Ok((ok, format!("metric {:.2e}, det {:.2e}, theta {:.2e} (tol 1e-8), {secs:.1} s (limit 60)", r.metric_pullback, r.det_g, r.theta)))
}

fn symmetry() -> Outcome {
    let mut pts = Vec::new();
    let mut slowest = Duration::ZERO;
    for n in [32, 64, 128] {
        let t = Instant::now();
        pts.extend(symmetry_refinement(&[n], 12)?);
        slowest = slowest.max(t.elapsed());
    }
    let order = -fit_slope(&pts.iter().map(|&(n, r)| (n as f64, r)).collect::<Vec<_>>());
    let res: Vec<String> = pts.iter().map(|(n, r)| format!("{n}:{r:.2e}")).collect();
    let ok = order >= 1.8 && slowest.as_secs_f64() <= 30.0;
    Ok((ok, format!("residuals {}, order {order:.2} (min 1.8), slowest {:.1} s (limit 30)", res.join(" "), slowest.as_secs_f64())))
}

fn variational() -> Outcome {
    let r = variational_check(32, 10, 10, 13)?;
    Ok((r.max_rel_err <= 1e-4, format!("{} pairs, max rel err {:.2e} (tol 1e-4), convention: {}", r.pairs, r.max_rel_err, r.convention)))
}

fn coercive() -> Outcome {
    let c = SimConfig::desk();
    let s = ReferenceSurface::flat(Grid2::unit(c.grid.n1)?, Backend::Spectral, c.surface.thickness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let flat = coercivity(&s, &vec![0.0; s.grid().len()], 100, 0.9, &mut rng)?;
    // smallness ball: ||hbar||_{H^2} <= 0.1 thickness, sampled on its boundary
    let radius = 0.1 * c.surface.thickness;
    let fft = Fft2::new(*s.grid());
    let mut worst = f64::INFINITY;
    for _ in 0..5 {
        let h = smooth_field(s.grid(), &mut rng, 3, 2.0, 1.0);
        let scale = radius / fft.sobolev_norm(&h, 2.0);
        let h: Vec<f64> = h.iter().map(|x| x * scale).collect();
        worst = worst.min(coercivity(&s, &h, 100, 0.5, &mut rng)?.nu1);
    }
    let ok = flat.nu1 >= 0.9 && worst >= 0.5;
    Ok((ok, format!("nu1 flat {:.6} (min 0.9), nu1 on ||hbar||_H2 = {radius} {worst:.6} (min 0.5)", flat.nu1)))
}

fn penalization() -> Outcome {
    let t = Instant::now();
    let r = sweep(&SimConfig::desk(), SweepParam::Theta, 5, 0)?;
    let secs = t.elapsed().as_secs_f64();
    let ok = (0.35..=0.65).contains(&r.slope) && secs <= 600.0;
    Ok((ok, format!("slope {:.3} (range [0.35, 0.65]) over {} thetas, {secs:.0} s (limit 600)", r.slope, r.rows.len())))
}

fn mollifiers() -> Outcome {
    let r = mollifier_algebra(32, 16)?;
    let ok = r.self_adjoint <= 1e-12 && r.symbol <= 1e-13 && r.summation_by_parts <= 1e-11;
    Ok((ok, format!("self-adjoint {:.1e} (1e-12), symbol {:.1e} (1e-13), summation by parts {:.1e} (1e-11)", r.self_adjoint, r.symbol, r.summation_by_parts)))
}

/// Balance residual at the end of a fixed window, for three steps.
fn energy() -> Outcome {
    let window = 0.02;
    let mut pts = Vec::new();
    let mut increase = None;
    for dt in [2e-3, 1e-3, 5e-4] {
        let mut c = SimConfig::desk();
        c.time.dt = dt;
        c.time.t_final = window;
        c.run.m_ball = f64::INFINITY;
        let r = simulate(&Simulation::new(c)?, &RunOptions::default())?;
        let last = r.ledger.rows.last().expect("steps were taken");
        pts.push((dt, last.balance.abs()));
        if dt == 1e-3 {
            increase = r.ledger.first_increase(5, 0.0);
        }
    }
    let slope = fit_slope(&pts);
    let ok = (slope - 1.0).abs() <= 0.2 && increase.is_none();
    let res: Vec<String> = pts.iter().map(|(dt, b)| format!("{dt:e}:{b:.3e}")).collect();
    Ok((ok, format!("balance at t = {window}: {}, slope {slope:.3} (1.0 +- 0.2); first energy increase after step 5: {increase:?}", res.join(" "))))
}

fn uniqueness() -> Outcome {
    let c = SimConfig::desk();
    let tol = c.picard.tol;
    let r = uniqueness_probe(&Simulation::new(c)?, 1e-3, 5, 18)?;
    let ok = r.max_sweeps <= 8 && r.final_gap() <= 10.0 * tol;
    Ok((ok, format!("max sweeps {} (limit 8), final gap {:.2e} (limit {:.0e})", r.max_sweeps, r.final_gap(), 10.0 * tol)))
}

fn compatibility() -> Outcome {
    let mut c = SimConfig::desk();
    c.initial.velocity = VelocitySpec::Shear { amp: 1.0 };
    let sim = Simulation::new(c.clone())?;
    let g = c.grid3()?;
    let s = c.surface()?;
    let p = c.step_params();
    let u: Vec<[f64; 3]> = (0..g.nodes()).map(|n| [(2.0 * PI * g.node_point(n)[1]).sin(), 0.0, 0.0]).collect();
    let z = vec![[0.0; 3]; g.nodes()];
    let compliant = compatibility_initial(&g, &s, &u, &z, &vec![0.0; g.layer()], p.nu, p.kappa, &p.shell)?;
    let r = sim.compat.elliptic_residual;
    let ok = r <= 1e-9 && compliant.cp_max() == 0.0 && compliant.def_tan_max() == 0.0;
    Ok((
        ok,
        format!(
            "elliptic residual {r:.2e} (tol 1e-9); desk CP {:.2e}, def_tan {:.2e}; compliant field CP {:e}, def_tan {:e} (exactly 0)",
            sim.compat.cp_max(),
            sim.compat.def_tan_max(),
            compliant.cp_max(),
            compliant.def_tan_max()
        ),
    ))
}

fn restart() -> Outcome {
    let mut c = SimConfig::desk();
    c.time.t_final = 4.0 * c.time.dt;
    let sim = Simulation::new(c)?;
    let dir = tempfile::tempdir()?;
    let straight = simulate(&sim, &RunOptions::default())?;
    simulate(&sim, &RunOptions { out: Some(dir.path().to_path_buf()), max_steps: Some(2), ..Default::default() })?;
    let resumed = simulate(&sim, &RunOptions { resume: Some(dir.path().join("final.sf")), ..Default::default() })?;
    let (a, b) = (&straight.state, &resumed.state);
    let ok = a.step == b.step && a.v == b.v && a.h == b.h && a.eta == b.eta && a.q == b.q;
    Ok((ok, format!("straight vs 2 + 2 steps: step {} / {}, fields {}", a.step, b.step, if ok { "identical" } else { "differ" })))
}

fn main() {
    let criteria: [Check; 10] = [
        ("geometric identities", identities),
        ("reparameterization symmetry", symmetry),
        ("variational consistency", variational),
        ("coercivity", coercive),
        ("penalization rate", penalization),
        ("mollifier algebra", mollifiers),
        ("energy ledger", energy),
        ("fixed point and uniqueness", uniqueness),
        ("compatibility solver", compatibility),
        ("determinism and restart", restart),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, i + 1, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
