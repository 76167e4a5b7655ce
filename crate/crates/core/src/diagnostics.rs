//! Discrete norms, the elliptic energy `E_hbar`, the energy ledger and the ball check.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{shape_check, Result};
use crate::fluid::StepReport;
use crate::geometry::ReferenceSurface;
use crate::grid::Grid3;
use crate::mat::V3;
use crate::random::smooth_field;
use crate::shell::{bending_tensor_a, Tensor4};
use crate::spectral::Fft2;

/// `H^k` norm on the slab from forward differences: periodic across, one sided in
/// depth. Every multi-index with `|alpha| <= k` is counted once.
pub fn volume_sobolev_norm(g: &Grid3, v: &[V3], k: usize) -> Result<f64> {
    shape_check("velocity", v.len(), g.nodes())?;
    let [h1, h2, h3] = g.h();
    let w = h1 * h2 * h3;
    let (n1, n2) = (g.n1, g.n2);
    let mut acc = 0.0;
    // (values, layers, next allowed direction)
    let mut level: Vec<(Vec<f64>, usize, usize)> = (0..3).map(|c| (v.iter().map(|x| x[c]).collect(), g.n3 + 1, 0)).collect();
    for order in 0..=k {
        for (f, _, _) in &level {
            acc += w * f.iter().map(|x| x * x).sum::<f64>();
        }
        if order == k {
            break;
        }
        let mut next = Vec::new();
        for (f, nz, from) in &level {
            for d in *from..3 {
                let (out, mz) = match d {
                    0 | 1 => {
                        let mut out = vec![0.0; f.len()];
                        let hh = if d == 0 { h1 } else { h2 };
                        for kk in 0..*nz {
                            for i in 0..n1 {
                                for j in 0..n2 {
                                    let (ip, jp) = if d == 0 { ((i + 1) % n1, j) } else { (i, (j + 1) % n2) };
                                    let b = kk * n1 * n2;
                                    out[b + i * n2 + j] = (f[b + ip * n2 + jp] - f[b + i * n2 + j]) / hh;
                                }
                            }
                        }
                        (out, *nz)
                    }
                    _ => {
                        if *nz < 2 {
                            continue;
                        }
                        let l = n1 * n2;
                        let out = (0..(nz - 1) * l).map(|m| (f[m + l] - f[m]) / h3).collect();
                        (out, nz - 1)
                    }
                };
                next.push((out, mz, d));
            }
        }
        level = next;
    }
    Ok(acc.sqrt())
}

/// `int Atilde^{abcd} f_ab f_cd dS` with the linearized tensor at `hbar`.
pub fn elliptic_energy(surface: &ReferenceSurface, hbar: &[f64], f: &[f64]) -> Result<f64> {
    let a = bending_tensor_a(surface, hbar, true)?;
    elliptic_energy_with(surface, &a, f)
}

fn second_derivatives(surface: &ReferenceSurface, f: &[f64]) -> Result<[[Vec<f64>; 2]; 2]> {
    shape_check("f", f.len(), surface.grid().len())?;
    let d = surface.diff().many(f, &[(2, 0), (1, 1), (0, 2)]);
    Ok([[d[0].clone(), d[1].clone()], [d[1].clone(), d[2].clone()]])
}

fn elliptic_energy_with(surface: &ReferenceSurface, a: &[Tensor4], f: &[f64]) -> Result<f64> {
    let d2 = second_derivatives(surface, f)?;
    let sg = surface.sqrt_det_g0();
    let w = surface.grid().cell_area();
    let mut acc = 0.0;
    for k in 0..f.len() {
        let mut s = 0.0;
        for al in 0..2 {
            for be in 0..2 {
                for ga in 0..2 {
                    for de in 0..2 {
                        s += a[k][al][be][ga][de] * d2[al][be][k] * d2[ga][de][k];
                    }
                }
            }
        }
        acc += w * sg[k] * s;
    }
    Ok(acc)
}

/// `||grad_0^2 f||_L2^2` on the chart.
pub fn hessian_norm_sq(surface: &ReferenceSurface, f: &[f64]) -> Result<f64> {
    let d2 = second_derivatives(surface, f)?;
    let sg = surface.sqrt_det_g0();
    let w = surface.grid().cell_area();
    Ok((0..f.len()).map(|k| w * sg[k] * (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| d2[a][b][k].powi(2)).sum::<f64>()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coercivity {
    /// Smallest observed `E_hbar(f) / ||grad_0^2 f||^2`.
    pub nu1: f64,
    pub samples: usize,
    /// Set when `nu1` falls below the requested floor.
    pub flagged: bool,
}

/// Measures the coercivity constant over `samples` random smooth test functions.
pub fn coercivity<R: Rng>(surface: &ReferenceSurface, hbar: &[f64], samples: usize, floor: f64, rng: &mut R) -> Result<Coercivity> {
    let a = bending_tensor_a(surface, hbar, true)?;
    let g = surface.grid();
    let kmax = (g.n1.min(g.n2) / 4).max(1) as i32;
    let mut nu1 = f64::INFINITY;
    for _ in 0..samples {
        let f = smooth_field(g, rng, kmax, 1.0, 1.0);
        let den = hessian_norm_sq(surface, &f)?;
        if den > 0.0 {
            nu1 = nu1.min(elliptic_energy_with(surface, &a, &f)? / den);
        }
    }
    Ok(Coercivity { nu1, samples, flagged: nu1 < floor })
}

/// Norms of one state of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormSample {
    pub step: usize,
    pub t: f64,
    /// `||v||_{H^k}`, `k = 0..3`.
    pub v: [f64; 4],
    pub v_t_h1: f64,
    pub h_h2: f64,
    pub h_h4: f64,
    pub h_h55: f64,
    pub h_t_h2: f64,
    pub h_t_h25: f64,
    pub h_tt_h05: f64,
    /// Running `||(v, h)||_{Y_t}^2`.
    pub y2: f64,
}

/// Accumulates the `Y_T` norm of a trajectory one state at a time: time integrals by
/// left rectangles, suprema over the states seen so far.
#[derive(Debug, Clone)]
pub struct NormTracker {
    grid: Grid3,
    fft: Fft2,
    dt: f64,
    prev: Option<(Vec<V3>, Vec<f64>)>,
    prev_ht: Option<Vec<f64>>,
    integral: f64,
    sup: [f64; 3],
    pub samples: Vec<NormSample>,
}

impl NormTracker {
    pub fn new(grid: Grid3, dt: f64) -> Self {
        NormTracker { grid, fft: Fft2::new(grid.surface()), dt, prev: None, prev_ht: None, integral: 0.0, sup: [0.0; 3], samples: Vec::new() }
    }

    pub fn push(&mut self, step: usize, t: f64, v: &[V3], h: &[f64]) -> Result<NormSample> {
        shape_check("height", h.len(), self.grid.layer())?;
        let g = &self.grid;
        let dt = self.dt;
        let mut s = NormSample { step, t, ..Default::default() };
        for k in 0..4 {
            s.v[k] = volume_sobolev_norm(g, v, k)?;
        }
        s.h_h2 = self.fft.sobolev_norm(h, 2.0);
        s.h_h4 = self.fft.sobolev_norm(h, 4.0);
        s.h_h55 = self.fft.sobolev_norm(h, 5.5);
        let mut ht = None;
        if let Some((pv, ph)) = &self.prev {
            let vt: Vec<V3> = v.iter().zip(pv).map(|(a, b)| std::array::from_fn(|c| (a[c] - b[c]) / dt)).collect();
            s.v_t_h1 = volume_sobolev_norm(g, &vt, 1)?;
            let d: Vec<f64> = h.iter().zip(ph).map(|(a, b)| (a - b) / dt).collect();
            s.h_t_h2 = self.fft.sobolev_norm(&d, 2.0);
            s.h_t_h25 = self.fft.sobolev_norm(&d, 2.5);
            if let Some(pt) = &self.prev_ht {
                let dd: Vec<f64> = d.iter().zip(pt).map(|(a, b)| (a - b) / dt).collect();
                s.h_tt_h05 = self.fft.sobolev_norm(&dd, 0.5);
            }
            ht = Some(d);
            self.integral += dt * (s.v[3].powi(2) + s.v_t_h1.powi(2) + s.h_h55.powi(2) + s.h_t_h25.powi(2) + s.h_tt_h05.powi(2));
        }
        self.sup[0] = self.sup[0].max(s.v[2].powi(2));
        self.sup[1] = self.sup[1].max(s.h_h4.powi(2));
        self.sup[2] = self.sup[2].max(s.h_t_h2.powi(2));
        s.y2 = self.integral + self.sup.iter().sum::<f64>();
        self.prev = Some((v.to_vec(), h.to_vec()));
        self.prev_ht = ht;
        self.samples.push(s);
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BallStatus {
    Inside,
    Exceeded { step: usize, t: f64 },
}

/// First sample whose running `Y` norm squared exceeds `m`.
pub fn ball_check(samples: &[NormSample], m: f64) -> BallStatus {
    samples.iter().find(|s| s.y2 > m).map_or(BallStatus::Inside, |s| BallStatus::Exceeded { step: s.step, t: s.t })
}

/// One row of the energy ledger. Rates are per unit time, `cum_*` are time integrals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyRow {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    /// `sigma/2 E_hbar` in the frozen quadratic form.
    pub elastic: f64,
    pub e_ben: f64,
    pub e_mem: f64,
    /// `1/2 |v|^2 + sigma E_ben + gamma Area`.
    pub total: f64,
    pub viscous: f64,
    pub artificial: f64,
    pub penalty: f64,
    pub pressure_energy: f64,
    pub work: f64,
    pub cum_viscous: f64,
    pub cum_artificial: f64,
    pub cum_pressure: f64,
    pub cum_work: f64,
    pub balance: f64,
    pub divergence: f64,
    pub traction_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    pub rows: Vec<EnergyRow>,
}

impl EnergyLedger {
    /// Appends the step that produced the state at `t`.
    pub fn record(&mut self, step: usize, t: f64, dt: f64, rep: &StepReport, e_ben: f64, e_mem: f64) {
        let last = self.rows.last().copied().unwrap_or_default();
        let work = rep.work_force + rep.work_pressure + rep.work_shell;
        self.rows.push(EnergyRow {
            step,
            t,
            kinetic: rep.kinetic1,
            elastic: rep.elastic1,
            e_ben,
            e_mem,
            total: rep.kinetic1 + e_ben + e_mem,
            viscous: rep.viscous,
            artificial: rep.artificial,
            penalty: rep.penalty,
            pressure_energy: rep.pressure_energy,
            work,
            cum_viscous: last.cum_viscous + dt * rep.viscous,
            cum_artificial: last.cum_artificial + dt * rep.artificial,
            cum_pressure: last.cum_pressure + dt * rep.pressure_energy,
            cum_work: last.cum_work + dt * work,
            balance: rep.balance,
            divergence: rep.divergence,
            traction_residual: rep.traction_residual,
        });
    }

    /// Per-step balance residuals.
    pub fn energy_balance(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.balance).collect()
    }

    /// First row after `skip` where the total energy grows by more than `tol`.
    pub fn first_increase(&self, skip: usize, tol: f64) -> Option<usize> {
        self.rows.windows(2).skip(skip).find(|w| w[1].total > w[0].total + tol).map(|w| w[1].step)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from(
            "step,t,kinetic,elastic,e_ben,e_mem,total,viscous,artificial,penalty,pressure_energy,work,cum_viscous,cum_artificial,cum_pressure,cum_work,balance,divergence,traction_residual\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.step,
                r.t,
                r.kinetic,
                r.elastic,
                r.e_ben,
                r.e_mem,
                r.total,
                r.viscous,
                r.artificial,
                r.penalty,
                r.pressure_energy,
                r.work,
                r.cum_viscous,
                r.cum_artificial,
                r.cum_pressure,
                r.cum_work,
                r.balance,
                r.divergence,
                r.traction_residual
            );
        }
        s
    }
}

pub fn norms_table(samples: &[NormSample]) -> String {
    let mut s = String::from("step,t,v_l2,v_h1,v_h2,v_h3,v_t_h1,h_h2,h_h4,h_h5.5,h_t_h2,h_t_h2.5,h_tt_h0.5,y2\n");
    for n in samples {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            n.step, n.t, n.v[0], n.v[1], n.v[2], n.v[3], n.v_t_h1, n.h_h2, n.h_h4, n.h_h55, n.h_t_h2, n.h_t_h25, n.h_tt_h05, n.y2
        );
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
