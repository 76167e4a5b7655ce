//! Self-checks shared by the `verify-identities` command and the test suites: the
//! geometric identities, the variational origin of the shell traction and the
//! algebra of the smoothing operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::Backend;
use crate::error::Result;
use crate::geometry::{ProfileMode, ReferenceSurface};
use crate::grid::Grid2;
use crate::interp::Interpolation;
use crate::kinematics::{identity_suite, IdentityReport, TangentialMap};
use crate::mat;
use crate::random::smooth_field;
use crate::regularization::{boundary_biharmonic, surface_laplacian, surface_mollify, surface_symbol, MollifierSpec};
use crate::shell::{bending_energy, membrane_energy, shell_operator_l, ShellParams};

/// A gently curved periodic reference graph used by the identity checks.
pub fn curved_reference(n: usize, backend: Backend) -> Result<ReferenceSurface> {
    let modes = vec![ProfileMode { m1: 1, m2: 0, cos: 0.03, sin: 0.01 }, ProfileMode { m1: 1, m2: 1, cos: -0.02, sin: 0.0 }];
    ReferenceSurface::graph(Grid2::unit(n)?, backend, modes, 0.3)
}

fn random_pair<R: Rng>(s: &ReferenceSurface, rng: &mut R) -> Result<(Vec<f64>, TangentialMap)> {
    let h = smooth_field(s.grid(), rng, 2, 2.0, 0.05);
    let d0 = smooth_field(s.grid(), rng, 2, 2.0, 0.02);
    let d1 = smooth_field(s.grid(), rng, 2, 2.0, 0.02);
    Ok((h, TangentialMap::from_displacement(s, [d0, d1])?))
}

/// Componentwise worst residuals over `trials` random `(h, eta^tau)` pairs.
pub fn identity_trials(n: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    let s = curved_reference(n, Backend::Spectral)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = IdentityReport { metric_pullback: 0.0, det_g: 0.0, theta: 0.0, laplacian_symmetry: 0.0, curvature_invariance: 0.0 };
    for _ in 0..trials {
        let (h, tau) = random_pair(&s, &mut rng)?;
        let r = identity_suite(&s, &h, &tau, Interpolation::Trigonometric)?;
        worst.metric_pullback = worst.metric_pullback.max(r.metric_pullback);
        worst.det_g = worst.det_g.max(r.det_g);
        worst.theta = worst.theta.max(r.theta);
        worst.laplacian_symmetry = worst.laplacian_symmetry.max(r.laplacian_symmetry);
        worst.curvature_invariance = worst.curvature_invariance.max(r.curvature_invariance);
    }
    Ok(worst)
}

/// Residual of `(Delta_Gcal H) o eta^tau = Delta_g (H o eta^tau)` for one fixed smooth
/// pair sampled on each grid, with second order stencils and cubic resampling.
pub fn symmetry_refinement(sizes: &[usize], seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // modes fixed once, then sampled at every resolution
    let spec: Vec<[f64; 4]> = (0..6).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
    let field = |g: &Grid2, which: usize, amp: f64| {
        g.sample(|x, y| {
            let [a, b, p1, p2] = spec[which * 2];
            let [c, d, _, _] = spec[which * 2 + 1];
            let tp = std::f64::consts::TAU;
            amp * (a * (tp * (x + p1)).cos() * (tp * y).sin() + b * (tp * (y + p2)).sin() + c * (tp * (x + y)).cos() + d * (tp * (x - 2.0 * y)).sin()) / 4.0
        })
    };
    sizes
        .iter()
        .map(|&n| {
            let s = curved_reference(n, Backend::FiniteDifference)?;
            let g = *s.grid();
            let h = field(&g, 0, 0.05);
            let tau = TangentialMap::from_displacement(&s, [field(&g, 1, 0.02), field(&g, 2, 0.02)])?;
            Ok((n, identity_suite(&s, &h, &tau, Interpolation::Cubic)?.laplacian_symmetry))
        })
        .collect()
}

/// Least squares slope of `log y` against `log x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalReport {
    /// Worst `|dE - <sigma L, dh>| / |<sigma L, dh>|` after Richardson extrapolation.
    pub max_rel_err: f64,
    pub pairs: usize,
    /// Which curvature normalization the traction matches.
    pub convention: &'static str,
}

/// Compares `<sigma L(h), dh>` against central differences of `sigma E_ben + gamma Area`
/// along `dh`, with one Richardson step in the difference step.
pub fn variational_check(n: usize, heights: usize, directions: usize, seed: u64) -> Result<VariationalReport> {
    let s = ReferenceSurface::flat(Grid2::unit(n)?, Backend::Spectral, 1.0)?;
    let p = ShellParams { sigma: 1.0, gamma: 0.1, sigma_k: 0.0 };
    let g = *s.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let energy = |h: &[f64]| -> Result<f64> { Ok(p.sigma * bending_energy(&s, h)? + membrane_energy(&s, h, &p)?) };
    let mut worst: f64 = 0.0;
    for _ in 0..heights {
        let h = smooth_field(&g, &mut rng, 3, 3.0, 0.03);
        let l = shell_operator_l(&s, &h, &p)?;
        let w: Vec<f64> = (0..g.len()).map(|k| p.sigma * l[k] * mat::det2(&s.metric_point(k, h[k])).sqrt() * g.cell_area()).collect();
        for _ in 0..directions {
            let dir = smooth_field(&g, &mut rng, 3, 3.0, 1.0);
            let pairing: f64 = w.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let fd = |e: f64| -> Result<f64> {
                let hp: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + e * b).collect();
                let hm: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a - e * b).collect();
                Ok((energy(&hp)? - energy(&hm)?) / (2.0 * e))
            };
            let e = 1e-4;
            let rich = (4.0 * fd(e / 2.0)? - fd(e)?) / 3.0;
            worst = worst.max((rich - pairing).abs() / pairing.abs());
        }
    }
    Ok(VariationalReport { max_rel_err: worst, pairs: heights * directions, convention: "H = trace of the shape operator (k1 + k2); E_ben = int H^2 dS" })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierReport {
    /// `|<Kf, g> - <f, Kg>| / (|f| |g|)`.
    pub self_adjoint: f64,
    /// Worst single mode error against `(1 + eps |k|^2)^(-p/2)`.
    pub symbol: f64,
    /// `|<Delta^2 v, w> - <Delta v, Delta w>| / (|v| |w|)`, with `kappa` folded in.
    pub summation_by_parts: f64,
}

pub fn mollifier_algebra(n: usize, seed: u64) -> Result<MollifierReport> {
    let s = ReferenceSurface::flat(Grid2::unit(n)?, Backend::Spectral, 0.5)?;
    let g = *s.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = MollifierSpec::surface(1e-3, 3.0);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * g.cell_area();
    let norm = |a: &[f64]| dot(a, a).sqrt();
    let mut self_adjoint: f64 = 0.0;
    let mut sbp: f64 = 0.0;
    for _ in 0..10 {
        let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kf = surface_mollify(&s, &f, &spec)?;
        let kh = surface_mollify(&s, &h, &spec)?;
        self_adjoint = self_adjoint.max((dot(&kf, &h) - dot(&f, &kh)).abs() / (norm(&f) * norm(&h)));
        let kappa = 1e-4;
        let bf = boundary_biharmonic(&s, &f, kappa)?;
        let lf = surface_laplacian(&s, &f)?;
        let lh = surface_laplacian(&s, &h)?;
        let lhs = dot(&bf, &h);
        let rhs = kappa * dot(&lf, &lh);
        sbp = sbp.max((lhs - rhs).abs() / (kappa * norm(&lf) * norm(&lh)).max(f64::MIN_POSITIVE));
    }
    let mut symbol: f64 = 0.0;
    for (m1, m2) in [(1, 0), (0, 3), (2, 5), (7, -4)] {
        let (k1, k2) = (std::f64::consts::TAU * m1 as f64, std::f64::consts::TAU * m2 as f64);
        let f = g.sample(|x, y| (k1 * x + k2 * y).cos());
        let want = surface_symbol(spec.eps, spec.p, k1, k2);
        let got = surface_mollify(&s, &f, &spec)?;
        for (a, b) in got.iter().zip(&f) {
            symbol = symbol.max((a - want * b).abs());
        }
    }
    Ok(MollifierReport { self_adjoint, symbol, summation_by_parts: sbp })
}
