//! Smoothing devices: the surface mollifier `(1 - eps Delta_0)^(-p/2)`, a volume
//! mollifier with even reflection across the walls, and the `kappa Delta_0^2`
//! boundary viscosity.

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Diff};
use crate::error::{shape_check, Error, Result};
use crate::geometry::{laplace_beltrami, MetricField, ReferenceSurface};
use crate::grid::Grid3;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierTarget {
    Surface,
    Volume,
}

/// For a surface target `eps` is the strength in `(1 - eps Delta_0)`; for a volume
/// target it is the kernel radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    pub eps: f64,
    pub p: f64,
    pub target: MollifierTarget,
}

impl MollifierSpec {
    pub fn surface(eps: f64, p: f64) -> Self {
        MollifierSpec { eps, p, target: MollifierTarget::Surface }
    }

    pub fn volume(radius: f64) -> Self {
        MollifierSpec { eps: radius, p: 0.0, target: MollifierTarget::Volume }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !(self.p >= 0.0) || !self.eps.is_finite() || !self.p.is_finite() {
            return Err(Error::Domain(format!("mollifier needs eps >= 0 and p >= 0, got {} and {}", self.eps, self.p)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.eps == 0.0 || (self.target == MollifierTarget::Surface && self.p == 0.0)
    }
}

/// Fourier symbol of the surface mollifier on the flat chart.
pub fn surface_symbol(eps: f64, p: f64, k1: f64, k2: f64) -> f64 {
    (1.0 + eps * (k1 * k1 + k2 * k2)).powf(-p / 2.0)
}

/// `Delta_0` of the reference surface: the chart Laplacian when `g0 = I`, the
/// divergence form Laplace-Beltrami operator otherwise.
pub fn surface_laplacian(surface: &ReferenceSurface, f: &[f64]) -> Result<Vec<f64>> {
    let d = surface.diff();
    shape_check("surface field", f.len(), d.grid().len())?;
    if surface.is_flat() && d.backend() == Backend::Spectral {
        return Ok(d.fft().multiply(f, lap_symbol));
    }
    if surface.is_flat() {
        let a = d.d(f, 2, 0);
        let b = d.d(f, 0, 2);
        Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
    } else {
        laplace_beltrami(d, &surface.metric_at(0.0)?, f)
    }
}

fn lap_symbol(k1: f64, k2: f64, n1: bool, n2: bool) -> Complex64 {
    let a = if n1 { 0.0 } else { k1 * k1 };
    let b = if n2 { 0.0 } else { k2 * k2 };
    Complex64::new(-(a + b), 0.0)
}

/// Flat chart bilaplacian `d1^4 + 2 d1^2 d2^2 + d2^4`.
pub fn bilaplacian(diff: &Diff, f: &[f64]) -> Vec<f64> {
    let a = diff.d(f, 4, 0);
    let b = diff.d(f, 2, 2);
    let c = diff.d(f, 0, 4);
    (0..f.len()).map(|k| a[k] + 2.0 * b[k] + c[k]).collect()
}

/// Applies `(1 - eps Delta_0)^(-p/2)`.
///
/// On a flat chart this is the exact Fourier multiplier. On a curved reference the
/// operator `1 - eps Delta_0` is inverted `p/2` times by conjugate gradients in the
/// `sqrt g0` inner product, so `p` must then be an even integer.
pub fn surface_mollify(surface: &ReferenceSurface, f: &[f64], spec: &MollifierSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    shape_check("surface field", f.len(), surface.grid().len())?;
    if spec.is_identity() {
        return Ok(f.to_vec());
    }
    if surface.is_flat() {
        let (eps, p) = (spec.eps, spec.p);
        return Ok(surface.diff().fft().multiply(f, |k1, k2, _, _| Complex64::new(surface_symbol(eps, p, k1, k2), 0.0)));
    }
    let half = spec.p / 2.0;
    if half.fract() != 0.0 {
        return Err(Error::Domain(format!("curved reference needs an even mollifier order, got {}", spec.p)));
    }
    let metric = surface.metric_at(0.0)?;
    let mut u = f.to_vec();
    for _ in 0..half as usize {
        u = solve_shifted(surface.diff(), &metric, spec.eps, &u)?;
    }
    Ok(u)
}

/// Solves `(1 - eps Delta_g) u = f` with CG on the symmetric form `W - eps W Delta_g`.
fn solve_shifted(diff: &Diff, metric: &MetricField, eps: f64, f: &[f64]) -> Result<Vec<f64>> {
    let w = &metric.sqrt_det;
    let n = f.len();
    let wbar = w.iter().sum::<f64>() / n as f64;
    let apply = |u: &[f64]| -> Result<Vec<f64>> {
        let l = laplace_beltrami(diff, metric, u)?;
        Ok((0..n).map(|k| w[k] * (u[k] - eps * l[k])).collect())
    };
    let precond = |r: &[f64]| -> Vec<f64> { diff.fft().multiply(r, |k1, k2, _, _| Complex64::new(1.0 / (wbar * (1.0 + eps * (k1 * k1 + k2 * k2))), 0.0)) };
    let b: Vec<f64> = (0..n).map(|k| w[k] * f[k]).collect();
    let bn = dot(&b, &b).sqrt();
    let mut x = precond(&b);
    let ax = apply(&x)?;
    let mut r: Vec<f64> = (0..n).map(|k| b[k] - ax[k]).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..500 {
        if dot(&r, &r).sqrt() <= 1e-14 * bn.max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        z = precond(&r);
        let rz2 = dot(&r, &z);
        let beta = rz2 / rz;
        rz = rz2;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if dot(&r, &r).sqrt() <= 1e-10 * bn {
        return Ok(x);
    }
    Err(Error::Convergence("mollifier inverse did not converge".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Normalized discrete weights of the bump kernel of the given radius.
fn kernel_1d(radius: f64, h: f64) -> Vec<f64> {
    let m = (radius / h).ceil() as usize;
    let mut w: Vec<f64> = (0..=2 * m).map(|i| bump((i as f64 - m as f64) * h / radius)).collect();
    if w.iter().all(|v| *v == 0.0) {
        return vec![1.0];
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Convolves a nodal scalar field on the slab with a separable bump kernel of radius
/// `spec.eps`, periodic in `y` and evenly reflected across `z = 0` and the top layer.
pub fn volume_mollify(g: &Grid3, f: &[f64], spec: &MollifierSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    shape_check("volume field", f.len(), g.nodes())?;
    if spec.eps == 0.0 {
        return Ok(f.to_vec());
    }
    if spec.eps >= g.depth {
        return Err(Error::Domain(format!("mollifier radius {} exceeds slab depth {}", spec.eps, g.depth)));
    }
    let hs = g.h();
    let ks: [Vec<f64>; 3] = std::array::from_fn(|d| kernel_1d(spec.eps, hs[d]));
    let n3 = g.n3 as isize;
    let reflect = |k: isize| -> usize {
        let mut k = k;
        if k < 0 {
            k = -k;
        }
        if k > n3 {
            k = 2 * n3 - k;
        }
        k as usize
    };
    let mut cur = f.to_vec();
    for (dir, w) in ks.iter().enumerate() {
        if w.len() == 1 {
            continue;
        }
        let m = (w.len() / 2) as isize;
        let mut out = vec![0.0; cur.len()];
        for k in 0..=g.n3 {
            for i in 0..g.n1 {
                for j in 0..g.n2 {
                    let mut acc = 0.0;
                    for (t, &c) in w.iter().enumerate() {
                        let o = t as isize - m;
                        let idx = match dir {
                            0 => g.node((i as isize + o).rem_euclid(g.n1 as isize) as usize, j, k),
                            1 => g.node(i, (j as isize + o).rem_euclid(g.n2 as isize) as usize, k),
                            _ => g.node(i, j, reflect(k as isize + o)),
                        };
                        acc += c * cur[idx];
                    }
                    out[g.node(i, j, k)] = acc;
                }
            }
        }
        cur = out;
    }
    Ok(cur)
}

/// `kappa Delta_0^2 v` for one scalar component on the reference surface.
pub fn boundary_biharmonic(surface: &ReferenceSurface, v: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("artificial viscosity must be >= 0, got {kappa}")));
    }
    if surface.is_flat() && surface.backend() == Backend::Spectral {
        let d = surface.diff();
        shape_check("surface field", v.len(), d.grid().len())?;
        return Ok(d.fft().multiply(v, |k1, k2, n1, n2| lap_symbol(k1, k2, n1, n2).powi(2) * kappa));
    }
    let l = surface_laplacian(surface, v)?;
    let ll = surface_laplacian(surface, &l)?;
    Ok(ll.iter().map(|x| kappa * x).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProfileMode;
    use crate::grid::Grid2;
    use crate::random::smooth_field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn flat(n: usize, be: Backend) -> ReferenceSurface {
        ReferenceSurface::flat(Grid2::unit(n).unwrap(), be, 1.0).unwrap()
    }

    fn curved(n: usize) -> ReferenceSurface {
        let modes = vec![ProfileMode { m1: 1, m2: 1, cos: 0.03, sin: 0.0 }];
        ReferenceSurface::graph(Grid2::unit(n).unwrap(), Backend::Spectral, modes, 0.3).unwrap()
    }

    fn weighted(s: &ReferenceSurface, a: &[f64], b: &[f64]) -> f64 {
        let w = s.sqrt_det_g0();
        (0..a.len()).map(|k| w[k] * a[k] * b[k]).sum::<f64>() * s.grid().cell_area()
    }

    #[test]
    fn identity_cases() {
        let s = flat(16, Backend::Spectral);
        let f = smooth_field(s.grid(), &mut ChaCha8Rng::seed_from_u64(1), 3, 1.0, 1.0);
        assert_eq!(surface_mollify(&s, &f, &MollifierSpec::surface(0.0, 2.0)).unwrap(), f);
        let c = vec![2.5; 256];
        let m = surface_mollify(&s, &c, &MollifierSpec::surface(0.1, 2.0)).unwrap();
        assert!(m.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(surface_mollify(&s, &f, &MollifierSpec::surface(-1.0, 2.0)).is_err());
    }

    #[test]
    fn single_mode_symbol() {
        let s = flat(32, Backend::Spectral);
        let g = *s.grid();
        let (m1, m2) = (3.0, -2.0);
        let f = g.sample(|x, y| (2.0 * PI * (m1 * x + m2 * y)).cos());
        let (eps, p) = (0.01, 3.0);
        let want = surface_symbol(eps, p, 2.0 * PI * m1, 2.0 * PI * m2);
        let m = surface_mollify(&s, &f, &MollifierSpec::surface(eps, p)).unwrap();
        for k in 0..g.len() {
            assert!((m[k] - want * f[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn self_adjoint_and_contractive() {
        for s in [flat(32, Backend::Spectral), curved(32)] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let f: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spec = MollifierSpec::surface(1e-3, 2.0);
            let kf = surface_mollify(&s, &f, &spec).unwrap();
            let kg = surface_mollify(&s, &g, &spec).unwrap();
            let asym = (weighted(&s, &kf, &g) - weighted(&s, &f, &kg)).abs();
            let nf = weighted(&s, &f, &f).sqrt();
            let ng = weighted(&s, &g, &g).sqrt();
            assert!(asym <= 1e-12 * nf * ng, "{asym}");
            assert!(weighted(&s, &kf, &kf).sqrt() <= nf * (1.0 + 1e-12));
        }
    }

    #[test]
    fn curved_inverse_solves_shifted_equation() {
        let s = curved(32);
        let f = smooth_field(s.grid(), &mut ChaCha8Rng::seed_from_u64(5), 4, 1.0, 1.0);
        let eps = 2e-3;
        let u = surface_mollify(&s, &f, &MollifierSpec::surface(eps, 2.0)).unwrap();
        let l = surface_laplacian(&s, &u).unwrap();
        for k in 0..f.len() {
            assert!((u[k] - eps * l[k] - f[k]).abs() < 1e-11);
        }
        assert!(surface_mollify(&s, &f, &MollifierSpec::surface(eps, 3.0)).is_err());
    }

    #[test]
    fn commutes_with_laplacian() {
        let s = flat(32, Backend::Spectral);
        let f = smooth_field(s.grid(), &mut ChaCha8Rng::seed_from_u64(6), 6, 0.5, 1.0);
        let spec = MollifierSpec::surface(0.01, 2.0);
        let a = surface_laplacian(&s, &surface_mollify(&s, &f, &spec).unwrap()).unwrap();
        let b = surface_mollify(&s, &surface_laplacian(&s, &f).unwrap(), &spec).unwrap();
        let sc = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12 * sc));
    }

    #[test]
    fn biharmonic_symbol_and_kernel() {
        // a mid-band mode keeps the FFT rounding of other modes from being amplified
        let s = flat(16, Backend::Spectral);
        let g = *s.grid();
        let f = g.sample(|x, y| (2.0 * PI * (3.0 * x + 2.0 * y)).sin());
        let kap = 0.3;
        let b = boundary_biharmonic(&s, &f, kap).unwrap();
        let k4 = (4.0 * PI * PI * 13.0f64).powi(2);
        let err = b.iter().zip(&f).map(|(x, y)| (x - kap * k4 * y).abs()).fold(0.0, f64::max) / (kap * k4);
        assert!(err < 1e-12, "{err}");
        let c = boundary_biharmonic(&s, &vec![1.0; 256], kap).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn biharmonic_summation_by_parts() {
        for s in [flat(24, Backend::FiniteDifference), curved(24)] {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let n = s.grid().len();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bv = boundary_biharmonic(&s, &v, 1.0).unwrap();
            let lv = surface_laplacian(&s, &v).unwrap();
            let lw = surface_laplacian(&s, &w).unwrap();
            let lhs = weighted(&s, &bv, &w);
            let rhs = weighted(&s, &lv, &lw);
            assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1.0), "{lhs} {rhs}");
            assert!(weighted(&s, &bv, &v) >= 0.0);
        }
    }

    #[test]
    fn volume_mollifier_keeps_constants_and_converges() {
        let g = Grid3::new(16, 16, 12, 1.0, 1.0, 1.0).unwrap();
        let c = vec![3.0; g.nodes()];
        let m = volume_mollify(&g, &c, &MollifierSpec::volume(0.2)).unwrap();
        assert!(m.iter().all(|v| (v - 3.0).abs() < 1e-14));
        let f: Vec<f64> = (0..g.nodes())
            .map(|n| {
                let p = g.node_point(n);
                (2.0 * PI * p[0]).sin() * (PI * p[2]).cos() + p[1] * (1.0 - p[1])
            })
            .collect();
        let mut last = f64::INFINITY;
        for r in [0.4, 0.2, 0.1] {
            let m = volume_mollify(&g, &f, &MollifierSpec::volume(r)).unwrap();
            let e = m.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(e < last);
            last = e;
        }
        assert!(volume_mollify(&g, &f, &MollifierSpec::volume(1.5)).is_err());
    }

    #[test]
    fn volume_mollifier_gradient_scales_like_inverse_radius() {
        let g = Grid3::new(32, 32, 16, 1.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> = (0..g.nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = g.h()[0];
        for r in [0.25, 0.125] {
            let m = volume_mollify(&g, &f, &MollifierSpec::volume(r)).unwrap();
            let mut gmax: f64 = 0.0;
            for k in 0..=g.n3 {
                for i in 0..g.n1 {
                    for j in 0..g.n2 {
                        let a = m[g.node((i + 1) % g.n1, j, k)] - m[g.node(i, j, k)];
                        gmax = gmax.max(a.abs() / h);
                    }
                }
            }
            assert!(gmax * r < 4.0, "radius {r} grad {gmax}");
        }
    }
}
