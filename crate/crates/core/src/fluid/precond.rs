//! Exact inverse of the reference step operator (`a = I`, flat shell, identity tangential
//! map). The reference operator commutes with periodic shifts in `y`, so each Fourier
//! mode decouples into a block tridiagonal system in `z` with 3x3 blocks, solved by
//! block Thomas elimination.

use num_complex::Complex64;

use crate::error::Result;
use crate::spectral::Fft2;

use super::fem::unknown_nodes;
use super::system::StepOperator;

type C3 = [[Complex64; 3]; 3];

const CZ: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn cmul(a: &C3, b: &C3) -> C3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn cmv(a: &C3, v: &[Complex64; 3]) -> [Complex64; 3] {
    std::array::from_fn(|i| (0..3).map(|k| a[i][k] * v[k]).sum())
}

fn cinv(m: &C3) -> C3 {
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / det))
}

#[derive(Debug, Clone)]
pub struct FourierPreconditioner {
    fft: Fft2,
    n3: usize,
    /// Per mode and layer: inverse pivot, multiplier and upper block.
    dinv: Vec<C3>,
    lower: Vec<C3>,
    upper: Vec<C3>,
}

impl FourierPreconditioner {
    /// Builds the symbol by probing `reference` with unit vectors at the origin column.
    pub fn new(reference: &StepOperator) -> Result<Self> {
        let g = *reference.block.grid();
        let fft = Fft2::new(g.surface());
        let n3 = g.n3;
        let modes = g.layer();
        let n = unknown_nodes(&g) * 3;
        // b[(mode * n3 + kk) * 3 + d] with d = 0 lower, 1 diagonal, 2 upper
        let mut blocks = vec![[[CZ; 3]; 3]; modes * n3 * 3];
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for kc in 0..n3 {
            for comp in 0..3 {
                x.iter_mut().for_each(|v| *v = 0.0);
                x[kc * modes * 3 + comp] = 1.0;
                reference.apply(&x, &mut y)?;
                for kr in kc.saturating_sub(1)..(kc + 2).min(n3) {
                    let d = kc + 1 - kr;
                    for m in 0..3 {
                        let col: Vec<f64> = (0..modes).map(|p| y[(kr * modes + p) * 3 + m]).collect();
                        for (mode, v) in fft.forward(&col).into_iter().enumerate() {
                            blocks[(mode * n3 + kr) * 3 + d][m][comp] = v;
                        }
                    }
                }
            }
        }
        let mut dinv = vec![[[CZ; 3]; 3]; modes * n3];
        let mut lower = vec![[[CZ; 3]; 3]; modes * n3];
        let mut upper = vec![[[CZ; 3]; 3]; modes * n3];
        for mode in 0..modes {
            let b = |kk: usize, d: usize| &blocks[(mode * n3 + kk) * 3 + d];
            let mut piv = *b(0, 1);
            for kk in 0..n3 {
                let at = mode * n3 + kk;
                if kk > 0 {
                    let l = cmul(b(kk, 0), &dinv[at - 1]);
                    let lu = cmul(&l, b(kk - 1, 2));
                    piv = *b(kk, 1);
                    for i in 0..3 {
                        for j in 0..3 {
                            piv[i][j] -= lu[i][j];
                        }
                    }
                    lower[at] = l;
                }
                dinv[at] = cinv(&piv);
                upper[at] = *b(kk, 2);
            }
        }
        Ok(FourierPreconditioner { fft, n3, dinv, lower, upper })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let modes = self.fft.grid().len();
        let n3 = self.n3;
        let mut hat = vec![[CZ; 3]; modes * n3];
        for kk in 0..n3 {
            for m in 0..3 {
                let col: Vec<f64> = (0..modes).map(|p| r[(kk * modes + p) * 3 + m]).collect();
                for (mode, v) in self.fft.forward(&col).into_iter().enumerate() {
                    hat[mode * n3 + kk][m] = v;
                }
            }
        }
        for mode in 0..modes {
            let base = mode * n3;
            for kk in 1..n3 {
                let t = cmv(&self.lower[base + kk], &hat[base + kk - 1]);
                for m in 0..3 {
                    hat[base + kk][m] -= t[m];
                }
            }
            hat[base + n3 - 1] = cmv(&self.dinv[base + n3 - 1], &hat[base + n3 - 1]);
            for kk in (0..n3 - 1).rev() {
                let t = cmv(&self.upper[base + kk], &hat[base + kk + 1]);
                let rhs: [Complex64; 3] = std::array::from_fn(|m| hat[base + kk][m] - t[m]);
                hat[base + kk] = cmv(&self.dinv[base + kk], &rhs);
            }
        }
        let mut out = vec![0.0; r.len()];
        for kk in 0..n3 {
            for m in 0..3 {
                let spec: Vec<Complex64> = (0..modes).map(|mode| hat[mode * n3 + kk][m]).collect();
                for (p, v) in self.fft.inverse(spec).into_iter().enumerate() {
                    out[(kk * modes + p) * 3 + m] = v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use crate::fluid::fem::{lumped_mass, BlockOperator, Element};
    use crate::fluid::system::Coupling;
    use crate::geometry::ReferenceSurface;
    use crate::grid::Grid3;
    use crate::mat::I3;
    use crate::regularization::MollifierSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverts_the_reference_operator() {
        let g = Grid3::new(8, 6, 5, 1.0, 1.0, 1.0).unwrap();
        let s = ReferenceSurface::flat(g.surface(), Backend::Spectral, 0.5).unwrap();
        let el = Element::new(g.h());
        let dt = 1e-2;
        let mut block = BlockOperator::assemble(&g, |_| el.matrix(&I3, 1.0, 1e2));
        block.add_diagonal(&lumped_mass(&g).iter().map(|m| m / dt).collect::<Vec<_>>());
        let coupling = Coupling::reference(&s, MollifierSpec::surface(4e-3, 2.0), 1.0, 1e-3, dt).unwrap();
        let op = StepOperator { block, coupling };
        let pc = FourierPreconditioner::new(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; op.len()];
        op.apply(&x, &mut y).unwrap();
        let z = pc.apply(&y);
        let err = x.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err}");
    }
}
