//! Truncated two variable Taylor series.
//!
//! A jet of degree `d` stores `f(y + e) = sum c[a,b] e1^a e2^b` for `a + b <= d`,
//! so `c[a,b]` is `d1^a d2^b f / (a! b!)`. Products truncate at the lower degree.

use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_DEG: usize = 4;
const CAP: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    deg: u8,
    c: [f64; CAP],
}

#[inline]
fn pos(a: usize, b: usize) -> usize {
    let t = a + b;
    t * (t + 1) / 2 + b
}

fn count(deg: usize) -> usize {
    (deg + 1) * (deg + 2) / 2
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Jet {
    pub fn constant(v: f64, deg: usize) -> Jet {
        assert!(deg <= MAX_DEG);
        let mut c = [0.0; CAP];
        c[0] = v;
        Jet { deg: deg as u8, c }
    }

    /// Builds a jet from partial derivatives `d[(a,b)] = d1^a d2^b f`.
    pub fn from_derivs(deg: usize, d: impl Fn(usize, usize) -> f64) -> Jet {
        let mut j = Jet::constant(0.0, deg);
        for t in 0..=deg {
            for b in 0..=t {
                let a = t - b;
                j.c[pos(a, b)] = d(a, b) / (fact(a) * fact(b));
            }
        }
        j
    }

    pub fn deg(&self) -> usize {
        self.deg as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        if a + b > self.deg() {
            0.0
        } else {
            self.c[pos(a, b)]
        }
    }

    /// The partial derivative `d1^a d2^b` at the expansion point.
    pub fn deriv_at(&self, a: usize, b: usize) -> f64 {
        self.coeff(a, b) * fact(a) * fact(b)
    }

    /// Replaces the partial derivative `d1^a d2^b` at the expansion point.
    pub fn set_deriv(&mut self, a: usize, b: usize, v: f64) {
        assert!(a + b <= self.deg());
        self.c[pos(a, b)] = v / (fact(a) * fact(b));
    }

    pub fn truncate(&self, deg: usize) -> Jet {
        let deg = deg.min(self.deg());
        let mut c = [0.0; CAP];
        c[..count(deg)].copy_from_slice(&self.c[..count(deg)]);
        Jet { deg: deg as u8, c }
    }

    /// Jet of `d f / d y_dir`, one degree lower.
    pub fn diff(&self, dir: usize) -> Jet {
        assert!(self.deg > 0, "cannot differentiate a degree zero jet");
        let deg = self.deg() - 1;
        let mut out = Jet::constant(0.0, deg);
        for t in 0..=deg {
            for b in 0..=t {
                let a = t - b;
                out.c[pos(a, b)] = if dir == 0 { (a + 1) as f64 * self.c[pos(a + 1, b)] } else { (b + 1) as f64 * self.c[pos(a, b + 1)] };
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut o = *self;
        for v in o.c.iter_mut() {
            *v *= s;
        }
        o
    }

    /// Composition `phi(self)` given `phi^(n)(value)` for `n = 0..=deg`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let deg = self.deg();
        let mut u = *self;
        u.c[0] = 0.0;
        let mut out = Jet::constant(derivs[0], deg);
        let mut pw = Jet::constant(1.0, deg);
        for (n, dn) in derivs.iter().enumerate().take(deg + 1).skip(1) {
            pw = pw * u;
            out = out + pw.scale(dn / fact(n));
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let x = self.c[0];
        let mut d = Vec::with_capacity(self.deg() + 1);
        let mut f = 1.0 / x;
        for n in 0..=self.deg() {
            d.push(f);
            f *= -((n + 1) as f64) / x;
        }
        self.compose(&d)
    }

    /// `self^p` for real `p`; the value must be positive.
    pub fn powf(&self, p: f64) -> Jet {
        let x = self.c[0];
        let mut d = Vec::with_capacity(self.deg() + 1);
        let mut coef = 1.0;
        for n in 0..=self.deg() {
            d.push(coef * x.powf(p - n as f64));
            coef *= p - n as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let deg = self.deg.min(o.deg);
        let mut c = [0.0; CAP];
        for (k, v) in c.iter_mut().enumerate().take(count(deg as usize)) {
            *v = self.c[k] + o.c[k];
        }
        Jet { deg, c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let deg = self.deg.min(o.deg) as usize;
        let mut c = [0.0; CAP];
        for t1 in 0..=deg {
            for b1 in 0..=t1 {
                let x = self.c[pos(t1 - b1, b1)];
                if x == 0.0 {
                    continue;
                }
                for t2 in 0..=(deg - t1) {
                    for b2 in 0..=t2 {
                        c[pos(t1 - b1 + t2 - b2, b1 + b2)] += x * o.c[pos(t2 - b2, b2)];
                    }
                }
            }
        }
        Jet { deg: deg as u8, c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, s: f64) -> Jet {
        self.c[0] += s;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // exp(x) * sin(2y) expanded at (x0, y0)
    fn sample(x0: f64, y0: f64, deg: usize) -> Jet {
        Jet::from_derivs(deg, |_a, b| {
            let s = match b % 4 {
                0 => (2.0 * y0).sin(),
                1 => (2.0 * y0).cos(),
                2 => -(2.0 * y0).sin(),
                _ => -(2.0 * y0).cos(),
            };
            x0.exp() * 2f64.powi(b as i32) * s
        })
    }

    #[test]
    fn product_rule() {
        let f = sample(0.3, 0.2, 4);
        let g = f * f;
        // (f^2)_x = 2 f f_x, (f^2)_xy = 2 f_x f_y + 2 f f_xy
        let fx = f.deriv_at(1, 0);
        let fy = f.deriv_at(0, 1);
        let fxy = f.deriv_at(1, 1);
        assert!((g.deriv_at(1, 1) - 2.0 * (fx * fy + f.value() * fxy)).abs() < 1e-12);
    }

    #[test]
    fn recip_and_sqrt_invert() {
        let f = sample(0.1, 0.4, 4) + 2.0;
        let one = f * f.recip();
        let back = f.sqrt() * f.sqrt();
        for t in 0..=4 {
            for b in 0..=t {
                let want = if t == 0 { 1.0 } else { 0.0 };
                assert!((one.coeff(t - b, b) - want).abs() < 1e-12);
                assert!((back.coeff(t - b, b) - f.coeff(t - b, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diff_lowers_degree() {
        let f = sample(0.0, 0.1, 3);
        let fx = f.diff(0);
        assert_eq!(fx.deg(), 2);
        assert!((fx.deriv_at(0, 1) - f.deriv_at(1, 1)).abs() < 1e-13);
        assert!((fx.deriv_at(1, 1) - f.deriv_at(2, 1)).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn multiplication_commutes(a in prop::array::uniform15(-2.0f64..2.0), b in prop::array::uniform15(-2.0f64..2.0)) {
            let x = Jet { deg: 4, c: a };
            let y = Jet { deg: 4, c: b };
            let p = x * y;
            let q = y * x;
            for k in 0..CAP {
                prop_assert!((p.c[k] - q.c[k]).abs() < 1e-12);
            }
        }
    }
}
