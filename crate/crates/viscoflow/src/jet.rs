//! Second-order forward-mode differentiation in the four variables
//! `(t, x1, x2, x3)`.
//!
//! A [`Jet`] carries a value, its gradient, and its Hessian, propagated
//! exactly through arithmetic and elementary functions. The manufactured-
//! solution harness uses jets to derive source terms from closed-form
//! fields without any numerical differencing.

use std::ops::{Add, Mul, Neg, Sub};

pub const VARS: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub val: f64,
    pub grad: [f64; VARS],
    pub hess: [[f64; VARS]; VARS],
}

impl Jet {
    pub fn constant(c: f64) -> Jet {
        Jet {
            val: c,
            grad: [0.0; VARS],
            hess: [[0.0; VARS]; VARS],
        }
    }

    /// Seed variable `slot` (0 = t, 1..=3 = x) with value `v`.
    pub fn var(v: f64, slot: usize) -> Jet {
        let mut grad = [0.0; VARS];
        grad[slot] = 1.0;
        Jet {
            val: v,
            grad,
            hess: [[0.0; VARS]; VARS],
        }
    }

    /// Chain rule through a scalar function with derivatives `d1`, `d2`.
    fn chain(self, val: f64, d1: f64, d2: f64) -> Jet {
        let mut out = Jet::constant(val);
        for a in 0..VARS {
            out.grad[a] = d1 * self.grad[a];
        }
        for a in 0..VARS {
            for b in 0..VARS {
                out.hess[a][b] = d2 * self.grad[a] * self.grad[b] + d1 * self.hess[a][b];
            }
        }
        out
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.val.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.val.sin_cos();
        self.chain(c, -s, -c)
    }

    #[allow(dead_code)] // exercised by tests; kept for case authors
    pub fn exp(self) -> Jet {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    /// `self^p` for positive base.
    pub fn powf(self, p: f64) -> Jet {
        let v = self.val;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn scale(self, c: f64) -> Jet {
        let mut out = self;
        out.val *= c;
        for a in 0..VARS {
            out.grad[a] *= c;
            for b in 0..VARS {
                out.hess[a][b] *= c;
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut out = self;
        out.val += rhs.val;
        for a in 0..VARS {
            out.grad[a] += rhs.grad[a];
            for b in 0..VARS {
                out.hess[a][b] += rhs.hess[a][b];
            }
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
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
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = Jet::constant(self.val * rhs.val);
        for a in 0..VARS {
            out.grad[a] = self.grad[a] * rhs.val + self.val * rhs.grad[a];
        }
        for a in 0..VARS {
            for b in 0..VARS {
                out.hess[a][b] = self.hess[a][b] * rhs.val
                    + self.grad[a] * rhs.grad[b]
                    + self.grad[b] * rhs.grad[a]
                    + self.val * rhs.hess[a][b];
            }
        }
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self;
        out.val += rhs;
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_to_second_order() {
        // f = sin(x1) * exp(t); check against hand derivatives.
        let t = Jet::var(0.3, 0);
        let x = Jet::var(0.7, 1);
        let f = x.sin() * t.exp();
        let (s, c) = 0.7f64.sin_cos();
        let e = 0.3f64.exp();
        assert!((f.val - s * e).abs() < 1e-15);
        assert!((f.grad[1] - c * e).abs() < 1e-15);
        assert!((f.grad[0] - s * e).abs() < 1e-15);
        assert!((f.hess[1][1] + s * e).abs() < 1e-15);
        assert!((f.hess[0][1] - c * e).abs() < 1e-15);
        assert!((f.hess[1][0] - c * e).abs() < 1e-15);
    }

    #[test]
    fn power_rule() {
        let x = Jet::var(2.0, 2);
        let f = x.powf(1.4);
        assert!((f.val - 2.0f64.powf(1.4)).abs() < 1e-14);
        assert!((f.grad[2] - 1.4 * 2.0f64.powf(0.4)).abs() < 1e-14);
        assert!((f.hess[2][2] - 1.4 * 0.4 * 2.0f64.powf(-0.6)).abs() < 1e-14);
    }

    #[test]
    fn composite_against_finite_differences() {
        let f = |t: f64, x: f64| ((x * 2.0 + t).sin() + 1.5) * (0.3 * x).exp();
        let jf = |t: Jet, x: Jet| ((x * 2.0 + t).sin() + 1.5) * (x * 0.3).exp();
        let (t0, x0) = (0.4, 1.1);
        let j = jf(Jet::var(t0, 0), Jet::var(x0, 1));
        // Step balances truncation against subtractive rounding in the
        // second-difference quotients.
        let h = 1e-4;
        let dx = (f(t0, x0 + h) - f(t0, x0 - h)) / (2.0 * h);
        let dxx = (f(t0, x0 + h) - 2.0 * f(t0, x0) + f(t0, x0 - h)) / (h * h);
        let dtx = (f(t0 + h, x0 + h) - f(t0 + h, x0 - h) - f(t0 - h, x0 + h)
            + f(t0 - h, x0 - h))
            / (4.0 * h * h);
        assert!((j.grad[1] - dx).abs() < 1e-7);
        assert!((j.hess[1][1] - dxx).abs() < 1e-5);
        assert!((j.hess[0][1] - dtx).abs() < 1e-6);
    }
}
