//! Second-order forward-mode jets in two spatial variables.
//!
//! A [`Jet2`] carries a value together with its gradient and Hessian with
//! respect to `(x1, x2)`. Arithmetic on jets applies the product and chain
//! rules up to second order, so evaluating a closed-form expression on the
//! seeded coordinate jets yields exact derivatives of that expression.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use super::types::{SymMat2, Vec2};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec2,
    pub hess: SymMat2,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        value: 0.0,
        grad: Vec2::ZERO,
        hess: SymMat2::ZERO,
    };

    #[inline]
    pub const fn new(value: f64, grad: Vec2, hess: SymMat2) -> Self {
        Self { value, grad, hess }
    }

    #[inline]
    pub const fn constant(value: f64) -> Self {
        Self::new(value, Vec2::ZERO, SymMat2::ZERO)
    }

    /// The coordinate functions `x1` and `x2`, seeded at `x`.
    #[inline]
    pub fn coordinates(x: Vec2) -> (Jet2, Jet2) {
        (
            Jet2::new(x.x1, Vec2::new(1.0, 0.0), SymMat2::ZERO),
            Jet2::new(x.x2, Vec2::new(0.0, 1.0), SymMat2::ZERO),
        )
    }

    /// Apply a scalar function given its value and first two derivatives at `self.value`.
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet2 {
        Jet2::new(
            f0,
            self.grad * f1,
            self.hess * f1 + SymMat2::outer(self.grad) * f2,
        )
    }

    pub fn exp(self) -> Jet2 {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Jet2 {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }

    pub fn sqrt(self) -> Jet2 {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.value))
    }

    pub fn powf(self, p: f64) -> Jet2 {
        let v = self.value;
        self.chain(
            v.powf(p),
            p * v.powf(p - 1.0),
            p * (p - 1.0) * v.powf(p - 2.0),
        )
    }

    pub fn powi(self, n: i32) -> Jet2 {
        let v = self.value;
        let nf = n as f64;
        self.chain(
            v.powi(n),
            nf * v.powi(n - 1),
            nf * (nf - 1.0) * v.powi(n - 2),
        )
    }

    pub fn recip(self) -> Jet2 {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn softplus(self) -> Jet2 {
        let d = super::softplus::derivs(self.value);
        self.chain(d.value, d.d1, d.d2)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.is_finite() && self.hess.is_finite()
    }

    /// Componentwise scaling; used when the jet stores adjoints.
    #[inline]
    pub fn scale(self, s: f64) -> Jet2 {
        Jet2::new(self.value * s, self.grad * s, self.hess * s)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value + o.value, self.grad + o.grad, self.hess + o.hess)
    }
}

impl AddAssign for Jet2 {
    #[inline]
    fn add_assign(&mut self, o: Jet2) {
        self.value += o.value;
        self.grad += o.grad;
        self.hess += o.hess;
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value - o.value, self.grad - o.grad, self.hess - o.hess)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.value * o.value,
            self.grad * o.value + o.grad * self.value,
            self.hess * o.value + o.hess * self.value + SymMat2::sym_outer(self.grad, o.grad),
        )
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, c: f64) -> Jet2 {
        Jet2::new(self.value + c, self.grad, self.hess)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, c: f64) -> Jet2 {
        Jet2::new(self.value - c, self.grad, self.hess)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, c: f64) -> Jet2 {
        self.scale(1.0 / c)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    #[inline]
    fn mul(self, j: Jet2) -> Jet2 {
        j.scale(self)
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    #[inline]
    fn add(self, j: Jet2) -> Jet2 {
        j + self
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    #[inline]
    fn sub(self, j: Jet2) -> Jet2 {
        -j + self
    }
}
