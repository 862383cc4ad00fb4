use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x1: f64,
    pub x2: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x1: 0.0, x2: 0.0 };

    #[inline]
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    #[inline]
    pub fn dist_sq(self, other: Vec2) -> f64 {
        (self - other).norm_sq()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    #[inline]
    pub fn component(self, k: usize) -> f64 {
        if k == 0 {
            self.x1
        } else {
            self.x2
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x1 * s, self.x2 * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x1, -self.x2)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x1 += o.x1;
        self.x2 += o.x2;
    }
}

/// Symmetric 2x2 matrix; the off-diagonal entry is stored once.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat2 {
    pub const ZERO: SymMat2 = SymMat2 {
        a11: 0.0,
        a12: 0.0,
        a22: 0.0,
    };
    pub const IDENTITY: SymMat2 = SymMat2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    #[inline]
    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    #[inline]
    pub const fn diag(d1: f64, d2: f64) -> Self {
        Self::new(d1, 0.0, d2)
    }

    /// The rank-one matrix `u vᵀ + v uᵀ` (symmetrised outer product, not halved).
    #[inline]
    pub fn sym_outer(u: Vec2, v: Vec2) -> Self {
        Self::new(
            2.0 * u.x1 * v.x1,
            u.x1 * v.x2 + u.x2 * v.x1,
            2.0 * u.x2 * v.x2,
        )
    }

    /// `u uᵀ`
    #[inline]
    pub fn outer(u: Vec2) -> Self {
        Self::new(u.x1 * u.x1, u.x1 * u.x2, u.x2 * u.x2)
    }

    #[inline]
    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    #[inline]
    pub fn trace(self) -> f64 {
        self.a11 + self.a22
    }

    /// Squared Frobenius norm, `a11² + 2 a12² + a22²`.
    #[inline]
    pub fn frobenius_sq(self) -> f64 {
        self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22
    }

    #[inline]
    pub fn frobenius(self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    #[inline]
    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a11 * v.x1 + self.a12 * v.x2,
            self.a12 * v.x1 + self.a22 * v.x2,
        )
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite()
    }

    /// `R A Rᵀ` for the rotation by `theta`.
    pub fn rotate(self, theta: f64) -> SymMat2 {
        let (s, c) = theta.sin_cos();
        // R = [[c, -s], [s, c]]
        let m11 = c * self.a11 - s * self.a12;
        let m12 = c * self.a12 - s * self.a22;
        let m21 = s * self.a11 + c * self.a12;
        let m22 = s * self.a12 + c * self.a22;
        SymMat2::new(
            m11 * c - m12 * s,
            0.5 * ((m11 * s + m12 * c) + (m21 * c - m22 * s)),
            m21 * s + m22 * c,
        )
    }
}

impl Add for SymMat2 {
    type Output = SymMat2;
    #[inline]
    fn add(self, o: SymMat2) -> SymMat2 {
        SymMat2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }
}

impl Sub for SymMat2 {
    type Output = SymMat2;
    #[inline]
    fn sub(self, o: SymMat2) -> SymMat2 {
        SymMat2::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }
}

impl Mul<f64> for SymMat2 {
    type Output = SymMat2;
    #[inline]
    fn mul(self, s: f64) -> SymMat2 {
        SymMat2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }
}

impl Neg for SymMat2 {
    type Output = SymMat2;
    #[inline]
    fn neg(self) -> SymMat2 {
        self * -1.0
    }
}

impl AddAssign for SymMat2 {
    #[inline]
    fn add_assign(&mut self, o: SymMat2) {
        self.a11 += o.a11;
        self.a12 += o.a12;
        self.a22 += o.a22;
    }
}
