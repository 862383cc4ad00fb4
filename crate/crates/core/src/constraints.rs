//! Pointwise projections onto the nonlinear constraint sets.
//!
//! Every constraint here depends only on the eigenvalues of its argument, so
//! the Frobenius-closest feasible matrix shares the eigenbasis of the input
//! and the search reduces to the plane of eigenvalue pairs.

use crate::error::{Error, Result};
use crate::tensor_ad::{SymMat2, Vec2};

/// Lower clamp on the target density in the transport right-hand side.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Eigen-decomposition `A = R(θ) diag(λ₁, λ₂) R(θ)ᵀ` with `λ₁ ≤ λ₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen2 {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Angle of the eigenvector belonging to `lambda1`, in `(-π/2, π/2]`.
    pub theta: f64,
}

impl Eigen2 {
    /// `R(θ) diag(l1, l2) R(θ)ᵀ` in this eigenbasis.
    pub fn compose(&self, l1: f64, l2: f64) -> SymMat2 {
        let (s, c) = self.theta.sin_cos();
        SymMat2::new(
            l1 * c * c + l2 * s * s,
            (l1 - l2) * c * s,
            l1 * s * s + l2 * c * c,
        )
    }

    pub fn reconstruct(&self) -> SymMat2 {
        self.compose(self.lambda1, self.lambda2)
    }
}

pub fn eigen2(a: SymMat2) -> Eigen2 {
    let mean = 0.5 * (a.a11 + a.a22);
    let half_diff = 0.5 * (a.a11 - a.a22);
    let r = half_diff.hypot(a.a12);
    // atan2 gives the direction of the larger eigenvalue; λ₁ is orthogonal to it
    let phi = 0.5 * a.a12.atan2(half_diff);
    let mut theta = phi + std::f64::consts::FRAC_PI_2;
    if theta > std::f64::consts::FRAC_PI_2 {
        theta -= std::f64::consts::PI;
    }
    Eigen2 {
        lambda1: mean - r,
        lambda2: mean + r,
        theta,
    }
}

fn check_finite(a: SymMat2) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            index: 0,
            what: "projection input".into(),
        })
    }
}

/// Closest pair `(t, f/t)` with `0 < t ≤ √f` to `(a1, a2)`, `a1 ≤ a2`.
///
/// Pairing the smaller eigenvalue with the smaller target is always at least
/// as close as the swapped pairing, so the ordered half-line suffices.
fn ma_eigenvalues(a1: f64, a2: f64, f: f64) -> (f64, f64) {
    let root = f.sqrt();
    let g = |t: f64| (t - a1).powi(2) + (f / t - a2).powi(2);
    let dg = |t: f64| 2.0 * (t - a1) - 2.0 * (f / t - a2) * f / (t * t);
    let d2g = |t: f64| {
        let q = f / (t * t);
        2.0 + 2.0 * q * q + 4.0 * (f / t - a2) * f / (t * t * t)
    };

    // Any minimiser beats the endpoint t = √f, which bounds f/t from above.
    let c0 = g(root);
    let t_min = f / (a2.max(0.0) + c0.sqrt() + root);
    let (lo, hi) = (t_min.ln(), root.ln());
    const SCAN: usize = 400;
    let step = (hi - lo) / SCAN as f64;
    let mut best = (SCAN, c0);
    for k in 0..SCAN {
        let v = g((lo + k as f64 * step).exp());
        if v < best.1 {
            best = (k, v);
        }
    }

    // golden section on log t inside the neighbouring cells
    let k = best.0;
    let mut a = lo + k.saturating_sub(1) as f64 * step;
    let mut b = (lo + (k + 1) as f64 * step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let gl = |s: f64| g(s.exp());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (gl(c), gl(d));
    for _ in 0..60 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = gl(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = gl(d);
        }
    }
    let (ta, tb) = (a.exp(), b.exp());
    let mut t = (0.5 * (a + b)).exp();

    // safeguarded Newton on g'(t) = 0
    for _ in 0..50 {
        let d1 = dg(t);
        if d1.abs() < 1e-12 {
            break;
        }
        let d2 = d2g(t);
        let next = if d2 > 0.0 { t - d1 / d2 } else { f64::NAN };
        let next = if next.is_finite() && next > 0.5 * ta && next < 2.0 * tb {
            next
        } else {
            break;
        };
        if (next - t).abs() <= 1e-16 * t {
            t = next;
            break;
        }
        t = next;
    }
    let t = t.min(root);
    (t, f / t)
}

/// Closest symmetric matrix to `a` with `det Q = f` and `Q` positive definite.
///
/// `f = 0` is accepted as the closure of the admissible set (positive semidefinite, singular).
pub fn project_monge_ampere(a: SymMat2, f: f64) -> Result<SymMat2> {
    check_finite(a)?;
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::InvalidInput(format!(
            "Monge-Ampère data must be nonnegative, got {f}"
        )));
    }
    let e = eigen2(a);
    if f == 0.0 {
        return Ok(e.compose(0.0, e.lambda2.max(0.0)));
    }
    let (l1, l2) = ma_eigenvalues(e.lambda1, e.lambda2, f);
    Ok(e.compose(l1, l2))
}

/// `α Σλ⁺ + Σλ⁻` for an eigenvalue pair.
pub fn pucci_operator(l1: f64, l2: f64, alpha: f64) -> f64 {
    let part = |l: f64| if l > 0.0 { alpha * l } else { l };
    part(l1) + part(l2)
}

/// Closest point to `a` on `{λ : α Σλ⁺ + Σλ⁻ = f}`, searched orthant by orthant.
fn pucci_eigenvalues(a: (f64, f64), f: f64, alpha: f64) -> (f64, f64) {
    let mut best: Option<((f64, f64), f64)> = None;
    // (−,+) before (+,−) so that ties keep λ₁ ≤ λ₂
    for signs in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        let c: (f64, f64) = (
            if signs.0 > 0.0 { alpha } else { 1.0 },
            if signs.1 > 0.0 { alpha } else { 1.0 },
        );
        // line c·λ = f through p0 with direction d
        let cc = c.0 * c.0 + c.1 * c.1;
        let p0 = (c.0 * f / cc, c.1 * f / cc);
        let d = (c.1, -c.0);
        // sᵢ (p0ᵢ + t dᵢ) ≥ 0 bounds t from one side per component
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (s, p, dd) in [(signs.0, p0.0, d.0), (signs.1, p0.1, d.1)] {
            let (sp, sd) = (s * p, s * dd);
            let bound = -sp / sd;
            if sd > 0.0 {
                t_lo = t_lo.max(bound);
            } else {
                t_hi = t_hi.min(bound);
            }
        }
        if t_lo > t_hi {
            continue;
        }
        let t =
            (((a.0 - p0.0) * d.0 + (a.1 - p0.1) * d.1) / (d.0 * d.0 + d.1 * d.1)).clamp(t_lo, t_hi);
        let l = (p0.0 + t * d.0, p0.1 + t * d.1);
        let dist = (l.0 - a.0).powi(2) + (l.1 - a.1).powi(2);
        if best.is_none_or(|(_, b)| dist < b) {
            best = Some((l, dist));
        }
    }
    // the constraint value is continuous and unbounded both ways, so some orthant is hit
    best.expect("Pucci constraint set is nonempty").0
}

/// Closest symmetric matrix to `a` with `α Σλ⁺(Q) + Σλ⁻(Q) = f`.
pub fn project_pucci(a: SymMat2, f: f64, alpha: f64) -> Result<SymMat2> {
    check_finite(a)?;
    if !(alpha > 1.0) {
        return Err(Error::InvalidInput(format!(
            "Pucci parameter must exceed 1, got {alpha}"
        )));
    }
    let e = eigen2(a);
    let (l1, l2) = pucci_eigenvalues((e.lambda1, e.lambda2), f, alpha);
    Ok(e.compose(l1, l2))
}

/// Closest symmetric matrix to `a` with `λ₁λ₂ = f`, over both the positive
/// and the negative definite branch.
pub fn project_sigma2(a: SymMat2, f: f64) -> Result<SymMat2> {
    let pos = project_monge_ampere(a, f)?;
    let neg = -project_monge_ampere(-a, f)?;
    if (neg - a).frobenius_sq() < (pos - a).frobenius_sq() {
        Ok(neg)
    } else {
        Ok(pos)
    }
}

/// `K (1 + |∇u|²)²`, the Gauss curvature right-hand side in two dimensions.
pub fn effective_rhs_minkowski(k: f64, grad: Vec2) -> f64 {
    let w = 1.0 + grad.norm_sq();
    k * w * w
}

/// `μ₀ / μ₁(∇u)` with the target density clamped below by [`DENSITY_FLOOR`].
pub fn effective_rhs_transport(mu0_at_x: f64, mu1: impl Fn(Vec2) -> f64, grad: Vec2) -> f64 {
    mu0_at_x / mu1(grad).max(DENSITY_FLOOR)
}

/// A pointwise constraint with its data already evaluated at the point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintKind {
    MongeAmpere {
        f: f64,
    },
    Pucci {
        f: f64,
        alpha: f64,
    },
    Sigma2 {
        f: f64,
    },
    /// Gauss curvature `K` with the explicit gradient of the current iterate.
    Minkowski {
        k: f64,
        grad: Vec2,
    },
    /// Source density and target density already evaluated at the current gradient.
    Transport {
        mu0: f64,
        mu1_at_grad: f64,
    },
}

impl ConstraintKind {
    /// Right-hand side of the determinant form, where applicable.
    pub fn det_rhs(&self) -> Option<f64> {
        match *self {
            ConstraintKind::MongeAmpere { f } | ConstraintKind::Sigma2 { f } => Some(f),
            ConstraintKind::Minkowski { k, grad } => Some(effective_rhs_minkowski(k, grad)),
            ConstraintKind::Transport { mu0, mu1_at_grad } => {
                Some(effective_rhs_transport(mu0, |_| mu1_at_grad, Vec2::ZERO))
            }
            ConstraintKind::Pucci { .. } => None,
        }
    }

    pub fn project(&self, a: SymMat2) -> Result<SymMat2> {
        match *self {
            ConstraintKind::Pucci { f, alpha } => project_pucci(a, f, alpha),
            ConstraintKind::Sigma2 { f } => project_sigma2(a, f),
            _ => project_monge_ampere(a, self.det_rhs().expect("determinant constraint")),
        }
    }

    /// `F(Q)`; zero exactly on the constraint set.
    pub fn residual(&self, q: SymMat2) -> f64 {
        match *self {
            ConstraintKind::Pucci { f, alpha } => {
                let e = eigen2(q);
                pucci_operator(e.lambda1, e.lambda2, alpha) - f
            }
            _ => q.det() - self.det_rhs().expect("determinant constraint"),
        }
    }
}
