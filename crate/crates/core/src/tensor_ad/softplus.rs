//! Softplus `σ(z) = ln(1 + eᶻ)` and its first three derivatives.

const LINEAR_CUTOFF: f64 = 30.0;

#[derive(Clone, Copy, Debug)]
pub struct SoftplusDerivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > LINEAR_CUTOFF {
        z
    } else if z < -LINEAR_CUTOFF {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function computed without overflow for either sign.
#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn derivs(z: f64) -> SoftplusDerivs {
    let s = logistic(z);
    let sm = logistic(-z); // 1 - s without cancellation
    let d2 = s * sm;
    SoftplusDerivs {
        value: softplus(z),
        d1: s,
        d2,
        d3: d2 * (sm - s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        let d = derivs(0.0);
        assert!((d.value - 2f64.ln()).abs() < 1e-15);
        assert_eq!(d.d1, 0.5);
        assert_eq!(d.d2, 0.25);
        assert_eq!(d.d3, 0.0);
    }

    #[test]
    fn branches_are_continuous() {
        for &z in &[LINEAR_CUTOFF, -LINEAR_CUTOFF] {
            let below = softplus(z - 1e-9);
            let above = softplus(z + 1e-9);
            assert!((below - above).abs() < 1e-8, "jump at {z}");
        }
        assert!(softplus(800.0).is_finite());
        assert!(softplus(-800.0) >= 0.0);
        assert!(derivs(-800.0).d2.is_finite());
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for &z in &[-5.0, -0.7, 0.0, 0.3, 4.0] {
            let d = derivs(z);
            let fd1 = (softplus(z + h) - softplus(z - h)) / (2.0 * h);
            let fd2 = (derivs(z + h).d1 - derivs(z - h).d1) / (2.0 * h);
            let fd3 = (derivs(z + h).d2 - derivs(z - h).d2) / (2.0 * h);
            assert!((d.d1 - fd1).abs() < 1e-9);
            assert!((d.d2 - fd2).abs() < 1e-9);
            assert!((d.d3 - fd3).abs() < 1e-9);
        }
    }
}
