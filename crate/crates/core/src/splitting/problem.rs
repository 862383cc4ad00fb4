use std::fmt;
use std::sync::Arc;

use crate::constraints::ConstraintKind;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::network::{ArchKind, Architecture};
use crate::ritz::ScalarFn;
use crate::tensor_ad::{Jet2, Vec2};

/// Closed-form solution returning value, gradient and Hessian.
pub type ExactFn = Arc<dyn Fn(Vec2) -> Jet2 + Send + Sync>;

/// The pointwise nonlinearity and its data.
#[derive(Clone)]
pub enum Operator {
    /// `det D²u = f`, convex branch.
    MongeAmpere { f: ScalarFn },
    /// `α Σλ⁺ + Σλ⁻ = f`.
    Pucci { f: ScalarFn, alpha: f64 },
    /// `λ₁λ₂ = f` on either definite branch.
    Sigma2 { f: ScalarFn },
    /// `det D²u = K (1 + |∇u|²)²`. `center` is where the initial guess puts `∇u = 0`.
    Minkowski { k: ScalarFn, center: Vec2 },
    /// `det D²u = μ₀ / μ₁(∇u)` with `∇u(∂X) = ∂Y`. `mu1` must be positive
    /// wherever `∇u` may land, not only on the target.
    Transport {
        mu0: ScalarFn,
        mu1: ScalarFn,
        target: Domain,
    },
}

impl Operator {
    pub fn name(&self) -> &'static str {
        match self {
            Operator::MongeAmpere { .. } => "monge-ampere",
            Operator::Pucci { .. } => "pucci",
            Operator::Sigma2 { .. } => "sigma2",
            Operator::Minkowski { .. } => "minkowski",
            Operator::Transport { .. } => "transport",
        }
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub operator: Operator,
    /// Source domain.
    pub domain: Domain,
    /// Dirichlet data; unused for transport problems.
    pub phi: Option<ScalarFn>,
    pub lambda: f64,
    pub exact: Option<ExactFn>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("operator", &self.operator.name())
            .field("domain", &self.domain)
            .field("lambda", &self.lambda)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "penalty must be positive, got {}",
                self.lambda
            )));
        }
        match &self.operator {
            Operator::Transport { target, .. } => target.validate()?,
            Operator::Pucci { alpha, .. } if !(*alpha > 1.0) => {
                return Err(Error::Config(format!(
                    "Pucci parameter must exceed 1, got {alpha}"
                )));
            }
            _ if self.phi.is_none() => {
                return Err(Error::Config(format!(
                    "{} problem needs Dirichlet data",
                    self.operator.name()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// ICNN where the solution must be convex, plain MLP otherwise.
    pub fn arch_kind(&self) -> ArchKind {
        match self.operator {
            Operator::Pucci { .. } | Operator::Sigma2 { .. } => ArchKind::Mlp,
            _ => ArchKind::Icnn,
        }
    }

    pub fn default_architecture(&self) -> Architecture {
        Architecture::standard(self.arch_kind())
    }

    /// The constraint at `x` with gradient-dependent data frozen at `grad`.
    pub fn constraint_at(&self, x: Vec2, grad: Vec2) -> ConstraintKind {
        match &self.operator {
            Operator::MongeAmpere { f } => ConstraintKind::MongeAmpere { f: f(x) },
            Operator::Pucci { f, alpha } => ConstraintKind::Pucci {
                f: f(x),
                alpha: *alpha,
            },
            Operator::Sigma2 { f } => ConstraintKind::Sigma2 { f: f(x) },
            Operator::Minkowski { k, .. } => ConstraintKind::Minkowski { k: k(x), grad },
            Operator::Transport { mu0, mu1, .. } => ConstraintKind::Transport {
                mu0: mu0(x),
                mu1_at_grad: mu1(grad),
            },
        }
    }

    /// `F(D²u, ∇u, x)` for a jet of `u` at `x`.
    pub fn residual_at(&self, x: Vec2, jet: &Jet2) -> f64 {
        self.constraint_at(x, jet.grad).residual(jet.hess)
    }

    pub fn target_domain(&self) -> Option<&Domain> {
        match &self.operator {
            Operator::Transport { target, .. } => Some(target),
            _ => None,
        }
    }
}
