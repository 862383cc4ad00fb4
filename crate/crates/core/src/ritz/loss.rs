use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::CollocationSet;
use crate::network::NetworkParams;
use crate::tensor_ad::{backprop_points, eval_jets, reduce_points, Jet2, SymMat2, Vec2};

pub type ScalarFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Adam,
    Lbfgs,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Adam => "adam",
            Stage::Lbfgs => "lbfgs",
        })
    }
}

/// Loss split into its interior and boundary parts, `total = pde_term + lambda * bc_term`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub pde_term: f64,
    pub bc_term: f64,
    pub lambda: f64,
    pub epoch: usize,
    /// Seconds since training started; never written to artifacts.
    pub wall_time: f64,
    pub stage: Stage,
    pub resampled: bool,
}

impl LossReport {
    fn new(pde_term: f64, bc_term: f64, lambda: f64) -> Self {
        Self {
            total: pde_term + lambda * bc_term,
            pde_term,
            bc_term,
            lambda,
            epoch: 0,
            wall_time: 0.0,
            stage: Stage::Adam,
            resampled: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluated {
    pub report: LossReport,
    pub grad: Option<Vec<f64>>,
}

/// What the network is trained to minimise.
#[derive(Clone)]
pub enum LossSpec {
    /// `|D²v − P|²` with Dirichlet data `phi`.
    Dirichlet { phi: ScalarFn },
    /// `|D²v − P|²` with the discrete two-sided boundary matching of `∇v`.
    Transport { target_boundary: Vec<Vec2> },
    /// Ritz energy of `Δv = g` with Dirichlet data `phi`.
    PoissonInit { g: ScalarFn, phi: ScalarFn },
    /// Collocation residual `(det D²v − f)²`.
    Pinn { f: ScalarFn, phi: ScalarFn },
    /// Least-squares fit of `½|x|²` and of its gradient.
    QuadraticFit,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LossSpec::Dirichlet { .. } => "Dirichlet",
            LossSpec::Transport { .. } => "Transport",
            LossSpec::PoissonInit { .. } => "PoissonInit",
            LossSpec::Pinn { .. } => "Pinn",
            LossSpec::QuadraticFit => "QuadraticFit",
        };
        f.write_str(name)
    }
}

impl LossSpec {
    /// Whether the loss needs a projected matrix per collocation point.
    pub fn needs_targets(&self) -> bool {
        matches!(
            self,
            LossSpec::Dirichlet { .. } | LossSpec::Transport { .. }
        )
    }
}

fn check_sizes(colloc: &CollocationSet, p: Option<&[SymMat2]>) -> Result<()> {
    colloc.validate()?;
    if let Some(p) = p {
        if p.len() != colloc.points.len() {
            return Err(Error::Shape(format!(
                "{} collocation points but {} projected matrices",
                colloc.points.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// `(1/n_c) Σ wᵢ |D²v(xᵢ) − Pᵢ|²`.
fn hessian_misfit(
    net: &NetworkParams,
    colloc: &CollocationSet,
    p: &[SymMat2],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let scale = 1.0 / colloc.points.len() as f64;
    reduce_points(net, &colloc.points, want_grad, |i, j| {
        let w = colloc.weights[i] * scale;
        let r = j.hess - p[i];
        // adjoints per stored entry; the off-diagonal counts twice in the norm
        let adj = Jet2::new(
            0.0,
            Vec2::ZERO,
            SymMat2::new(2.0 * r.a11, 4.0 * r.a12, 2.0 * r.a22) * w,
        );
        (w * r.frobenius_sq(), adj)
    })
}

/// `(1/n_b) Σ (v(x_b) − φ(x_b))²`.
fn dirichlet_penalty(
    net: &NetworkParams,
    boundary: &[Vec2],
    phi: &ScalarFn,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if boundary.is_empty() {
        return Err(Error::InvalidInput("no boundary points".into()));
    }
    let scale = 1.0 / boundary.len() as f64;
    reduce_points(net, boundary, want_grad, |i, j| {
        let r = j.value - phi(boundary[i]);
        (scale * r * r, Jet2::constant(2.0 * scale * r))
    })
}

fn combine(
    (pde, gp): (f64, Option<Vec<f64>>),
    (bc, gb): (f64, Option<Vec<f64>>),
    lambda: f64,
) -> Evaluated {
    let grad = match (gp, gb) {
        (Some(mut a), Some(b)) => {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += lambda * y;
            }
            Some(a)
        }
        _ => None,
    };
    Evaluated {
        report: LossReport::new(pde, bc, lambda),
        grad,
    }
}

pub fn loss_dirichlet(
    net: &NetworkParams,
    colloc: &CollocationSet,
    p: &[SymMat2],
    phi: &ScalarFn,
    lambda: f64,
    want_grad: bool,
) -> Result<Evaluated> {
    check_sizes(colloc, Some(p))?;
    let pde = hessian_misfit(net, colloc, p, want_grad)?;
    let bc = dirichlet_penalty(net, &colloc.boundary_points, phi, want_grad)?;
    Ok(combine(pde, bc, lambda))
}

/// Index of the nearest point, first index on ties.
fn nearest(x: Vec2, set: &[Vec2]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, y) in set.iter().enumerate() {
        let d = x.dist_sq(*y);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Two-sided nearest-point misfit between `∇v` on the source boundary and the
/// target boundary sample, and its parameter gradient.
fn transport_penalty(
    net: &NetworkParams,
    source: &[Vec2],
    target: &[Vec2],
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput(
            "transport loss needs both boundary samples".into(),
        ));
    }
    let jets = eval_jets(net, source);
    if let Some(index) = jets.iter().position(|j| !j.grad.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "gradient on the source boundary".into(),
        });
    }
    let images: Vec<Vec2> = jets.iter().map(|j| j.grad).collect();
    let forward: Vec<(usize, f64)> = images.par_iter().map(|&g| nearest(g, target)).collect();
    let backward: Vec<(usize, f64)> = target.par_iter().map(|&y| nearest(y, &images)).collect();
    let (sx, sy) = (1.0 / source.len() as f64, 1.0 / target.len() as f64);
    let value = sx * forward.iter().map(|f| f.1).sum::<f64>()
        + sy * backward.iter().map(|b| b.1).sum::<f64>();
    if !want_grad {
        return Ok((value, None));
    }
    let mut adj = vec![Jet2::ZERO; source.len()];
    for (i, &(j, _)) in forward.iter().enumerate() {
        adj[i].grad += (images[i] - target[j]) * (2.0 * sx);
    }
    for (j, &(i, _)) in backward.iter().enumerate() {
        adj[i].grad += (images[i] - target[j]) * (2.0 * sy);
    }
    Ok((value, Some(backprop_points(net, source, &adj)?)))
}

pub fn loss_transport(
    net: &NetworkParams,
    colloc: &CollocationSet,
    p: &[SymMat2],
    target_boundary: &[Vec2],
    lambda: f64,
    want_grad: bool,
) -> Result<Evaluated> {
    check_sizes(colloc, Some(p))?;
    let pde = hessian_misfit(net, colloc, p, want_grad)?;
    let bc = transport_penalty(net, &colloc.boundary_points, target_boundary, want_grad)?;
    Ok(combine(pde, bc, lambda))
}

/// Ritz energy `(1/n_c) Σ wᵢ (½|∇v|² + g v)` plus the Dirichlet penalty.
pub fn loss_poisson_init(
    net: &NetworkParams,
    colloc: &CollocationSet,
    g: &ScalarFn,
    phi: &ScalarFn,
    lambda: f64,
    want_grad: bool,
) -> Result<Evaluated> {
    check_sizes(colloc, None)?;
    let rhs: Vec<f64> = colloc.points.iter().map(|&x| g(x)).collect();
    if let Some(index) = rhs.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidData {
            index,
            what: format!(
                "Poisson right-hand side {} at {:?}",
                rhs[index], colloc.points[index]
            ),
        });
    }
    let scale = 1.0 / colloc.points.len() as f64;
    let pde = reduce_points(net, &colloc.points, want_grad, |i, j| {
        let w = colloc.weights[i] * scale;
        let value = w * (0.5 * j.grad.norm_sq() + rhs[i] * j.value);
        (value, Jet2::new(w * rhs[i], j.grad * w, SymMat2::ZERO))
    })?;
    let bc = dirichlet_penalty(net, &colloc.boundary_points, phi, want_grad)?;
    Ok(combine(pde, bc, lambda))
}

/// Collocation residual `(1/n_c) Σ (det D²v − f)²` plus the Dirichlet penalty.
pub fn loss_pinn_baseline(
    net: &NetworkParams,
    colloc: &CollocationSet,
    f: &ScalarFn,
    phi: &ScalarFn,
    lambda: f64,
    want_grad: bool,
) -> Result<Evaluated> {
    check_sizes(colloc, None)?;
    let scale = 1.0 / colloc.points.len() as f64;
    let pde = reduce_points(net, &colloc.points, want_grad, |i, j| {
        let w = colloc.weights[i] * scale;
        let h = j.hess;
        let r = h.det() - f(colloc.points[i]);
        let adj = SymMat2::new(h.a22, -2.0 * h.a12, h.a11) * (2.0 * w * r);
        (w * r * r, Jet2::new(0.0, Vec2::ZERO, adj))
    })?;
    let bc = dirichlet_penalty(net, &colloc.boundary_points, phi, want_grad)?;
    Ok(combine(pde, bc, lambda))
}

/// `(1/n_c) Σ wᵢ ((v − ½|x|²)² + |∇v − x|²)`; no boundary part.
pub fn loss_quadratic_fit(
    net: &NetworkParams,
    colloc: &CollocationSet,
    want_grad: bool,
) -> Result<Evaluated> {
    check_sizes(colloc, None)?;
    let scale = 1.0 / colloc.points.len() as f64;
    let pde = reduce_points(net, &colloc.points, want_grad, |i, j| {
        let w = colloc.weights[i] * scale;
        let x = colloc.points[i];
        let rv = j.value - 0.5 * x.norm_sq();
        let rg = j.grad - x;
        (
            w * (rv * rv + rg.norm_sq()),
            Jet2::new(2.0 * w * rv, rg * (2.0 * w), SymMat2::ZERO),
        )
    })?;
    let bc = (0.0, want_grad.then(|| vec![0.0; net.len()]));
    Ok(combine(pde, bc, 0.0))
}

/// Evaluate `spec` on the collocation set; `p` holds projected matrices where needed.
pub fn evaluate(
    spec: &LossSpec,
    lambda: f64,
    net: &NetworkParams,
    colloc: &CollocationSet,
    p: Option<&[SymMat2]>,
    want_grad: bool,
) -> Result<Evaluated> {
    let targets =
        || p.ok_or_else(|| Error::InvalidInput(format!("{spec:?} loss needs projected matrices")));
    match spec {
        LossSpec::Dirichlet { phi } => {
            loss_dirichlet(net, colloc, targets()?, phi, lambda, want_grad)
        }
        LossSpec::Transport { target_boundary } => {
            loss_transport(net, colloc, targets()?, target_boundary, lambda, want_grad)
        }
        LossSpec::PoissonInit { g, phi } => {
            loss_poisson_init(net, colloc, g, phi, lambda, want_grad)
        }
        LossSpec::Pinn { f, phi } => loss_pinn_baseline(net, colloc, f, phi, lambda, want_grad),
        LossSpec::QuadraticFit => loss_quadratic_fit(net, colloc, want_grad),
    }
}

/// Pointwise error indicator driving adaptive sampling: `|D²v − P|` for the
/// splitting losses and the absolute strong residual otherwise.
pub fn error_indicator(
    spec: &LossSpec,
    net: &NetworkParams,
    points: &[Vec2],
    p: Option<&[SymMat2]>,
) -> Result<Vec<f64>> {
    let jets = eval_jets(net, points);
    let out: Vec<f64> = match spec {
        LossSpec::Dirichlet { .. } | LossSpec::Transport { .. } => {
            let p =
                p.ok_or_else(|| Error::InvalidInput("indicator needs projected matrices".into()))?;
            jets.iter()
                .zip(p)
                .map(|(j, q)| (j.hess - *q).frobenius())
                .collect()
        }
        LossSpec::PoissonInit { g, .. } => jets
            .iter()
            .zip(points)
            .map(|(j, &x)| (j.hess.trace() - g(x)).abs())
            .collect(),
        LossSpec::Pinn { f, .. } => jets
            .iter()
            .zip(points)
            .map(|(j, &x)| (j.hess.det() - f(x)).abs())
            .collect(),
        LossSpec::QuadraticFit => jets
            .iter()
            .zip(points)
            .map(|(j, &x)| ((j.value - 0.5 * x.norm_sq()).powi(2) + (j.grad - x).norm_sq()).sqrt())
            .collect(),
    };
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "error indicator".into(),
        });
    }
    Ok(out)
}
