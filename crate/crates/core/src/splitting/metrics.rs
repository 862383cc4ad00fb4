use std::path::Path;

use rayon::prelude::*;

use super::problem::{ExactFn, Operator, ProblemSpec};
use crate::error::{Error, Result};
use crate::geometry::GridPoint;
use crate::network::NetworkParams;
use crate::tensor_ad::{eval_jets, Vec2};

/// Side of the evaluation grid.
pub const EVAL_GRID: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub rel_l2: f64,
    /// Relative error in the full `H²` norm (values, gradients and Hessians).
    pub rel_h2: f64,
    /// Mean `|∇u_NN − ∇u_ex|` over the grid.
    pub grad_mae: f64,
    /// Constant added to the network before comparing (nonzero only for
    /// transport potentials, which are defined up to a constant).
    pub shift: f64,
    pub grid_n: usize,
    /// `|u_NN − u_ex|` at the grid cells inside the domain.
    pub pointwise: Vec<(GridPoint, f64)>,
}

/// Compare the network with the exact solution on an `n × n` grid clipped to the domain.
pub fn error_report(net: &NetworkParams, spec: &ProblemSpec, n: usize) -> Result<ErrorReport> {
    let exact = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("error report needs an exact solution".into()))?;
    let grid = spec.domain.grid_points(n);
    if grid.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no {n}×{n} grid cell lies inside the domain"
        )));
    }
    let xs: Vec<Vec2> = grid.iter().map(|g| g.x).collect();
    let nn = eval_jets(net, &xs);
    let ex: Vec<_> = xs.par_iter().map(|&x| exact(x)).collect();
    let shift = match spec.operator {
        Operator::Transport { .. } => {
            ex.iter()
                .zip(&nn)
                .map(|(e, u)| e.value - u.value)
                .sum::<f64>()
                / xs.len() as f64
        }
        _ => 0.0,
    };

    let (mut l2_err, mut l2_ref, mut h2_err, mut h2_ref, mut grad_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut pointwise = Vec::with_capacity(grid.len());
    for ((g, u), e) in grid.iter().zip(&nn).zip(&ex) {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                index: pointwise.len(),
                what: format!("network jet at {:?}", g.x),
            });
        }
        let dv = u.value + shift - e.value;
        let dg = u.grad - e.grad;
        let dh = (u.hess - e.hess).frobenius_sq();
        l2_err += dv * dv;
        l2_ref += e.value * e.value;
        h2_err += dv * dv + dg.norm_sq() + dh;
        h2_ref += e.value * e.value + e.grad.norm_sq() + e.hess.frobenius_sq();
        grad_sum += dg.norm();
        pointwise.push((*g, dv.abs()));
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { (a / b).sqrt() } else { a.sqrt() };
    Ok(ErrorReport {
        rel_l2: ratio(l2_err, l2_ref),
        rel_h2: ratio(h2_err, h2_ref),
        grad_mae: grad_sum / grid.len() as f64,
        shift,
        grid_n: n,
        pointwise,
    })
}

/// Mean `|∇u_NN(x) − ∇u_ex(x)|` over `points`.
pub fn gradient_mae(net: &NetworkParams, exact: &ExactFn, points: &[Vec2]) -> f64 {
    let jets = eval_jets(net, points);
    let total: f64 = jets
        .iter()
        .zip(points)
        .map(|(j, &x)| (j.grad - exact(x).grad).norm())
        .sum();
    total / points.len().max(1) as f64
}

/// `row,col,x1,x2,abs_error`, one row per grid cell inside the domain.
pub fn write_pointwise_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "x1", "x2", "abs_error"])?;
    for (g, e) in &report.pointwise {
        w.write_record([
            g.row.to_string(),
            g.col.to_string(),
            g.x.x1.to_string(),
            g.x.x2.to_string(),
            format!("{e:e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
