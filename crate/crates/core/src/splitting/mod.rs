//! The least-squares splitting: pointwise projections of the current Hessian
//! onto the constraint set, alternating with Deep Ritz solves of the linear
//! fourth-order subproblem.

mod metrics;
mod problem;
mod solve;

pub use metrics::{error_report, gradient_mae, write_pointwise_csv, ErrorReport, EVAL_GRID};
pub use problem::{ExactFn, Operator, ProblemSpec};
pub use solve::{
    initialize, lbfgs_epochs, outer_solve, project_step, IterationRecord, Mode, ProjectionField,
    SolveConfig, SolveOutput,
};
