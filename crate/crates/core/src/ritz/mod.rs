//! Deep Ritz losses for the linear substep and the inner training loop.

mod loss;
mod train;

pub use loss::{
    error_indicator, evaluate, loss_dirichlet, loss_pinn_baseline, loss_poisson_init,
    loss_quadratic_fit, loss_transport, Evaluated, LossReport, LossSpec, ScalarFn, Stage,
};
pub use train::{train, write_history_csv, TargetFn, TrainContext, TrainOutput, TrainSchedule};
