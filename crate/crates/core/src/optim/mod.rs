//! Adam for pre-training and L-BFGS with a strong Wolfe line search for refinement.

mod adam;
mod lbfgs;

pub use adam::{AdamConfig, AdamState};
pub use lbfgs::{LbfgsConfig, LbfgsOutcome, LbfgsState, WolfeStep};
