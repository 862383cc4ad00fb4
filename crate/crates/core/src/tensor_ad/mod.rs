//! Small fixed-size linear algebra and the differentiation machinery that
//! turns network parameters into values, input derivatives and parameter
//! gradients.

mod jet;
mod network_ad;
pub mod softplus;
mod tape;
mod types;

pub use jet::Jet2;
pub use network_ad::{
    backprop_jet, backprop_points, eval_jet, eval_jet_cached, eval_jets, fd_hessian, reduce_points,
    JetCache, REDUCTION_CHUNK,
};
pub use tape::{param_gradient, JetVar, ParamGradient, Tape, Var};
pub use types::{SymMat2, Vec2};
