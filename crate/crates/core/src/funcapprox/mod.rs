//! Function approximation for the 1-D didactic problem.

pub mod didactic;
pub mod tape;

pub use didactic::{
    forward_kmpv, ive_curve, linspace, loss_and_gradient, per_k_mse, train_didactic, train_didactic_from,
    Dataset, DidacticConfig, DidacticParams, IveCurve,
};
pub use tape::{Tape, Tensor, TensorNode, Var};
