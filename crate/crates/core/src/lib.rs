//! Model-value inconsistency: implicit value ensembles built from a learned
//! model and a learned value function, on a tabular gridworld and a 1-D
//! function-approximation problem.

pub mod env;
pub mod error;
pub mod expcli;
pub mod funcapprox;
pub mod ive;
pub mod mdp;
pub mod optim;
pub mod policy_select;
pub mod rng;
pub mod tabular_learn;

pub use error::{Error, Result};
