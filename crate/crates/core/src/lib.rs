//! Regularized online preference learning under the generalized bilinear
//! preference model.
//!
//! Preferences between two actions are `mu(phi1^T Theta phi2)` for a
//! skew-symmetric, low-rank `Theta`. The crate provides the model, a family
//! of regularizers, the regularized symmetric game and its solver, two
//! likelihood estimators, the greedy-sampling and explore-then-commit
//! learners, and numeric checks of the inequalities the analysis rests on.

pub mod checks;
pub mod drivers;
pub mod env;
pub mod error;
pub mod estimators;
pub mod game;
mod lp;
pub mod numeric;
pub mod policy;
pub mod regularizers;
pub mod skewlin;

pub use error::{GbpmError, Result};
