//! Uncertainty-driven (UDP) and loss-driven (FGSM, R-FGSM, PGD, TRADES)
//! perturbation training on small fully-connected classifiers, with margin and
//! oscillation diagnostics and a simulator of the one-dimensional max-margin
//! dynamics of UDP.
//!
//! Batch loops (perturbing a mini-batch, evaluating grids, margins and Monte
//! Carlo replicas) run on rayon when the default `parallel` feature is on and
//! sequentially otherwise; results are identical either way.

pub mod analysis;
pub mod data;
mod error;
pub mod exec;
pub mod gradcheck;
pub mod linalg;
pub mod linearsim;
pub mod nnet;
pub mod objectives;
pub mod perturb;
pub mod seed;
pub mod uncertainty;

pub use error::{Error, ParseErrorKind, Result};
pub use linalg::Matrix;
pub use nnet::{Entry, MlpModel, OptimizerKind};
pub use perturb::{Method, PerturbSpec};
pub use uncertainty::Ensemble;
