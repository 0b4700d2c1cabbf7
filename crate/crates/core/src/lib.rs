//! Four-stage scene text recognition: transformation, feature extraction,
//! sequence modeling and prediction, plus the tooling to count, train,
//! evaluate and compare the 24 stage combinations.

pub mod arch;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod predict;
pub mod seqmodel;
pub mod tensor;
pub mod tps;
pub mod tradeoff;

pub use error::{Error, Result};
