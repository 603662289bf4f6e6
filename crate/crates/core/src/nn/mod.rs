//! Deterministic tensor kernel shared by every learned component.
//!
//! Parameters are stored as `f32`; the autodiff [`Graph`] evaluates in `f64`
//! so that finite-difference checks stay meaningful at small step sizes.

mod checkpoint;
mod gradcheck;
mod layers;
mod ops;
mod optim;
mod params;
mod rng;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{register_bilstm, register_linear, register_lstm, BiLstmOutput, BiLstmVars, LinearVars, LstmVars};
pub use ops::{avg_pool, bilstm_run, lstm_step, softmax, LstmWeights};
pub use optim::{clip_global_norm, Adagrad, Optimizer, Sgd};
pub use params::{Gradients, ParamStore, ParamView};
pub use rng::{stable_hash, SeededRng};
pub use tape::{Backward, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("training error in parameter `{param}`: {reason}")]
    Training { param: String, reason: String },
    #[error("gradient check error: {0}")]
    Check(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(NnError::Dimension(msg.into()))
}
