//! Pointer-generator summarizer with coverage and discourse features.

mod decode;
mod model;
mod train;

pub use decode::{beam_decode, greedy_decode, BeamConfig, Hypothesis, StepModel};
pub use model::{coverage_loss, final_distribution, LossComponents, PreparedExample, StepTrace, SummConfig, Summarizer};
pub use train::{Phase, SummTrainer};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum SummError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}
