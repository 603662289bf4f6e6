//! Corpus ingestion, feature extraction, synthetic corpora and end-to-end
//! training runs.

mod config;
mod corpus;
mod extract;
mod run;
mod synth;

pub use config::{RunConfig, Task};
pub use corpus::{emit, emit_to_path, ingest, ingest_reader, AnnotatedDocument, IngestReport, Rejection};
pub use extract::{
    build_encoder, document_tree, extract_document, extract_features, load_encoder, save_encoder, to_records, write_records, DocFeatures,
    ExtractOptions, FeatureRecord, ENCODER_CHECKPOINT, ENCODER_VOCABS,
};
pub use run::{
    decode_corpus, evaluate_petitions, grad_check_config, run, split_indices, PetitionPrediction, Split, SummDecode, CHECKPOINT_FILE,
    CONFIG_FILE, METRICS_FILE, VOCAB_FILE,
};
pub use synth::{make_synthetic, summary_edus, synth_word, SUMMARY_THRESHOLD, SYNTH_VOCAB};

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::discourse::DiscourseError;
use crate::evalkit::EvalError;
use crate::features::FeatureError;
use crate::nn::NnError;
use crate::regressor::RegError;
use crate::summarizer::SummError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed record: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: document `{doc_id}` rejected: {reason}")]
    Validation { line: usize, doc_id: String, reason: String },
    #[error("configuration error{}: {message}", at_line(*.line))]
    Config { line: usize, message: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("document `{0}` has no discourse tree and tree decoding is disabled")]
    MissingTree(String),
    #[error("document `{doc_id}`: {source}")]
    Document { doc_id: String, source: Box<PipelineError> },
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<PipelineError> },
    #[error(transparent)]
    Discourse(#[from] DiscourseError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Summ(#[from] SummError),
    #[error(transparent)]
    Reg(#[from] RegError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_doc(self, doc_id: &str) -> Self {
        PipelineError::Document {
            doc_id: doc_id.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        PipelineError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string(value).map_err(|e| PipelineError::Input(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| PipelineError::Input(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}
