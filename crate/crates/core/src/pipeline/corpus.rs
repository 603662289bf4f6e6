use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PipelineError;
use crate::discourse::{parse_bracketed, serialize_bracketed, validate_spans, validate_tree, DiscourseTree, EduSpan};

/// One preprocessed document: tokens, POS tags, EDU segmentation, and
/// optionally a discourse tree, syntax vectors and task labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    #[serde(with = "span_pairs")]
    pub edu_spans: Vec<EduSpan>,
    #[serde(default, with = "bracketed", skip_serializing_if = "Option::is_none")]
    pub tree: Option<DiscourseTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature_count: Option<u64>,
}

impl AnnotatedDocument {
    /// Checks the invariants that do not depend on the task.
    pub fn validate(&self) -> Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("empty doc_id".into());
        }
        if self.tokens.is_empty() {
            return Err("no tokens".into());
        }
        if self.pos.len() != self.tokens.len() {
            return Err(format!("{} POS tags for {} tokens", self.pos.len(), self.tokens.len()));
        }
        validate_spans(&self.edu_spans, self.tokens.len()).map_err(|e| e.to_string())?;
        if let Some(tree) = &self.tree {
            let violations = validate_tree(tree, self.edu_spans.len());
            if let Some(v) = violations.first() {
                return Err(format!("tree does not match the EDU spans: {v}"));
            }
        }
        if let Some(syn) = &self.syntax {
            if syn.len() != self.tokens.len() {
                return Err(format!("{} syntax vectors for {} tokens", syn.len(), self.tokens.len()));
            }
            let width = syn.first().map_or(0, Vec::len);
            if width == 0 || syn.iter().any(|v| v.len() != width) {
                return Err("syntax vectors must share one positive width".into());
            }
            if syn.iter().flatten().any(|v| !v.is_finite()) {
                return Err("non-finite syntax value".into());
            }
        }
        if self.signature_count == Some(0) {
            return Err("signature_count must be positive".into());
        }
        Ok(())
    }
}

mod span_pairs {
    use super::*;

    pub fn serialize<S: Serializer>(spans: &[EduSpan], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(spans.iter().map(|sp| [sp.start, sp.end]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<EduSpan>, D::Error> {
        let pairs = Vec::<[usize; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().enumerate().map(|(i, [s, e])| EduSpan::new(i, s, e)).collect())
    }
}

mod bracketed {
    use super::*;

    pub fn serialize<S: Serializer>(tree: &Option<DiscourseTree>, s: S) -> Result<S::Ok, S::Error> {
        match tree {
            Some(t) => s.serialize_some(&serialize_bracketed(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DiscourseTree>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|text| parse_bracketed(&text).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// A line that failed to load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub documents: Vec<AnnotatedDocument>,
    pub rejected: Vec<Rejection>,
}

/// Parses JSONL text. Blank lines are ignored. Invalid records are collected
/// in `rejected`, or abort the read when `strict` is set.
pub fn ingest_reader<R: BufRead>(reader: R, strict: bool) -> Result<IngestReport, PipelineError> {
    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| PipelineError::Input(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = match serde_json::from_str::<AnnotatedDocument>(&line) {
            Err(e) => Err(PipelineError::Json {
                line: line_no,
                message: e.to_string(),
            }),
            Ok(doc) => match doc.validate() {
                Err(reason) => Err(PipelineError::Validation {
                    line: line_no,
                    doc_id: doc.doc_id,
                    reason,
                }),
                Ok(()) if !seen.insert(doc.doc_id.clone()) => Err(PipelineError::Validation {
                    line: line_no,
                    doc_id: doc.doc_id,
                    reason: "duplicate doc_id".into(),
                }),
                Ok(()) => Ok(doc),
            },
        };
        match outcome {
            Ok(doc) => report.documents.push(doc),
            Err(e) if strict => return Err(e),
            Err(e) => {
                log::warn!("skipping {e}");
                report.rejected.push(Rejection {
                    line: line_no,
                    reason: e.to_string(),
                });
            }
        }
    }
    if report.documents.is_empty() && report.rejected.is_empty() {
        log::warn!("corpus is empty");
    }
    Ok(report)
}

pub fn ingest(path: &Path, strict: bool) -> Result<IngestReport, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    ingest_reader(BufReader::new(file), strict)
}

/// Writes one JSON object per line.
pub fn emit<W: Write>(corpus: &[AnnotatedDocument], mut w: W) -> Result<(), PipelineError> {
    for doc in corpus {
        serde_json::to_writer(&mut w, doc).map_err(|e| PipelineError::Input(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| PipelineError::Input(e.to_string()))?;
    }
    w.flush().map_err(|e| PipelineError::Input(e.to_string()))
}

pub fn emit_to_path(corpus: &[AnnotatedDocument], path: &Path) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    emit(corpus, std::io::BufWriter::new(file))
}
