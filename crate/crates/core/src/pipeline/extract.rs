use std::borrow::Cow;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnotatedDocument, PipelineError};
use crate::discourse::{transition_decode, DiscourseTree, EduSpan, LinearScorer};
use crate::features::{broadcast_to_words, clip_spans, shallow_features, syntax_stub, DiscourseEncoder, EncoderConfig, EncoderInput, FeatureKind};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::vocab::Vocab;

/// Width of the stub vectors the fallback parser scores EDUs with.
const PARSER_FEATURE_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Token limit applied before features are computed.
    pub limit: usize,
    /// Decode a tree with a seeded linear scorer when a document has none.
    pub parse_missing: bool,
    pub scorer_seed: u64,
}

/// Per-EDU features of one truncated document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFeatures {
    /// EDU spans clipped to the token limit.
    pub spans: Vec<EduSpan>,
    pub shallow: Option<Vec<Vec<f64>>>,
    pub latent: Option<Vec<Vec<f64>>>,
}

impl DocFeatures {
    pub fn rows(&self, kind: FeatureKind) -> Option<&[Vec<f64>]> {
        match kind {
            FeatureKind::Shallow => self.shallow.as_deref(),
            FeatureKind::Latent => self.latent.as_deref(),
        }
    }

    /// One row per word of a `doc_len`-token document; words past the
    /// clipped spans get zeros.
    pub fn word_rows(&self, kind: FeatureKind, doc_len: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
        let rows = self
            .rows(kind)
            .ok_or_else(|| PipelineError::Input(format!("{} features were not extracted", kind.as_str())))?;
        Ok(broadcast_to_words(rows, &self.spans, doc_len)?)
    }
}

/// Feature dump line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shallow: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<Vec<f64>>>,
    pub spans: Vec<[usize; 2]>,
}

/// The document's tree, or one decoded by a seeded linear scorer over
/// mean syntax vectors when allowed.
pub fn document_tree<'d>(doc: &'d AnnotatedDocument, opts: &ExtractOptions) -> Result<Cow<'d, DiscourseTree>, PipelineError> {
    if let Some(t) = &doc.tree {
        return Ok(Cow::Borrowed(t));
    }
    if !opts.parse_missing {
        return Err(PipelineError::MissingTree(doc.doc_id.clone()));
    }
    let edu_vectors: Vec<Vec<f64>> = doc
        .edu_spans
        .iter()
        .map(|s| {
            let mut acc = vec![0.0; PARSER_FEATURE_DIM];
            for i in s.start..s.end {
                for (a, v) in acc.iter_mut().zip(syntax_stub(&doc.tokens[i], &doc.pos[i], PARSER_FEATURE_DIM)) {
                    *a += v / s.len() as f64;
                }
            }
            acc
        })
        .collect();
    let mut scorer = LinearScorer::seeded(edu_vectors, opts.scorer_seed)?;
    Ok(Cow::Owned(transition_decode(&doc.edu_spans, &mut scorer)?))
}

/// Shallow features come from the full tree and keep the rows of EDUs that
/// survive truncation; the encoder reads the truncated document.
pub fn extract_document(
    doc: &AnnotatedDocument,
    shallow: bool,
    encoder: Option<&DiscourseEncoder>,
    opts: &ExtractOptions,
) -> Result<DocFeatures, PipelineError> {
    let limit = doc.tokens.len().min(opts.limit);
    let spans = clip_spans(&doc.edu_spans, limit);
    let shallow = if shallow {
        let tree = document_tree(doc, opts)?;
        let full = shallow_features(&tree)?;
        Some(full.iter().take(spans.len()).map(|v| v.to_vec()).collect())
    } else {
        None
    };
    let latent = match encoder {
        Some(enc) => {
            let input = EncoderInput {
                tokens: &doc.tokens[..limit],
                pos: &doc.pos[..limit],
                spans: &spans,
                syntax: doc.syntax.as_deref().map(|s| &s[..limit]),
            };
            Some(enc.encode(&input)?.f)
        }
        None => None,
    };
    Ok(DocFeatures { spans, shallow, latent })
}

/// Features for every document, in corpus order. Documents are processed
/// in parallel.
pub fn extract_features(
    corpus: &[AnnotatedDocument],
    shallow: bool,
    encoder: Option<&DiscourseEncoder>,
    opts: &ExtractOptions,
) -> Result<Vec<DocFeatures>, PipelineError> {
    corpus
        .par_iter()
        .map(|doc| extract_document(doc, shallow, encoder, opts).map_err(|e| e.in_doc(&doc.doc_id)))
        .collect()
}

pub fn to_records(corpus: &[AnnotatedDocument], features: &[DocFeatures]) -> Vec<FeatureRecord> {
    corpus
        .iter()
        .zip(features)
        .map(|(doc, f)| FeatureRecord {
            doc_id: doc.doc_id.clone(),
            shallow: f.shallow.clone(),
            latent: f.latent.clone(),
            spans: f.spans.iter().map(|s| [s.start, s.end]).collect(),
        })
        .collect()
}

pub fn write_records(records: &[FeatureRecord], path: &Path) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| PipelineError::Input(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

/// Encoder with word and POS vocabularies built over the whole corpus.
pub fn build_encoder(corpus: &[AnnotatedDocument], config: EncoderConfig, vocab_size: usize, seed: u64) -> Result<DiscourseEncoder, PipelineError> {
    let words = Vocab::build(corpus.iter().flat_map(|d| d.tokens.iter().map(String::as_str)), vocab_size);
    let pos = Vocab::build(corpus.iter().flat_map(|d| d.pos.iter().map(String::as_str)), vocab_size);
    Ok(DiscourseEncoder::seeded(config, words, pos, seed)?)
}

#[derive(Serialize, Deserialize)]
struct EncoderVocabs {
    words: Vocab,
    pos: Vocab,
}

pub const ENCODER_CHECKPOINT: &str = "encoder.ckpt";
pub const ENCODER_VOCABS: &str = "encoder_vocab.json";

pub fn save_encoder(encoder: &DiscourseEncoder, dir: &Path) -> Result<(), PipelineError> {
    save_checkpoint(encoder.params(), &dir.join(ENCODER_CHECKPOINT))?;
    let vocabs = EncoderVocabs {
        words: encoder.word_vocab().clone(),
        pos: encoder.pos_vocab().clone(),
    };
    super::write_json(&dir.join(ENCODER_VOCABS), &vocabs)
}

pub fn load_encoder(dir: &Path) -> Result<DiscourseEncoder, PipelineError> {
    let params = load_checkpoint(&dir.join(ENCODER_CHECKPOINT))?;
    let vocabs: EncoderVocabs = super::read_json(&dir.join(ENCODER_VOCABS))?;
    Ok(DiscourseEncoder::from_parts(vocabs.words, vocabs.pos, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discourse::parse_bracketed;
    use crate::features::SHALLOW_DIM;

    fn doc(n_tokens: usize, spans: &[(usize, usize)], tree: Option<&str>) -> AnnotatedDocument {
        AnnotatedDocument {
            doc_id: "d".into(),
            tokens: (0..n_tokens).map(|i| format!("w{}", i % 7)).collect(),
            pos: (0..n_tokens).map(|i| ["NN", "VB", "DT"][i % 3].to_string()).collect(),
            edu_spans: spans.iter().enumerate().map(|(i, &(s, e))| EduSpan::new(i, s, e)).collect(),
            tree: tree.map(|t| parse_bracketed(t).unwrap()),
            syntax: None,
            summary_tokens: None,
            title_tokens: None,
            signature_count: None,
        }
    }

    fn opts(limit: usize) -> ExtractOptions {
        ExtractOptions {
            limit,
            parse_missing: false,
            scorer_seed: 0,
        }
    }

    #[test]
    fn every_edu_gets_a_shallow_vector() {
        let d = doc(6, &[(0, 2), (2, 4), (4, 6)], Some("(elab:NS (EDU 0) (list:NN (EDU 1) (EDU 2)))"));
        let f = extract_document(&d, true, None, &opts(400)).unwrap();
        let rows = f.shallow.unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == SHALLOW_DIM));
        assert!(f.latent.is_none());
    }

    #[test]
    fn truncation_clips_straddling_edu() {
        // 398..403 straddles a 400-token limit; 403..410 lies past it.
        let d = doc(410, &[(0, 398), (398, 403), (403, 410)], Some("(elab:NS (EDU 0) (list:NN (EDU 1) (EDU 2)))"));
        let words = Vocab::build(d.tokens.iter().map(String::as_str), 50);
        let pos = Vocab::build(["NN", "VB", "DT"], 10);
        let enc = DiscourseEncoder::seeded(
            EncoderConfig {
                word_dim: 2,
                pos_dim: 2,
                syntax_dim: 2,
                word_hidden: 2,
                syntax_hidden: 2,
                context_hidden: 2,
            },
            words,
            pos,
            1,
        )
        .unwrap();
        let f = extract_document(&d, true, Some(&enc), &opts(400)).unwrap();
        assert_eq!(f.spans, vec![EduSpan::new(0, 0, 398), EduSpan::new(1, 398, 400)]);
        assert_eq!(f.shallow.as_ref().unwrap().len(), 2);
        assert_eq!(f.latent.as_ref().unwrap().len(), 2);
        let w = f.word_rows(FeatureKind::Shallow, 410).unwrap();
        assert_eq!(w.len(), 410);
        assert_eq!(w[399], f.shallow.as_ref().unwrap()[1]);
        assert!(w[400].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_tree_needs_scorer() {
        let d = doc(4, &[(0, 2), (2, 4)], None);
        assert!(matches!(extract_document(&d, true, None, &opts(400)), Err(PipelineError::MissingTree(_))));
        let o = ExtractOptions {
            parse_missing: true,
            ..opts(400)
        };
        let a = extract_document(&d, true, None, &o).unwrap();
        assert_eq!(a, extract_document(&d, true, None, &o).unwrap());
        assert_eq!(a.shallow.unwrap().len(), 2);
    }
}
