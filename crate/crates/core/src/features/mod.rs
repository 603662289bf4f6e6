//! Shallow and latent discourse features per EDU, and their broadcast to
//! word positions.

mod latent;
mod shallow;

pub use latent::{DiscourseEncoder, EncoderConfig, EncoderInput, LatentFeatureSequence};
pub use shallow::{
    node_type_features, nuclearity_score, relation_score, relation_scores, shallow_features, ShallowFeatureVector, SHALLOW_DIM,
};

use thiserror::Error;

use crate::discourse::{DiscourseError, EduSpan};
use crate::nn::{stable_hash, NnError, SeededRng};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error(transparent)]
    Discourse(#[from] DiscourseError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Which per-EDU features feed a downstream model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Latent,
    Shallow,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Latent => "latent",
            FeatureKind::Shallow => "shallow",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latent" => Ok(FeatureKind::Latent),
            "shallow" => Ok(FeatureKind::Shallow),
            other => Err(format!("unknown feature kind `{other}`")),
        }
    }
}

/// Where discourse features enter a model: concatenated to word embeddings
/// (M1), through a second encoder over `[h; f]` (M2), or inside the
/// attention scores (M3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Incorporation {
    None,
    M1,
    M2,
    M3,
}

impl Incorporation {
    pub fn as_str(self) -> &'static str {
        match self {
            Incorporation::None => "none",
            Incorporation::M1 => "m1",
            Incorporation::M2 => "m2",
            Incorporation::M3 => "m3",
        }
    }

    pub fn uses_features(self) -> bool {
        self != Incorporation::None
    }
}

impl std::str::FromStr for Incorporation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Incorporation::None),
            "m1" => Ok(Incorporation::M1),
            "m2" => Ok(Incorporation::M2),
            "m3" => Ok(Incorporation::M3),
            other => Err(format!("unknown incorporation mode `{other}`")),
        }
    }
}

/// Deterministic pseudo-embedding in [-1, 1) for a `(token, POS)` pair,
/// standing in for dependency-parser syntax vectors.
pub fn syntax_stub(token: &str, pos: &str, dim: usize) -> Vec<f64> {
    let mut key = Vec::with_capacity(token.len() + pos.len() + 1);
    key.extend_from_slice(token.as_bytes());
    key.push(0);
    key.extend_from_slice(pos.as_bytes());
    let mut rng = SeededRng::new(stable_hash(&key));
    (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// Clips spans to the first `limit` tokens: spans starting at or past the
/// limit are dropped, a span straddling it ends at the limit.
pub fn clip_spans(spans: &[EduSpan], limit: usize) -> Vec<EduSpan> {
    spans
        .iter()
        .filter(|s| s.start < limit)
        .map(|s| EduSpan::new(s.edu_id, s.start, s.end.min(limit)))
        .collect()
}

/// Row `w` is the vector of the EDU containing word `w`, or zeros for words
/// outside every span.
pub fn broadcast_to_words(features: &[Vec<f64>], spans: &[EduSpan], doc_len: usize) -> Result<Vec<Vec<f64>>, FeatureError> {
    if features.len() != spans.len() {
        return Err(FeatureError::Alignment(format!(
            "{} feature vectors for {} spans",
            features.len(),
            spans.len()
        )));
    }
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(FeatureError::Alignment("feature vectors differ in length".into()));
    }
    let mut owner: Vec<Option<usize>> = vec![None; doc_len];
    for (k, s) in spans.iter().enumerate() {
        if s.start >= s.end || s.end > doc_len {
            return Err(FeatureError::Alignment(format!(
                "span [{}, {}) invalid for {doc_len} words",
                s.start, s.end
            )));
        }
        for slot in &mut owner[s.start..s.end] {
            if slot.is_some() {
                return Err(FeatureError::Alignment(format!("span {k} overlaps an earlier span")));
            }
            *slot = Some(k);
        }
    }
    Ok(owner
        .into_iter()
        .map(|o| o.map_or_else(|| vec![0.0; dim], |k| features[k].clone()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_examples() {
        let f = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let spans = [EduSpan::new(0, 0, 3), EduSpan::new(1, 3, 5)];
        let rows = broadcast_to_words(&f, &spans, 5).unwrap();
        assert_eq!(rows, vec![f[0].clone(), f[0].clone(), f[0].clone(), f[1].clone(), f[1].clone()]);

        let one = broadcast_to_words(&f[..1], &[EduSpan::new(0, 0, 4)], 4).unwrap();
        assert!(one.iter().all(|r| r == &f[0]));
    }

    #[test]
    fn broadcast_tail_is_zero() {
        let rows = broadcast_to_words(&[vec![1.0]], &[EduSpan::new(0, 0, 2)], 4).unwrap();
        assert_eq!(rows, vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]]);
    }

    #[test]
    fn broadcast_rejects_overlap() {
        let f = vec![vec![1.0], vec![2.0]];
        let spans = [EduSpan::new(0, 0, 3), EduSpan::new(1, 2, 4)];
        assert!(matches!(broadcast_to_words(&f, &spans, 4), Err(FeatureError::Alignment(_))));
    }

    #[test]
    fn clip_at_boundary() {
        let spans = [EduSpan::new(0, 0, 250), EduSpan::new(1, 250, 420), EduSpan::new(2, 420, 500)];
        assert_eq!(clip_spans(&spans, 400), vec![EduSpan::new(0, 0, 250), EduSpan::new(1, 250, 400)]);
        assert_eq!(clip_spans(&spans, 250), vec![EduSpan::new(0, 0, 250)]);
    }

    #[test]
    fn stub_is_deterministic_and_bounded() {
        let a = syntax_stub("cat", "NN", 8);
        assert_eq!(a, syntax_stub("cat", "NN", 8));
        assert_ne!(a, syntax_stub("cat", "VB", 8));
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }
}
