//! ROUGE-1/2/L and key=value metric reports.
//!
//! Tokens are compared case-folded with no stemming. ROUGE-N uses clipped
//! n-gram counts; ROUGE-L is sentence-level LCS.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("input error: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(overlap: f64, hyp_total: f64, ref_total: f64) -> Self {
        let precision = if hyp_total > 0.0 { overlap / hyp_total } else { 0.0 };
        let recall = if ref_total > 0.0 { overlap / ref_total } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub r1: Prf,
    pub r2: Prf,
    pub rl: Prf,
}

fn fold<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped counts; empty denominators give 0.
pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T], n: usize) -> Prf {
    let hyp = fold(hyp);
    let reference = fold(reference);
    let h = ngram_counts(&hyp, n);
    let r = ngram_counts(&reference, n);
    let overlap: usize = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    Prf::new(overlap as f64, h.values().sum::<usize>() as f64, r.values().sum::<usize>() as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> Prf {
    let hyp = fold(hyp);
    let reference = fold(reference);
    let l = lcs_len(&hyp, &reference);
    Prf::new(l as f64, hyp.len() as f64, reference.len() as f64)
}

pub fn rouge<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> RougeScore {
    RougeScore {
        r1: rouge_n(hyp, reference, 1),
        r2: rouge_n(hyp, reference, 2),
        rl: rouge_l(hyp, reference),
    }
}

/// Unweighted mean of per-pair scores over `(hypothesis, reference)` pairs.
pub fn corpus_rouge<S: AsRef<str>, T: AsRef<str>>(pairs: &[(Vec<S>, Vec<T>)]) -> Result<RougeScore, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Input("ROUGE over an empty corpus".into()));
    }
    let n = pairs.len() as f64;
    let mut acc = RougeScore::default();
    for (h, r) in pairs {
        let s = rouge(h, r);
        for (a, b) in [(&mut acc.r1, s.r1), (&mut acc.r2, s.r2), (&mut acc.rl, s.rl)] {
            a.precision += b.precision / n;
            a.recall += b.recall / n;
            a.f1 += b.f1 / n;
        }
    }
    Ok(acc)
}

impl RougeScore {
    /// `r1_f1`, `r1_precision`, ... in a fixed order.
    pub fn to_metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (name, p) in [("r1", self.r1), ("r2", self.r2), ("rl", self.rl)] {
            m.insert(format!("{name}_f1"), p.f1);
            m.insert(format!("{name}_precision"), p.precision);
            m.insert(format!("{name}_recall"), p.recall);
        }
        m
    }
}

/// One `key=value` line per entry, sorted by key. Floats use the shortest
/// representation that round-trips.
pub fn format_report(metrics: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (k, v) in metrics {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn parse_report(text: &str) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut m = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| EvalError::Input(format!("line {}: expected key=value", i + 1)))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| EvalError::Input(format!("line {}: `{}` is not a number", i + 1, v.trim())))?;
        m.insert(k.trim().to_string(), v);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn close(a: Prf, p: f64, r: f64, f: f64) {
        assert!((a.precision - p).abs() < 1e-12, "{a:?}");
        assert!((a.recall - r).abs() < 1e-12, "{a:?}");
        assert!((a.f1 - f).abs() < 1e-12, "{a:?}");
    }

    #[test]
    fn rouge_n_examples() {
        close(rouge_n(&t("the cat sat"), &t("the cat sat"), 1), 1.0, 1.0, 1.0);
        close(rouge_n(&t("the cat"), &t("the cat sat"), 1), 1.0, 2.0 / 3.0, 0.8);
        close(rouge_n(&t("the cat"), &t("the cat sat"), 2), 1.0, 0.5, 2.0 / 3.0);
        close(rouge_n(&t("a b"), &t("c d"), 1), 0.0, 0.0, 0.0);
        close(rouge_n(&t("a a a a"), &t("a"), 1), 0.25, 1.0, 0.4);
        close(rouge_n(&t("The Cat"), &t("the cat"), 1), 1.0, 1.0, 1.0);
        let empty: Vec<&str> = vec![];
        close(rouge_n(&empty, &t("a"), 1), 0.0, 0.0, 0.0);
    }

    #[test]
    fn rouge_l_examples() {
        close(rouge_l(&t("a b c"), &t("a b c")), 1.0, 1.0, 1.0);
        close(rouge_l(&t("a c"), &t("a b c")), 1.0, 2.0 / 3.0, 0.8);
        let fwd = rouge_l(&t("a c d"), &t("a b c"));
        let rev = rouge_l(&t("a b c"), &t("a c d"));
        assert_eq!((fwd.precision, fwd.recall), (rev.recall, rev.precision));
    }

    #[test]
    fn corpus_examples() {
        let one = vec![(t("the cat"), t("the cat sat"))];
        assert_eq!(corpus_rouge(&one).unwrap(), rouge(&one[0].0, &one[0].1));
        // F1 0.8 and F1 0.4 average to 0.6
        let two = vec![(t("the cat"), t("the cat sat")), (t("a a a a"), t("a"))];
        assert!((corpus_rouge(&two).unwrap().r1.f1 - 0.6).abs() < 1e-12);
        let empty: Vec<(Vec<&str>, Vec<&str>)> = vec![];
        assert!(corpus_rouge(&empty).is_err());
    }

    #[test]
    fn report_round_trip() {
        let s = rouge(&t("the cat"), &t("the cat sat"));
        let text = format_report(&s.to_metrics());
        assert!(text.contains("r1_f1=0.8"));
        assert_eq!(parse_report(&text).unwrap(), s.to_metrics());
    }
}
