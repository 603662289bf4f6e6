use super::{AnnotatedDocument, PipelineError, Task};
use crate::discourse::{DiscourseTree, EduSpan, NuclearityPattern, Relation};
use crate::features::nuclearity_score;
use crate::nn::{stable_hash, SeededRng};

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const TAGS: [&str; 6] = ["NN", "VB", "JJ", "DT", "IN", "RB"];

/// Words drawn by synthetic documents.
pub const SYNTH_VOCAB: usize = 120;

/// EDUs at or above this nuclearity score form the reference summary.
pub const SUMMARY_THRESHOLD: f64 = 0.5;

/// Relations whose share of a petition's tree raises its signature count.
const PERSUASIVE: [Relation; 4] = [Relation::Evid, Relation::Cause, Relation::Eval, Relation::Prob];

/// The `i`-th synthetic word: two consonant-vowel syllables.
pub fn synth_word(i: usize) -> String {
    let syllables = ONSETS.len() * VOWELS.len();
    let idx = (i * 37) % (syllables * syllables);
    let syl = |k: usize| format!("{}{}", ONSETS[k / VOWELS.len()], VOWELS[k % VOWELS.len()]);
    syl(idx / syllables) + &syl(idx % syllables)
}

fn tag(word: &str) -> String {
    TAGS[(stable_hash(word.as_bytes()) % TAGS.len() as u64) as usize].to_string()
}

fn random_tree(lo: usize, hi: usize, rng: &mut SeededRng) -> DiscourseTree {
    if hi - lo == 1 {
        return DiscourseTree::leaf(lo);
    }
    let split = rng.range(lo + 1, hi - 1);
    let relation = Relation::ALL[rng.below(Relation::ALL.len())];
    let pattern = NuclearityPattern::ALL[rng.below(3)];
    let left = random_tree(lo, split, rng);
    let right = random_tree(split, hi, rng);
    DiscourseTree::join(relation, pattern, left, right)
}

struct Body {
    tokens: Vec<String>,
    spans: Vec<EduSpan>,
    tree: DiscourseTree,
}

fn body(rng: &mut SeededRng) -> Body {
    let n_edus = rng.range(3, 8);
    let mut tokens = Vec::new();
    let mut spans = Vec::with_capacity(n_edus);
    for e in 0..n_edus {
        let start = tokens.len();
        for _ in 0..rng.range(3, 5) {
            tokens.push(synth_word(rng.below(SYNTH_VOCAB)));
        }
        spans.push(EduSpan::new(e, start, tokens.len()));
    }
    let tree = random_tree(0, n_edus, rng);
    Body { tokens, spans, tree }
}

fn nuclearity(b: &Body) -> Vec<f64> {
    (0..b.spans.len())
        .map(|e| nuclearity_score(&b.tree, e).expect("every EDU is a leaf"))
        .collect()
}

/// EDUs forming the planted summary: those scoring at least
/// [`SUMMARY_THRESHOLD`], or the single best EDU when none does.
pub fn summary_edus(scores: &[f64]) -> Vec<usize> {
    let picked: Vec<usize> = (0..scores.len()).filter(|&e| scores[e] >= SUMMARY_THRESHOLD).collect();
    if !picked.is_empty() {
        return picked;
    }
    let best = (0..scores.len()).fold(0, |b, e| if scores[e] > scores[b] { e } else { b });
    vec![best]
}

/// Template documents with random discourse trees. Summaries are the
/// tokens of the nucleus-heavy EDUs; petition counts are a function of
/// mean nuclearity and the share of persuasive relations plus noise.
pub fn make_synthetic(task: Task, n_docs: usize, seed: u64) -> Result<Vec<AnnotatedDocument>, PipelineError> {
    if n_docs == 0 {
        return Err(PipelineError::Input("n_docs must be at least 1".into()));
    }
    let root = SeededRng::new(seed).split("synthetic").split(task.as_str());
    let docs = (0..n_docs)
        .map(|i| {
            let mut rng = root.split(&i.to_string());
            let b = body(&mut rng);
            let scores = nuclearity(&b);
            let pos = b.tokens.iter().map(|t| tag(t)).collect();
            let mut doc = AnnotatedDocument {
                doc_id: format!("{}-{seed}-{i:05}", task.as_str()),
                tokens: b.tokens.clone(),
                pos,
                edu_spans: b.spans.clone(),
                tree: None,
                syntax: None,
                summary_tokens: None,
                title_tokens: None,
                signature_count: None,
            };
            match task {
                Task::Summ => {
                    let summary = summary_edus(&scores)
                        .into_iter()
                        .flat_map(|e| b.tokens[b.spans[e].start..b.spans[e].end].iter().cloned())
                        .collect();
                    doc.summary_tokens = Some(summary);
                }
                Task::Petition => {
                    let internal: Vec<Relation> = b.tree.nodes().filter_map(|(id, _)| b.tree.relation(id)).collect();
                    let relations = internal.len().max(1) as f64;
                    let persuasive = internal.iter().filter(|r| PERSUASIVE.contains(r)).count() as f64 / relations;
                    let mean_nuc = scores.iter().sum::<f64>() / scores.len() as f64;
                    let y = 150f64.ln() + 0.5 + 6.0 * mean_nuc + 2.0 * persuasive + 0.25 * rng.normal();
                    doc.signature_count = Some((y.exp().round() as u64).max(150));
                    doc.title_tokens = Some((0..3).map(|_| synth_word(rng.below(SYNTH_VOCAB))).collect());
                }
            }
            doc.tree = Some(b.tree);
            doc
        })
        .collect();
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::rouge_n;
    use crate::features::shallow_features;

    #[test]
    fn words_are_distinct() {
        let mut w: Vec<String> = (0..SYNTH_VOCAB).map(synth_word).collect();
        w.sort();
        w.dedup();
        assert_eq!(w.len(), SYNTH_VOCAB);
    }

    #[test]
    fn reproducible_and_valid() {
        let a = make_synthetic(Task::Summ, 32, 7).unwrap();
        assert_eq!(a, make_synthetic(Task::Summ, 32, 7).unwrap());
        assert_ne!(a, make_synthetic(Task::Summ, 32, 8).unwrap());
        for d in &a {
            d.validate().unwrap();
            let summary = d.summary_tokens.as_ref().unwrap();
            assert!(!summary.is_empty());
            assert!(summary.iter().all(|t| d.tokens.contains(t)));
        }
        for d in make_synthetic(Task::Petition, 16, 7).unwrap() {
            d.validate().unwrap();
            assert!(d.signature_count.unwrap() >= 150);
        }
    }

    #[test]
    fn nucleus_oracle_recovers_summaries() {
        let docs = make_synthetic(Task::Summ, 100, 7).unwrap();
        let mut recall = 0.0;
        for d in &docs {
            let feats = shallow_features(d.tree.as_ref().unwrap()).unwrap();
            let scores: Vec<f64> = feats.iter().map(|f| f.nuclearity_score).collect();
            let picked: Vec<&String> = summary_edus(&scores)
                .into_iter()
                .flat_map(|e| d.tokens[d.edu_spans[e].start..d.edu_spans[e].end].iter())
                .collect();
            recall += rouge_n(&picked, d.summary_tokens.as_ref().unwrap(), 1).recall;
        }
        assert!(recall / docs.len() as f64 > 0.9);
    }
}
