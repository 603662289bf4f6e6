//! Shift-reduce transition system over EDUs.

use std::fmt;

use super::{DiscourseError, DiscourseTree, EduSpan, NodeId, NodeKind, NuclearityPattern, Relation, TreeBuilder, NUM_RELATIONS};
use crate::nn::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionAction {
    Shift,
    Reduce(NuclearityPattern, Relation),
}

/// Shift plus one reduce per (pattern, relation).
pub const NUM_ACTIONS: usize = 1 + 3 * NUM_RELATIONS;

impl TransitionAction {
    pub fn index(self) -> usize {
        match self {
            TransitionAction::Shift => 0,
            TransitionAction::Reduce(p, r) => 1 + p.index() * NUM_RELATIONS + r.index(),
        }
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        if idx == 0 {
            return Some(TransitionAction::Shift);
        }
        let k = idx - 1;
        let pattern = *NuclearityPattern::ALL.get(k / NUM_RELATIONS)?;
        Some(TransitionAction::Reduce(pattern, Relation::from_index(k % NUM_RELATIONS)?))
    }
}

impl fmt::Display for TransitionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionAction::Shift => f.write_str("Shift"),
            TransitionAction::Reduce(p, r) => write!(f, "Reduce({}, {})", p.as_str(), r),
        }
    }
}

fn malformed<T>(step: usize, reason: impl Into<String>) -> Result<T, DiscourseError> {
    Err(DiscourseError::MalformedSequence {
        step,
        reason: reason.into(),
    })
}

/// Builds the tree produced by running `actions` over `edus`.
pub fn apply_actions(edus: &[EduSpan], actions: &[TransitionAction]) -> Result<DiscourseTree, DiscourseError> {
    let mut builder = TreeBuilder::new();
    let mut stack: Vec<NodeId> = Vec::new();
    let mut next = 0;
    for (step, action) in actions.iter().enumerate() {
        match *action {
            TransitionAction::Shift => {
                let Some(edu) = edus.get(next) else {
                    return malformed(step, "Shift with empty queue");
                };
                stack.push(builder.leaf(edu.edu_id));
                next += 1;
            }
            TransitionAction::Reduce(pattern, relation) => {
                if stack.len() < 2 {
                    return malformed(step, format!("Reduce with {} item(s) on the stack", stack.len()));
                }
                let right = stack.pop().expect("len >= 2");
                let left = stack.pop().expect("len >= 2");
                stack.push(builder.internal(relation, pattern, left, right)?);
            }
        }
    }
    let end = actions.len();
    if next < edus.len() {
        return malformed(end, format!("{} EDU(s) left in the queue", edus.len() - next));
    }
    match stack.as_slice() {
        [root] => builder.finish(*root),
        [] => malformed(end, "no tree was built"),
        items => malformed(end, format!("{} items left on the stack", items.len())),
    }
}

/// Post-order action sequence that rebuilds `tree`.
pub fn tree_to_actions(tree: &DiscourseTree) -> Vec<TransitionAction> {
    // nodes are stored in post-order
    tree.nodes()
        .map(|(_, n)| match n.kind {
            NodeKind::Leaf { .. } => TransitionAction::Shift,
            NodeKind::Internal { relation, pattern, .. } => TransitionAction::Reduce(pattern, relation),
        })
        .collect()
}

/// Parser configuration visible to a scorer.
#[derive(Debug, Clone, Copy)]
pub struct ParserState<'a> {
    /// Inclusive EDU ranges covered by each stack item, bottom first.
    pub stack: &'a [(usize, usize)],
    /// Next EDU in the queue, if any.
    pub queue_front: Option<usize>,
    pub n_edus: usize,
    pub step: usize,
}

/// Scores every action (indexed by [`TransitionAction::index`]).
pub trait ActionScorer {
    fn score(&mut self, state: &ParserState<'_>) -> Vec<f64>;
}

impl<F> ActionScorer for F
where
    F: FnMut(&ParserState<'_>) -> Vec<f64>,
{
    fn score(&mut self, state: &ParserState<'_>) -> Vec<f64> {
        self(state)
    }
}

/// Greedy decoding with illegal actions masked; always yields a valid tree.
/// Ties (and non-finite scores) resolve to the lowest action index.
pub fn transition_decode(edus: &[EduSpan], scorer: &mut dyn ActionScorer) -> Result<DiscourseTree, DiscourseError> {
    if edus.is_empty() {
        return Err(DiscourseError::Structure("cannot decode a tree over zero EDUs".into()));
    }
    let n = edus.len();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut actions = Vec::with_capacity(2 * n - 1);
    let mut next = 0;
    for step in 0..(2 * n - 1) {
        let state = ParserState {
            stack: &spans,
            queue_front: (next < n).then_some(next),
            n_edus: n,
            step,
        };
        let scores = scorer.score(&state);
        let can_shift = next < n;
        let can_reduce = spans.len() >= 2;
        let mut best: Option<(usize, f64)> = None;
        for idx in 0..NUM_ACTIONS {
            let legal = if idx == 0 { can_shift } else { can_reduce };
            if !legal {
                continue;
            }
            let s = scores.get(idx).copied().filter(|v| !v.is_nan()).unwrap_or(f64::NEG_INFINITY);
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((idx, s));
            }
        }
        let (idx, _) = best.expect("some action is always legal before the tree is complete");
        let action = TransitionAction::from_index(idx).expect("index < NUM_ACTIONS");
        match action {
            TransitionAction::Shift => {
                spans.push((next, next));
                next += 1;
            }
            TransitionAction::Reduce(..) => {
                let r = spans.pop().expect("legal");
                let l = spans.pop().expect("legal");
                spans.push((l.0, r.1));
            }
        }
        actions.push(action);
    }
    apply_actions(edus, &actions)
}

/// Replays a gold action list, giving the gold action score 1 and all others 0.
#[derive(Debug, Clone)]
pub struct GoldReplayScorer {
    actions: Vec<TransitionAction>,
}

impl GoldReplayScorer {
    pub fn new(actions: Vec<TransitionAction>) -> Self {
        GoldReplayScorer { actions }
    }
}

impl ActionScorer for GoldReplayScorer {
    fn score(&mut self, state: &ParserState<'_>) -> Vec<f64> {
        let mut s = vec![0.0; NUM_ACTIONS];
        if let Some(a) = self.actions.get(state.step) {
            s[a.index()] = 1.0;
        }
        s
    }
}

/// Uniform random scores from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    rng: SeededRng,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer {
            rng: SeededRng::new(seed).split("random-scorer"),
        }
    }
}

impl ActionScorer for RandomScorer {
    fn score(&mut self, _state: &ParserState<'_>) -> Vec<f64> {
        (0..NUM_ACTIONS).map(|_| self.rng.uniform(0.0, 1.0)).collect()
    }
}

/// Linear scorer over per-EDU encoder vectors. The configuration feature is
/// `[mean(top span); mean(second span); queue front]`, zero-filled where absent.
#[derive(Debug, Clone)]
pub struct LinearScorer {
    features: Vec<Vec<f64>>,
    dim: usize,
    /// `NUM_ACTIONS x 3*dim`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearScorer {
    pub fn new(features: Vec<Vec<f64>>, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, DiscourseError> {
        let dim = features.first().map_or(0, Vec::len);
        if features.iter().any(|f| f.len() != dim) {
            return Err(DiscourseError::Structure("linear scorer features differ in length".into()));
        }
        if weights.len() != NUM_ACTIONS * 3 * dim || bias.len() != NUM_ACTIONS {
            return Err(DiscourseError::Structure("linear scorer weight shape mismatch".into()));
        }
        Ok(LinearScorer {
            features,
            dim,
            weights,
            bias,
        })
    }

    /// Weights drawn uniformly from [-0.1, 0.1].
    pub fn seeded(features: Vec<Vec<f64>>, seed: u64) -> Result<Self, DiscourseError> {
        let dim = features.first().map_or(0, Vec::len);
        let mut rng = SeededRng::new(seed).split("linear-scorer");
        let weights = (0..NUM_ACTIONS * 3 * dim).map(|_| rng.uniform(-0.1, 0.1)).collect();
        let bias = (0..NUM_ACTIONS).map(|_| rng.uniform(-0.1, 0.1)).collect();
        Self::new(features, weights, bias)
    }

    fn span_mean(&self, span: Option<&(usize, usize)>, out: &mut Vec<f64>) {
        match span {
            Some(&(a, b)) => {
                let n = (b - a + 1) as f64;
                for d in 0..self.dim {
                    out.push((a..=b).map(|e| self.features[e][d]).sum::<f64>() / n);
                }
            }
            None => out.extend(std::iter::repeat(0.0).take(self.dim)),
        }
    }
}

impl ActionScorer for LinearScorer {
    fn score(&mut self, state: &ParserState<'_>) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.dim);
        let k = state.stack.len();
        self.span_mean(k.checked_sub(1).and_then(|i| state.stack.get(i)), &mut x);
        self.span_mean(k.checked_sub(2).and_then(|i| state.stack.get(i)), &mut x);
        match state.queue_front {
            Some(e) => x.extend_from_slice(&self.features[e]),
            None => x.extend(std::iter::repeat(0.0).take(self.dim)),
        }
        let cols = 3 * self.dim;
        (0..NUM_ACTIONS)
            .map(|a| self.bias[a] + self.weights[a * cols..(a + 1) * cols].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}
