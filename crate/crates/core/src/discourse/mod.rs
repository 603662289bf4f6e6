//! Binary RST trees over elementary discourse units (EDUs).

mod bracket;
mod relation;
mod transition;
mod tree;
mod validate;

pub use bracket::{parse_bracketed, parse_bracketed_lenient, serialize_bracketed};
pub use relation::{Nuclearity, NuclearityPattern, Relation, NUM_RELATIONS};
pub use transition::{
    apply_actions, transition_decode, tree_to_actions, ActionScorer, GoldReplayScorer, LinearScorer, ParserState, RandomScorer,
    TransitionAction, NUM_ACTIONS,
};
pub use tree::{validate_spans, DiscourseTree, EduSpan, NodeId, NodeKind, TreeBuilder, TreeNode};
pub use validate::{validate_tree, Violation};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiscourseError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("malformed action sequence at step {step}: {reason}")]
    MalformedSequence { step: usize, reason: String },
    #[error("invalid tree structure: {0}")]
    Structure(String),
    #[error("invalid EDU spans: {0}")]
    Span(String),
}
