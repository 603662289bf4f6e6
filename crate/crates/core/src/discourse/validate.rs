use std::fmt;

use super::DiscourseTree;

/// A broken tree invariant. Arity and label validity are guaranteed by the
/// tree type itself, so only leaf coverage and ordering can be violated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LeafCount { expected: usize, found: usize },
    LeafOrder { position: usize, found: usize },
    DuplicateLeaf { edu: usize },
    EduOutOfRange { edu: usize, n_edus: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LeafCount { expected, found } => write!(f, "expected {expected} leaves, found {found}"),
            Violation::LeafOrder { position, found } => {
                write!(f, "leaf at in-order position {position} is EDU {found}")
            }
            Violation::DuplicateLeaf { edu } => write!(f, "EDU {edu} appears more than once"),
            Violation::EduOutOfRange { edu, n_edus } => write!(f, "EDU {edu} out of range for {n_edus} EDUs"),
        }
    }
}

/// Empty result iff the tree has exactly `n_edus` leaves `0..n_edus` in order.
pub fn validate_tree(tree: &DiscourseTree, n_edus: usize) -> Vec<Violation> {
    let leaves = tree.leaves();
    let mut out = Vec::new();
    if leaves.len() != n_edus {
        out.push(Violation::LeafCount {
            expected: n_edus,
            found: leaves.len(),
        });
    }
    let mut seen = vec![false; n_edus];
    for (position, &edu) in leaves.iter().enumerate() {
        if edu >= n_edus {
            out.push(Violation::EduOutOfRange { edu, n_edus });
            continue;
        }
        if seen[edu] {
            out.push(Violation::DuplicateLeaf { edu });
        }
        seen[edu] = true;
        if edu != position {
            out.push(Violation::LeafOrder { position, found: edu });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discourse::parse_bracketed;

    #[test]
    fn examples() {
        let ok = parse_bracketed("(elab:NS (attr:NS (EDU 0) (EDU 1)) (EDU 2))").unwrap();
        assert!(validate_tree(&ok, 3).is_empty());

        let swapped = parse_bracketed("(elab:NS (EDU 1) (EDU 0))").unwrap();
        let v = validate_tree(&swapped, 2);
        assert!(v.iter().any(|x| matches!(x, Violation::LeafOrder { .. })), "{v:?}");

        let v = validate_tree(&ok, 4);
        assert!(v.contains(&Violation::LeafCount { expected: 4, found: 3 }));

        let dup = parse_bracketed("(elab:NS (EDU 0) (EDU 0))").unwrap();
        assert!(validate_tree(&dup, 2).contains(&Violation::DuplicateLeaf { edu: 0 }));
    }
}
