//! Bracketed tree strings: `(EDU k)` for leaves and
//! `(rel:PATTERN left right)` for relations, e.g.
//! `(elab:NS (attr:NS (EDU 0) (EDU 1)) (EDU 2))`.

use super::{DiscourseError, DiscourseTree, NodeId, NodeKind, NuclearityPattern, Relation, TreeBuilder};

/// Strict parser: every relation node must have exactly two children.
pub fn parse_bracketed(text: &str) -> Result<DiscourseTree, DiscourseError> {
    Parser::new(text, false).parse()
}

/// Accepts relation nodes with more than two children and binarizes them
/// left-branching (`(r a b c)` becomes `(r (r a b) c)`).
pub fn parse_bracketed_lenient(text: &str) -> Result<DiscourseTree, DiscourseError> {
    Parser::new(text, true).parse()
}

/// Canonical form: single spaces between tokens, no trailing whitespace.
pub fn serialize_bracketed(tree: &DiscourseTree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root(), &mut out);
    out
}

fn write_node(tree: &DiscourseTree, id: NodeId, out: &mut String) {
    match tree.node(id).kind {
        NodeKind::Leaf { edu } => {
            out.push_str("(EDU ");
            out.push_str(&edu.to_string());
            out.push(')');
        }
        NodeKind::Internal {
            relation,
            pattern,
            left,
            right,
        } => {
            out.push('(');
            out.push_str(relation.as_str());
            out.push(':');
            out.push_str(pattern.as_str());
            out.push(' ');
            write_node(tree, left, out);
            out.push(' ');
            write_node(tree, right, out);
            out.push(')');
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    lenient: bool,
    builder: TreeBuilder,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, lenient: bool) -> Self {
        Parser {
            src: text.as_bytes(),
            text,
            pos: 0,
            lenient,
            builder: TreeBuilder::new(),
        }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, DiscourseError> {
        Err(DiscourseError::Parse {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), DiscourseError> {
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(self.pos, format!("expected `{}`", byte as char))
        }
    }

    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.src[self.pos];
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn parse(mut self) -> Result<DiscourseTree, DiscourseError> {
        self.skip_ws();
        let root = self.node()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err(self.pos, "trailing input after tree");
        }
        self.builder.finish(root)
    }

    fn node(&mut self) -> Result<NodeId, DiscourseError> {
        let open = self.pos;
        self.expect(b'(')?;
        self.skip_ws();
        let head_at = self.pos;
        let head = self.atom();
        if head.is_empty() {
            return self.err(head_at, "missing node label");
        }
        if head == "EDU" {
            self.skip_ws();
            let num_at = self.pos;
            let num = self.atom();
            let edu: usize = match num.parse() {
                Ok(v) => v,
                Err(_) => return self.err(num_at, format!("bad EDU index `{num}`")),
            };
            self.skip_ws();
            self.expect(b')')?;
            return Ok(self.builder.leaf(edu));
        }
        let Some((rel, pat)) = head.split_once(':') else {
            return self.err(head_at, format!("expected `rel:PATTERN`, found `{head}`"));
        };
        let relation: Relation = match rel.parse() {
            Ok(r) => r,
            Err(e) => return self.err(head_at, e),
        };
        let pattern: NuclearityPattern = match pat.parse() {
            Ok(p) => p,
            Err(e) => return self.err(head_at + rel.len() + 1, e),
        };
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b'(') => children.push(self.node()?),
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => return self.err(self.pos, "expected `(` or `)`"),
                None => return self.err(self.pos, format!("unclosed `(` opened at byte {open}")),
            }
        }
        if children.len() < 2 || (children.len() > 2 && !self.lenient) {
            return self.err(open, format!("relation node has {} children, expected 2", children.len()));
        }
        let mut acc = children[0];
        for &c in &children[1..] {
            acc = self.builder.internal(relation, pattern, acc, c)?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discourse::Nuclearity;

    #[test]
    fn single_leaf() {
        let t = parse_bracketed("(EDU 0)").unwrap();
        assert_eq!(t.num_leaves(), 1);
        assert_eq!(t.height(t.root()), 0);
    }

    #[test]
    fn two_edu_tree() {
        let t = parse_bracketed("(elab:NS (EDU 0) (EDU 1))").unwrap();
        assert_eq!(t.relation(t.root()), Some(Relation::Elab));
        assert_eq!(t.nuclearity(t.leaf_node(0).unwrap()), Some(Nuclearity::Nucleus));
    }

    #[test]
    fn canonical_round_trip() {
        let s = "(elab:NS (attr:NS (EDU 0) (EDU 1)) (EDU 2))";
        assert_eq!(serialize_bracketed(&parse_bracketed(s).unwrap()), s);
        let messy = "  ( elab:NS\n(attr:NS (EDU   0) (EDU 1) )   (EDU 2) ) ";
        assert_eq!(serialize_bracketed(&parse_bracketed(messy).unwrap()), s);
    }

    #[test]
    fn errors_carry_offsets() {
        let cases = [
            ("(foo:NS (EDU 0) (EDU 1))", 1),
            ("(elab:XY (EDU 0) (EDU 1))", 6),
            ("(elab:NS (EDU 0))", 0),
            ("(elab:NS (EDU 0) (EDU 1) (EDU 2))", 0),
            ("(elab:NS (EDU 0) (EDU 1)", 24),
            ("(EDU x)", 5),
            ("(EDU 0))", 7),
        ];
        for (text, offset) in cases {
            match parse_bracketed(text) {
                Err(DiscourseError::Parse { offset: o, .. }) => assert_eq!(o, offset, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn lenient_binarizes_left_branching() {
        let t = parse_bracketed_lenient("(list:NN (EDU 0) (EDU 1) (EDU 2))").unwrap();
        assert_eq!(serialize_bracketed(&t), "(list:NN (list:NN (EDU 0) (EDU 1)) (EDU 2))");
    }
}
