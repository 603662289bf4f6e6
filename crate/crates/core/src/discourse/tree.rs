use serde::{Deserialize, Serialize};

use super::{DiscourseError, Nuclearity, NuclearityPattern, Relation};

/// Half-open token range `[start, end)` of one elementary discourse unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EduSpan {
    pub edu_id: usize,
    pub start: usize,
    pub end: usize,
}

impl EduSpan {
    pub fn new(edu_id: usize, start: usize, end: usize) -> Self {
        EduSpan { edu_id, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Spans must be sorted, contiguous, non-empty, start at token 0, number
/// EDUs from 0, and end within `n_tokens`.
pub fn validate_spans(spans: &[EduSpan], n_tokens: usize) -> Result<(), DiscourseError> {
    let mut expected_start = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.edu_id != i {
            return Err(DiscourseError::Span(format!("span {i} has edu_id {}", s.edu_id)));
        }
        if s.start >= s.end {
            return Err(DiscourseError::Span(format!("span {i} is empty: [{}, {})", s.start, s.end)));
        }
        if s.start != expected_start {
            return Err(DiscourseError::Span(format!(
                "span {i} starts at {} but previous span ended at {expected_start}",
                s.start
            )));
        }
        expected_start = s.end;
    }
    if expected_start > n_tokens {
        return Err(DiscourseError::Span(format!(
            "spans cover {expected_start} tokens but document has {n_tokens}"
        )));
    }
    Ok(())
}

/// Arena index of a tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { edu: usize },
    Internal {
        relation: Relation,
        pattern: NuclearityPattern,
        left: NodeId,
        right: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub parent: Option<NodeId>,
    pub height: usize,
}

/// Immutable binary RST tree. Nodes are stored in post-order, so two trees
/// with the same structure compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscourseTree {
    nodes: Vec<TreeNode>,
    root: NodeId,
}

impl DiscourseTree {
    pub fn leaf(edu: usize) -> Self {
        let mut b = TreeBuilder::new();
        let id = b.leaf(edu);
        b.finish(id).expect("single leaf is a valid tree")
    }

    /// Joins two trees under a new root.
    pub fn join(relation: Relation, pattern: NuclearityPattern, left: DiscourseTree, right: DiscourseTree) -> Self {
        let mut b = TreeBuilder::new();
        let l = b.graft(&left, left.root);
        let r = b.graft(&right, right.root);
        let root = b.internal(relation, pattern, l, r).expect("fresh children");
        b.finish(root).expect("joined tree is connected")
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &TreeNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn height(&self, id: NodeId) -> usize {
        self.nodes[id.0].height
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    /// EDU indices of the leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        // post-order visits leaves left to right
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { edu } => Some(edu),
                NodeKind::Internal { .. } => None,
            })
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Leaf { .. })).count()
    }

    pub fn num_internal(&self) -> usize {
        self.nodes.len() - self.num_leaves()
    }

    /// First leaf node carrying `edu`.
    pub fn leaf_node(&self, edu: usize) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.kind == NodeKind::Leaf { edu })
            .map(NodeId)
    }

    /// Nuclearity of `id` within its parent relation; `None` for the root.
    pub fn nuclearity(&self, id: NodeId) -> Option<Nuclearity> {
        let parent = self.nodes[id.0].parent?;
        match self.nodes[parent.0].kind {
            NodeKind::Internal { pattern, left, .. } => Some(if left == id { pattern.left() } else { pattern.right() }),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.nodes[id.0].parent?;
        match self.nodes[parent.0].kind {
            NodeKind::Internal { left, right, .. } => Some(if left == id { right } else { left }),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn relation(&self, id: NodeId) -> Option<Relation> {
        match self.nodes[id.0].kind {
            NodeKind::Internal { relation, .. } => Some(relation),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Nodes from `id` (inclusive) up to the root (inclusive).
    pub fn path_to_root(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(Some(id), move |n| self.nodes[n.0].parent)
    }
}

/// Incremental construction; `finish` re-lays the arena canonically.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    kinds: Vec<NodeKind>,
    attached: Vec<bool>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, edu: usize) -> NodeId {
        self.kinds.push(NodeKind::Leaf { edu });
        self.attached.push(false);
        NodeId(self.kinds.len() - 1)
    }

    pub fn internal(&mut self, relation: Relation, pattern: NuclearityPattern, left: NodeId, right: NodeId) -> Result<NodeId, DiscourseError> {
        for c in [left, right] {
            match self.attached.get(c.0) {
                None => return Err(DiscourseError::Structure(format!("unknown child node {}", c.0))),
                Some(true) => return Err(DiscourseError::Structure(format!("node {} already has a parent", c.0))),
                Some(false) => {}
            }
        }
        if left == right {
            return Err(DiscourseError::Structure("node used as both children".into()));
        }
        self.attached[left.0] = true;
        self.attached[right.0] = true;
        self.kinds.push(NodeKind::Internal {
            relation,
            pattern,
            left,
            right,
        });
        self.attached.push(false);
        Ok(NodeId(self.kinds.len() - 1))
    }

    fn graft(&mut self, tree: &DiscourseTree, id: NodeId) -> NodeId {
        match tree.nodes[id.0].kind {
            NodeKind::Leaf { edu } => self.leaf(edu),
            NodeKind::Internal {
                relation,
                pattern,
                left,
                right,
            } => {
                let l = self.graft(tree, left);
                let r = self.graft(tree, right);
                self.internal(relation, pattern, l, r).expect("fresh children")
            }
        }
    }

    pub fn finish(self, root: NodeId) -> Result<DiscourseTree, DiscourseError> {
        if root.0 >= self.kinds.len() || self.attached[root.0] {
            return Err(DiscourseError::Structure("root is missing or has a parent".into()));
        }
        let unattached = self.attached.iter().filter(|a| !**a).count();
        if unattached != 1 {
            return Err(DiscourseError::Structure(format!("{} disconnected subtrees", unattached)));
        }
        // iterative post-order from the root
        let mut order = Vec::with_capacity(self.kinds.len());
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            match self.kinds[id.0] {
                NodeKind::Internal { left, right, .. } if !expanded => {
                    stack.push((id, true));
                    stack.push((right, false));
                    stack.push((left, false));
                }
                _ => order.push(id),
            }
        }
        let mut remap = vec![usize::MAX; self.kinds.len()];
        for (new, old) in order.iter().enumerate() {
            remap[old.0] = new;
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(order.len());
        for old in &order {
            let kind = match self.kinds[old.0] {
                NodeKind::Leaf { edu } => NodeKind::Leaf { edu },
                NodeKind::Internal {
                    relation,
                    pattern,
                    left,
                    right,
                } => NodeKind::Internal {
                    relation,
                    pattern,
                    left: NodeId(remap[left.0]),
                    right: NodeId(remap[right.0]),
                },
            };
            let height = match kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Internal { left, right, .. } => 1 + nodes[left.0].height.max(nodes[right.0].height),
            };
            nodes.push(TreeNode {
                kind,
                parent: None,
                height,
            });
        }
        for i in 0..nodes.len() {
            if let NodeKind::Internal { left, right, .. } = nodes[i].kind {
                nodes[left.0].parent = Some(NodeId(i));
                nodes[right.0].parent = Some(NodeId(i));
            }
        }
        let root = NodeId(nodes.len() - 1);
        Ok(DiscourseTree { nodes, root })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_edu() -> DiscourseTree {
        DiscourseTree::join(
            Relation::Elab,
            NuclearityPattern::NS,
            DiscourseTree::join(Relation::Attr, NuclearityPattern::NS, DiscourseTree::leaf(0), DiscourseTree::leaf(1)),
            DiscourseTree::leaf(2),
        )
    }

    #[test]
    fn heights_and_counts() {
        let t = three_edu();
        assert_eq!(t.height(t.root()), 2);
        assert_eq!(t.leaves(), vec![0, 1, 2]);
        assert_eq!(t.num_internal(), t.num_leaves() - 1);
        let e2 = t.leaf_node(2).unwrap();
        assert_eq!(t.nuclearity(e2), Some(Nuclearity::Satellite));
        assert_eq!(t.nuclearity(t.root()), None);
        let sib = t.sibling(e2).unwrap();
        assert_eq!(t.relation(sib), Some(Relation::Attr));
        assert_eq!(t.path_to_root(t.leaf_node(0).unwrap()).count(), 3);
    }

    #[test]
    fn builder_rejects_reuse_and_disconnection() {
        let mut b = TreeBuilder::new();
        let a = b.leaf(0);
        let c = b.leaf(1);
        let p = b.internal(Relation::List, NuclearityPattern::NN, a, c).unwrap();
        assert!(b.internal(Relation::List, NuclearityPattern::NN, a, p).is_err());
        let _stray = b.leaf(2);
        assert!(b.finish(p).is_err());
    }

    #[test]
    fn equality_is_structural() {
        let mut b = TreeBuilder::new();
        let e2 = b.leaf(2);
        let e1 = b.leaf(1);
        let e0 = b.leaf(0);
        let attr = b.internal(Relation::Attr, NuclearityPattern::NS, e0, e1).unwrap();
        let root = b.internal(Relation::Elab, NuclearityPattern::NS, attr, e2).unwrap();
        assert_eq!(b.finish(root).unwrap(), three_edu());
    }

    #[test]
    fn span_validation() {
        let ok = [EduSpan::new(0, 0, 3), EduSpan::new(1, 3, 5)];
        assert!(validate_spans(&ok, 5).is_ok());
        assert!(validate_spans(&ok, 7).is_ok());
        assert!(validate_spans(&ok, 4).is_err());
        assert!(validate_spans(&[EduSpan::new(0, 0, 3), EduSpan::new(1, 2, 5)], 5).is_err());
        assert!(validate_spans(&[EduSpan::new(0, 1, 3)], 5).is_err());
        assert!(validate_spans(&[EduSpan::new(0, 2, 2)], 5).is_err());
        assert!(validate_spans(&[EduSpan::new(1, 0, 2)], 5).is_err());
    }
}
