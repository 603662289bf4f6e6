//! Per-EDU shallow features.
//!
//! The ancestor set of an EDU is every node on the path from its leaf
//! (inclusive) to the root (inclusive). The leaf contributes to the
//! nuclearity numerator but, having no label and height 0, nothing to the
//! relation scores; the root carries a label but no nuclearity.

use super::FeatureError;
use crate::discourse::{DiscourseTree, Nuclearity, NodeId, Relation, NUM_RELATIONS};

/// 1 nuclearity score, 18 relation scores, 2 node types.
pub const SHALLOW_DIM: usize = 1 + NUM_RELATIONS + 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShallowFeatureVector {
    pub nuclearity_score: f64,
    /// Indexed by [`Relation::index`].
    pub relation_scores: [f64; NUM_RELATIONS],
    pub self_type: f64,
    pub sibling_type: f64,
}

impl ShallowFeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SHALLOW_DIM);
        v.push(self.nuclearity_score);
        v.extend_from_slice(&self.relation_scores);
        v.push(self.self_type);
        v.push(self.sibling_type);
        v
    }
}

fn leaf(tree: &DiscourseTree, edu: usize) -> Result<NodeId, FeatureError> {
    tree.leaf_node(edu)
        .ok_or_else(|| FeatureError::Alignment(format!("EDU {edu} is not a leaf of the tree")))
}

fn indicator(n: Option<Nuclearity>) -> f64 {
    n.map_or(0.0, Nuclearity::indicator)
}

/// Nucleus ancestors over root height; 1.0 for a single-EDU tree.
pub fn nuclearity_score(tree: &DiscourseTree, edu: usize) -> Result<f64, FeatureError> {
    let id = leaf(tree, edu)?;
    let root_height = tree.height(tree.root());
    if root_height == 0 {
        return Ok(1.0);
    }
    let nuclei: f64 = tree.path_to_root(id).map(|x| indicator(tree.nuclearity(x))).sum();
    Ok(nuclei / root_height as f64)
}

/// All 18 height-weighted relation scores; zeros for a single-EDU tree.
pub fn relation_scores(tree: &DiscourseTree, edu: usize) -> Result<[f64; NUM_RELATIONS], FeatureError> {
    let id = leaf(tree, edu)?;
    let mut scores = [0.0; NUM_RELATIONS];
    let mut total = 0.0;
    for x in tree.path_to_root(id) {
        let h = tree.height(x) as f64;
        total += h;
        if let Some(r) = tree.relation(x) {
            scores[r.index()] += h;
        }
    }
    if total > 0.0 {
        scores.iter_mut().for_each(|s| *s /= total);
    }
    Ok(scores)
}

pub fn relation_score(tree: &DiscourseTree, edu: usize, relation: Relation) -> Result<f64, FeatureError> {
    Ok(relation_scores(tree, edu)?[relation.index()])
}

/// `(self, sibling)` with Nucleus = 1 and Satellite = 0; `(1, 1)` for a lone EDU.
pub fn node_type_features(tree: &DiscourseTree, edu: usize) -> Result<(f64, f64), FeatureError> {
    let id = leaf(tree, edu)?;
    match tree.sibling(id) {
        None => Ok((1.0, 1.0)),
        Some(sib) => Ok((indicator(tree.nuclearity(id)), indicator(tree.nuclearity(sib)))),
    }
}

/// One vector per EDU, in EDU order.
pub fn shallow_features(tree: &DiscourseTree) -> Result<Vec<ShallowFeatureVector>, FeatureError> {
    let n = tree.num_leaves();
    (0..n)
        .map(|edu| {
            let (self_type, sibling_type) = node_type_features(tree, edu)?;
            Ok(ShallowFeatureVector {
                nuclearity_score: nuclearity_score(tree, edu)?,
                relation_scores: relation_scores(tree, edu)?,
                self_type,
                sibling_type,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discourse::parse_bracketed;

    const THREE: &str = "(elab:NS (attr:NS (EDU 0) (EDU 1)) (EDU 2))";

    #[test]
    fn nuclearity_examples() {
        let t = parse_bracketed("(elab:NS (EDU 0) (EDU 1))").unwrap();
        assert_eq!(nuclearity_score(&t, 0).unwrap(), 1.0);
        assert_eq!(nuclearity_score(&t, 1).unwrap(), 0.0);
        let t = parse_bracketed(THREE).unwrap();
        assert_eq!(nuclearity_score(&t, 0).unwrap(), 1.0);
        assert_eq!(nuclearity_score(&t, 1).unwrap(), 0.5);
        assert_eq!(nuclearity_score(&t, 2).unwrap(), 0.0);
        let deep = parse_bracketed("(list:NN (list:NN (list:NN (EDU 0) (EDU 1)) (EDU 2)) (EDU 3))").unwrap();
        assert_eq!(nuclearity_score(&deep, 0).unwrap(), 1.0);
    }

    #[test]
    fn relation_examples() {
        let t = parse_bracketed(THREE).unwrap();
        assert!((relation_score(&t, 0, Relation::Attr).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((relation_score(&t, 0, Relation::Elab).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let homogeneous = parse_bracketed("(elab:SN (elab:NN (EDU 0) (EDU 1)) (EDU 2))").unwrap();
        let s = relation_scores(&homogeneous, 1).unwrap();
        assert_eq!(s[Relation::Elab.index()], 1.0);
        assert_eq!(s.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn node_type_examples() {
        let t = parse_bracketed("(elab:NS (EDU 0) (EDU 1))").unwrap();
        assert_eq!(node_type_features(&t, 0).unwrap(), (1.0, 0.0));
        assert_eq!(node_type_features(&t, 1).unwrap(), (0.0, 1.0));
        let t = parse_bracketed("(list:NN (EDU 0) (EDU 1))").unwrap();
        assert_eq!(node_type_features(&t, 1).unwrap(), (1.0, 1.0));
        let t = parse_bracketed(THREE).unwrap();
        assert_eq!(node_type_features(&t, 2).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn assembled_vector() {
        let t = parse_bracketed("(elab:NS (EDU 0) (EDU 1))").unwrap();
        let v = shallow_features(&t).unwrap()[0].to_vec();
        let mut expected = vec![0.0; SHALLOW_DIM];
        expected[0] = 1.0;
        expected[1 + Relation::Elab.index()] = 1.0;
        expected[19] = 1.0;
        assert_eq!(v, expected);
    }

    #[test]
    fn single_edu_is_degenerate() {
        let t = parse_bracketed("(EDU 0)").unwrap();
        let v = shallow_features(&t).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].nuclearity_score, 1.0);
        assert!(v[0].relation_scores.iter().all(|&s| s == 0.0));
        assert_eq!((v[0].self_type, v[0].sibling_type), (1.0, 1.0));
    }

    #[test]
    fn missing_edu_is_alignment_error() {
        let t = parse_bracketed("(EDU 0)").unwrap();
        assert!(matches!(nuclearity_score(&t, 3), Err(FeatureError::Alignment(_))));
    }
}
