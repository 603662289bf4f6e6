//! Helpers shared by the integration tests: random trees, a shallow-feature
//! oracle that works from the bracketed string alone, and toy models.

#![allow(dead_code)]

use rstfeat::discourse::{serialize_bracketed, DiscourseTree, NuclearityPattern, Relation};
use rstfeat::features::{Incorporation, SHALLOW_DIM};
use rstfeat::nn::SeededRng;
use rstfeat::summarizer::{StepModel, SummConfig, SummError, Summarizer};
use rstfeat::vocab::Vocab;

/// Random binary tree over EDUs `lo..hi`.
pub fn random_tree_range(lo: usize, hi: usize, rng: &mut SeededRng) -> DiscourseTree {
    if hi - lo == 1 {
        return DiscourseTree::leaf(lo);
    }
    let split = rng.range(lo + 1, hi - 1);
    let rel = Relation::ALL[rng.below(Relation::ALL.len())];
    let pat = NuclearityPattern::ALL[rng.below(3)];
    let left = random_tree_range(lo, split, rng);
    let right = random_tree_range(split, hi, rng);
    DiscourseTree::join(rel, pat, left, right)
}

pub fn random_tree(n: usize, rng: &mut SeededRng) -> DiscourseTree {
    random_tree_range(0, n, rng)
}

enum ONode {
    Leaf(usize),
    Rel(String, String, Box<ONode>, Box<ONode>),
}

fn parse_onode(toks: &[String], pos: &mut usize) -> ONode {
    assert_eq!(toks[*pos], "(");
    *pos += 1;
    let head = toks[*pos].clone();
    *pos += 1;
    let node = if head == "EDU" {
        let edu = toks[*pos].parse().unwrap();
        *pos += 1;
        ONode::Leaf(edu)
    } else {
        let (rel, pat) = head.split_once(':').unwrap();
        let l = parse_onode(toks, pos);
        let r = parse_onode(toks, pos);
        ONode::Rel(rel.to_string(), pat.to_string(), Box::new(l), Box::new(r))
    };
    assert_eq!(toks[*pos], ")");
    *pos += 1;
    node
}

fn height(n: &ONode) -> usize {
    match n {
        ONode::Leaf(_) => 0,
        ONode::Rel(_, _, l, r) => 1 + height(l).max(height(r)),
    }
}

/// `(height, relation label of the node if internal, nucleus?)` for each
/// node on the path from a leaf to the root, collected per EDU.
type PathEntry = (usize, Option<String>, Option<bool>);

fn walk(n: &ONode, above: &mut Vec<PathEntry>, my_nuc: Option<bool>, sib_nuc: Option<bool>, out: &mut Vec<(usize, Vec<PathEntry>, Option<bool>, Option<bool>)>) {
    match n {
        ONode::Leaf(e) => {
            let mut path = vec![(0, None, my_nuc)];
            path.extend(above.iter().rev().cloned());
            out.push((*e, path, my_nuc, sib_nuc));
        }
        ONode::Rel(rel, pat, l, r) => {
            let (ln, rn) = match pat.as_str() {
                "NS" => (true, false),
                "SN" => (false, true),
                "NN" => (true, true),
                other => panic!("pattern {other}"),
            };
            above.push((height(n), Some(rel.clone()), my_nuc));
            walk(l, above, Some(ln), Some(rn), out);
            walk(r, above, Some(rn), Some(ln), out);
            above.pop();
        }
    }
}

/// Shallow features recomputed from the serialized tree by walking every
/// root-to-leaf path.
pub fn oracle_shallow(tree: &DiscourseTree) -> Vec<Vec<f64>> {
    let text = serialize_bracketed(tree);
    let toks: Vec<String> = text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(String::from).collect();
    let mut pos = 0;
    let root = parse_onode(&toks, &mut pos);
    let root_h = height(&root);
    let mut paths = Vec::new();
    walk(&root, &mut Vec::new(), None, None, &mut paths);
    paths.sort_by_key(|p| p.0);
    paths
        .into_iter()
        .map(|(_, path, me, sib)| {
            let mut v = vec![0.0; SHALLOW_DIM];
            if root_h == 0 {
                v[0] = 1.0;
                v[SHALLOW_DIM - 2] = 1.0;
                v[SHALLOW_DIM - 1] = 1.0;
                return v;
            }
            let nuclei = path.iter().filter(|(_, _, n)| *n == Some(true)).count();
            v[0] = nuclei as f64 / root_h as f64;
            let total: usize = path.iter().map(|(h, _, _)| h).sum();
            for (h, rel, _) in &path {
                if let Some(r) = rel {
                    let idx = r.parse::<Relation>().unwrap().index();
                    v[1 + idx] += *h as f64;
                }
            }
            for x in &mut v[1..1 + Relation::ALL.len()] {
                *x /= total as f64;
            }
            v[SHALLOW_DIM - 2] = if me == Some(true) { 1.0 } else { 0.0 };
            v[SHALLOW_DIM - 1] = if sib == Some(true) { 1.0 } else { 0.0 };
            v
        })
        .collect()
}

/// Language model whose next-token distribution is a seeded function of
/// the whole prefix.
#[derive(Debug, Clone)]
pub struct PrefixLm {
    pub vocab: usize,
    pub seed: u64,
    pub eos: usize,
}

impl StepModel for PrefixLm {
    type State = Vec<usize>;

    fn initial(&mut self) -> Result<Vec<usize>, SummError> {
        Ok(Vec::new())
    }

    fn step(&mut self, state: &Vec<usize>, prev: Option<usize>) -> Result<(Vec<f64>, Vec<usize>), SummError> {
        let mut prefix = state.clone();
        if let Some(p) = prev {
            prefix.push(p);
        }
        let label: String = prefix.iter().map(|t| format!("{t},")).collect();
        let mut rng = SeededRng::new(self.seed).split(&label);
        let logits: Vec<f64> = (0..self.vocab).map(|_| 3.0 * rng.normal()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
        Ok((logits.iter().map(|l| l - z).collect(), prefix))
    }

    fn eos(&self) -> usize {
        self.eos
    }
}

/// Bigram table LM; row `table.len() - 1` scores the first step.
#[derive(Debug, Clone)]
pub struct TableLm {
    pub table: Vec<Vec<f64>>,
    pub eos: usize,
}

impl StepModel for TableLm {
    type State = ();

    fn initial(&mut self) -> Result<(), SummError> {
        Ok(())
    }

    fn step(&mut self, _: &(), prev: Option<usize>) -> Result<(Vec<f64>, ()), SummError> {
        Ok((self.table[prev.unwrap_or(self.table.len() - 1)].clone(), ()))
    }

    fn eos(&self) -> usize {
        self.eos
    }
}

/// Three tokens (0 = end, 1 = a, 2 = b) where greedy picks `a` first but
/// `b a` is the most likely two-token sequence.
pub fn garden_path() -> TableLm {
    let ln = |ps: [f64; 3]| ps.iter().map(|p| p.ln()).collect::<Vec<f64>>();
    TableLm {
        table: vec![ln([1.0, 0.0, 0.0]), ln([0.0, 0.5, 0.5]), ln([0.0, 0.9, 0.1]), ln([0.0, 0.6, 0.4])],
        eos: 0,
    }
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Deterministic pseudo-features for `n` tokens.
pub fn wave_features(n: usize, d: usize, phase: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..d).map(|j| ((i * d + j) as f64 * 0.37 + phase).sin()).collect()).collect()
}

/// Tiny summarizer for property and gradient tests.
pub fn tiny_summarizer(mode: Incorporation, d: usize, seed: u64) -> Summarizer {
    let cfg = SummConfig {
        emb_dim: 4,
        hidden: 3,
        ..SummConfig::desk()
    }
    .with_features(mode, d);
    let vocab = Vocab::build(words("the cat sat on a mat by door"), 12);
    Summarizer::new(cfg, vocab, seed).unwrap()
}
