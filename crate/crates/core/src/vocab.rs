//! Token vocabularies with fixed special ids.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const EOS: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const START_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, START_TOKEN, EOS_TOKEN];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Specials followed by the `max_size - 4` most frequent tokens; ties
    /// break lexicographically so the result is independent of input order.
    pub fn build<I, S>(tokens: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            let t = t.as_ref();
            if SPECIALS.contains(&t) {
                continue;
            }
            match counts.get_mut(t) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(t.to_string(), 1);
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(SPECIALS.len());
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(t, _)| t))
            .collect::<Vec<_>>();
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

/// Base vocabulary extended with one document's out-of-vocabulary source
/// tokens, numbered from `base.len()` in order of first occurrence.
#[derive(Debug, Clone)]
pub struct ExtendedVocab<'a> {
    base: &'a Vocab,
    oovs: Vec<String>,
    oov_index: HashMap<String, usize>,
}

impl<'a> ExtendedVocab<'a> {
    pub fn new<S: AsRef<str>>(base: &'a Vocab, source: &[S]) -> Self {
        let mut oovs = Vec::new();
        let mut oov_index = HashMap::new();
        for t in source {
            let t = t.as_ref();
            if base.get(t).is_none() && !oov_index.contains_key(t) {
                oov_index.insert(t.to_string(), base.len() + oovs.len());
                oovs.push(t.to_string());
            }
        }
        ExtendedVocab { base, oovs, oov_index }
    }

    pub fn base(&self) -> &Vocab {
        self.base
    }

    pub fn len(&self) -> usize {
        self.base.len() + self.oovs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn oovs(&self) -> &[String] {
        &self.oovs
    }

    /// Extended id: base id, temporary OOV id, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.base
            .get(token)
            .or_else(|| self.oov_index.get(token).copied())
            .unwrap_or(UNK)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        if id < self.base.len() {
            self.base.token(id)
        } else {
            self.oovs.get(id - self.base.len()).map(String::as_str)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_ranks_by_frequency_then_text() {
        let v = Vocab::build("b a c a b a".split(' '), 6);
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.token(5), Some("b"));
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.id(EOS_TOKEN), EOS);
    }

    #[test]
    fn extended_ids_do_not_collide() {
        let v = Vocab::build(["x", "y"], 10);
        let ext = ExtendedVocab::new(&v, &["x", "zz", "q", "zz"]);
        assert_eq!(ext.oovs(), ["zz", "q"]);
        assert_eq!(ext.id("zz"), v.len());
        assert_eq!(ext.id("q"), v.len() + 1);
        assert_eq!(ext.id("x"), v.id("x"));
        assert_eq!(ext.id("never"), UNK);
        assert_eq!(ext.token(v.len() + 1), Some("q"));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(["x", "y", "y"], 10);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
