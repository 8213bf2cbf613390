use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize_path, PathTokenMode};
use crate::paths::BundleRecord;
use crate::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const NO_PATH_TOKEN: &str = "<no-path>";
pub const UNK: usize = 0;
pub const NO_PATH: usize = 1;

/// Token ↔ row index. Rows 0 and 1 are always the unknown and no-path
/// tokens; the rest follow first occurrence in the data the vocabulary was
/// built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for TokenVocab {
    fn default() -> Self {
        let mut v = TokenVocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(UNK_TOKEN);
        v.insert(NO_PATH_TOKEN);
        v
    }
}

impl TokenVocab {
    pub fn from_bundles<'a>(bundles: impl IntoIterator<Item = &'a BundleRecord>, mode: PathTokenMode) -> Self {
        let mut v = TokenVocab::default();
        for b in bundles {
            for p in &b.paths {
                for t in tokenize_path(p, mode) {
                    v.insert(t);
                }
            }
        }
        v
    }

    /// Adds a token if absent and returns its row.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Row of `token`, falling back to the unknown token.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl TryFrom<Vec<String>> for TokenVocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
            || tokens.get(NO_PATH).map(String::as_str) != Some(NO_PATH_TOKEN)
        {
            return Err(Error::Format("vocabulary must start with the special tokens".into()));
        }
        let mut v = TokenVocab {
            tokens: Vec::with_capacity(tokens.len()),
            index: HashMap::with_capacity(tokens.len()),
        };
        for t in &tokens {
            if v.get(t).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token `{t}`")));
            }
            v.insert(t);
        }
        Ok(v)
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Direction, PathRecord, RelStep};

    fn bundle(paths: &[(&[&str], &[&str])]) -> BundleRecord {
        BundleRecord {
            id: "b".into(),
            label: "neutral".into(),
            identical_pairs: 0,
            unreachable_pairs: 0,
            paths: paths
                .iter()
                .map(|(nodes, rels)| PathRecord {
                    src: nodes[0].into(),
                    dst: nodes[nodes.len() - 1].into(),
                    nodes: nodes.iter().map(|s| s.to_string()).collect(),
                    rels: rels
                        .iter()
                        .map(|r| RelStep {
                            rel: r.to_string(),
                            dir: Direction::Forward,
                        })
                        .collect(),
                    cost: 1.0,
                    hops: rels.len(),
                })
                .collect(),
            features: None,
        }
    }

    #[test]
    fn specials_first_then_first_occurrence() {
        let b = bundle(&[(&["a", "b", "c"], &["isa", "partof"]), (&["c", "a"], &["isa"])]);
        let v = TokenVocab::from_bundles([&b], PathTokenMode::Relations);
        assert_eq!(v.tokens(), [UNK_TOKEN, NO_PATH_TOKEN, "isa", "partof"]);
        assert_eq!(v.id("atlocation"), UNK);
        let v = TokenVocab::from_bundles([&b], PathTokenMode::Both);
        assert_eq!(v.tokens()[2..], ["a", "isa", "b", "partof", "c"]);
    }

    #[test]
    fn serde_roundtrip_and_validation() {
        let b = bundle(&[(&["a", "b"], &["isa"])]);
        let v = TokenVocab::from_bundles([&b], PathTokenMode::Entities);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<TokenVocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<TokenVocab>(r#"["a","b"]"#).is_err());
        assert!(serde_json::from_str::<TokenVocab>(r#"["<unk>","<no-path>","x","x"]"#).is_err());
    }
}
