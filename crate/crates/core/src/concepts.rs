//! Sentence → ordered concept set, and premise × hypothesis pairing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::kg::{ConceptId, KnowledgeGraph};
use crate::{Error, Result};

/// Stopwords never matched as single tokens. They may still appear inside a
/// multi-word concept ("state_of_the_art"). Negations are deliberately absent.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as",
    "at", "be", "because", "been", "before", "being", "both", "but", "by", "can", "could", "did",
    "do", "does", "doing", "during", "each", "few", "for", "from", "further", "had", "has",
    "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into",
    "is", "it", "its", "itself", "just", "me", "more", "most", "my", "of", "on", "once", "only",
    "or", "other", "our", "ours", "out", "over", "own", "same", "she", "should", "so", "some",
    "such", "than", "that", "the", "their", "theirs", "them", "then", "there", "these", "they",
    "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your", "yours",
];

pub const DEFAULT_LABELS: &[&str] = &["entailment", "contradiction", "neutral"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentInstance {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: String,
}

impl EntailmentInstance {
    pub fn validate(&self, labels: &LabelSet) -> Result<()> {
        if self.premise.trim().is_empty() || self.hypothesis.trim().is_empty() {
            return Err(Error::InvalidInstance(format!(
                "instance `{}` has an empty premise or hypothesis",
                self.id
            )));
        }
        labels.index_of(&self.label).map(|_| ())
    }
}

/// Ordered, non-empty set of class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        let unique: HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Config(format!("duplicate labels in {labels:?}")));
        }
        Ok(LabelSet(labels))
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.0
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel {
                label: label.to_string(),
                allowed: self.0.clone(),
            })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, index: usize) -> &str {
        &self.0[index]
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet(DEFAULT_LABELS.iter().map(|s| s.to_string()).collect())
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(l: LabelSet) -> Self {
        l.0
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    pub max_ngram: usize,
    pub stopwords: HashSet<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_ngram: 3,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ExtractionConfig {
    /// Replaces the stopword list with one word per line (`#` comments allowed).
    pub fn with_stopword_text(mut self, text: &str) -> Self {
        self.stopwords = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrderedConceptSet {
    concepts: Vec<ConceptId>,
}

impl OrderedConceptSet {
    pub fn as_slice(&self) -> &[ConceptId] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    fn push_unique(&mut self, id: ConceptId) {
        if !self.concepts.contains(&id) {
            self.concepts.push(id);
        }
    }
}

impl FromIterator<ConceptId> for OrderedConceptSet {
    fn from_iter<I: IntoIterator<Item = ConceptId>>(iter: I) -> Self {
        let mut set = OrderedConceptSet::default();
        for id in iter {
            set.push_unique(id);
        }
        set
    }
}

/// Lowercased word tokens. Apostrophes and hyphens are kept inside words.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Greedy longest-match concept detection.
///
/// Scanning left to right, the longest n-gram (up to `max_ngram` tokens,
/// joined by underscores) found in the vocabulary is taken and its tokens
/// consumed. Stopwords are never matched as unigrams. Concepts keep the
/// order of their first match; repeats are dropped.
pub fn extract_concepts(
    sentence: &str,
    graph: &KnowledgeGraph,
    config: &ExtractionConfig,
) -> OrderedConceptSet {
    let max_ngram = config.max_ngram.max(1);
    let tokens = tokenize(sentence);
    let mut out = OrderedConceptSet::default();
    let mut i = 0;
    while i < tokens.len() {
        let longest = max_ngram.min(tokens.len() - i);
        let mut matched = None;
        for len in (1..=longest).rev() {
            if len == 1 && config.stopwords.contains(&tokens[i]) {
                continue;
            }
            if let Some(id) = graph.lookup_key(&tokens[i..i + len].join("_")) {
                matched = Some((id, len));
                break;
            }
        }
        match matched {
            Some((id, len)) => {
                out.push_unique(id);
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConceptPair {
    pub src: ConceptId,
    pub dst: ConceptId,
}

/// The ordered product `premise × hypothesis` minus identical pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<ConceptPair>,
    /// Pairs dropped because both sides are the same concept.
    pub identical: usize,
}

/// Pairs ordered by premise position, then hypothesis position.
pub fn cartesian_pairs(premise: &OrderedConceptSet, hypothesis: &OrderedConceptSet) -> PairSet {
    let mut set = PairSet::default();
    for &src in premise.as_slice() {
        for &dst in hypothesis.as_slice() {
            if src == dst {
                set.identical += 1;
            } else {
                set.pairs.push(ConceptPair { src, dst });
            }
        }
    }
    set
}
