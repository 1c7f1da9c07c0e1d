use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, Review};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense token ↔ index map. Index 0 is padding, 1 is the unknown token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds from `tokens` in the given order after the two reserved entries.
    /// Duplicates and reserved names are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::from(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]);
        for t in tokens {
            let t = t.into();
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    /// Tokens seen at least `min_count` times in `corpus`, most frequent first
    /// (ties in lexicographic order).
    pub fn build(corpus: &Corpus, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in corpus.reviews.iter().flat_map(|r| &r.segments).flat_map(|s| &s.tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let mut items: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Vocabulary::from_tokens(items.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// FNV-1a over the token list; identifies the vocabulary a model was
    /// trained with.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for t in &self.tokens {
            for b in t.as_bytes().iter().chain(std::iter::once(&0u8)) {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        format!("{h:016x}")
    }
}

/// A review as token ids, one list per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedReview {
    pub segments: Vec<Vec<usize>>,
    pub label: usize,
    pub weight: f64,
}

impl IndexedReview {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// All ids in order, as one sequence.
    pub fn flat(&self) -> Vec<usize> {
        self.segments.concat()
    }
}

impl Vocabulary {
    pub fn index_review(&self, review: &Review) -> IndexedReview {
        IndexedReview {
            segments: review.segments.iter().map(|s| self.ids(&s.tokens)).collect(),
            label: review.label,
            weight: review.sample_weight,
        }
    }

    pub fn index_corpus(&self, corpus: &Corpus) -> Vec<IndexedReview> {
        corpus.reviews.iter().map(|r| self.index_review(r)).collect()
    }
}
