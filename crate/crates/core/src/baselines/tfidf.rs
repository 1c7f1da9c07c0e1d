use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Word n-grams (1 to `max_n`) joined by single spaces.
pub fn ngrams(tokens: &[String], max_n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        for w in tokens.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

/// TF-IDF over word 1- to 3-grams with smoothed IDF
/// `ln((1 + N) / (1 + df)) + 1` and L2-normalized rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub max_n: usize,
    /// Term to column, dense from 0; terms in lexicographic order.
    pub index: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Fits on tokenized training documents.
    pub fn fit(docs: &[Vec<String>], max_n: usize) -> Result<Self> {
        if docs.is_empty() || max_n == 0 {
            return Err(Error::invalid("tf-idf needs documents and n >= 1"));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut terms = ngrams(doc, max_n);
            terms.sort();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df.values().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let index = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(TfidfVectorizer { max_n, index, idf })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Sparse `(column, value)` pairs sorted by column. Unseen n-grams are
    /// dropped; a document with no known term maps to the empty vector.
    pub fn apply(&self, tokens: &[String]) -> Result<Vec<(usize, f64)>> {
        if self.idf.is_empty() {
            return Err(Error::invalid("tf-idf vectorizer applied before fitting"));
        }
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in ngrams(tokens, self.max_n) {
            if let Some(&col) = self.index.get(&t) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        Ok(row)
    }
}
