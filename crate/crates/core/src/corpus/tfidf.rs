use std::collections::{BTreeMap, BTreeSet};

use super::kb::KnowledgeBase;
use crate::error::{Error, Result};

/// L2-normalized sparse term weights, keyed by n-gram.
pub type SparseVector = BTreeMap<String, f64>;

/// Character unigram + bigram tf-idf over KB terminology texts.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfModel {
    df: BTreeMap<String, usize>,
    n_docs: usize,
    docs: Vec<SparseVector>,
}

/// Character unigrams followed by bigrams, with repeats.
pub fn char_ngrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
    out.extend(chars.windows(2).map(|w| w.iter().collect()));
    out
}

pub fn tfidf_fit(kb: &KnowledgeBase) -> Result<TfidfModel> {
    if kb.is_empty() {
        return Err(Error::EmptyInput("tf-idf needs a non-empty KB".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in kb.texts() {
        let unique: BTreeSet<String> = char_ngrams(text).into_iter().collect();
        for term in unique {
            *df.entry(term).or_default() += 1;
        }
    }
    let mut model = TfidfModel {
        df,
        n_docs: kb.len(),
        docs: Vec::new(),
    };
    model.docs = kb.texts().map(|t| model.vectorize(t)).collect();
    Ok(model)
}

pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small.iter().filter_map(|(k, v)| large.get(k).map(|w| v * w)).sum();
    dot.clamp(0.0, 1.0)
}

impl TfidfModel {
    /// Smoothed idf: ln((1 + N) / (1 + df)) + 1; unseen terms have df = 0.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn document_count(&self) -> usize {
        self.n_docs
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// Raw term counts times idf, L2-normalized. Empty text gives an empty vector.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut v = SparseVector::new();
        for term in char_ngrams(text) {
            *v.entry(term).or_default() += 1.0;
        }
        for (term, w) in v.iter_mut() {
            *w *= self.idf(term);
        }
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|w| *w /= norm);
        }
        v
    }

    pub fn document(&self, i: usize) -> &SparseVector {
        &self.docs[i]
    }

    /// Cosine similarity in [0, 1] between `a` and KB terminology `b`.
    pub fn similarity_to(&self, a: &str, b: usize) -> f64 {
        cosine(&self.vectorize(a), &self.docs[b])
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&self.vectorize(a), &self.vectorize(b))
    }

    /// Similarity of `text` to every KB terminology, in KB order.
    pub fn similarities(&self, text: &str) -> Vec<f64> {
        let q = self.vectorize(text);
        self.docs.iter().map(|d| cosine(&q, d)).collect()
    }
}

pub fn tfidf_similarity(model: &TfidfModel, a: &str, b: usize) -> f64 {
    model.similarity_to(a, b)
}
