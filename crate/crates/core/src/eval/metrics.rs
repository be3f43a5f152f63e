use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ImplicationLabel, MentionRecord};
use crate::error::{Error, Result};
use crate::fusion::NormalizationResult;

/// Exact-set accuracy, stratified by the gold implication number.
/// Accuracies are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub uni: f64,
    pub multi: f64,
    pub total: f64,
    pub uni_correct: usize,
    pub uni_count: usize,
    pub multi_correct: usize,
    pub multi_count: usize,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Accuracy of predicted code sets against `gold`, position by position.
pub fn accuracy_of<S: AsRef<str>>(predicted: &[Vec<S>], gold: &[MentionRecord]) -> Result<Metrics> {
    if predicted.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} gold mentions",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut uc, mut un, mut mc, mut mn) = (0, 0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        let p: BTreeSet<&str> = p.iter().map(AsRef::as_ref).collect();
        let g_set: BTreeSet<&str> = g.codes.iter().map(String::as_str).collect();
        let ok = (p == g_set) as usize;
        if g.codes.len() > 1 {
            mn += 1;
            mc += ok;
        } else {
            un += 1;
            uc += ok;
        }
    }
    Ok(Metrics {
        uni: percent(uc, un),
        multi: percent(mc, mn),
        total: percent(uc + mc, un + mn),
        uni_correct: uc,
        uni_count: un,
        multi_correct: mc,
        multi_count: mn,
    })
}

/// Accuracy of pipeline results; result `i` must carry mention id `i`.
pub fn accuracy(results: &[NormalizationResult], gold: &[MentionRecord]) -> Result<Metrics> {
    if let Some((i, r)) = results.iter().enumerate().find(|(i, r)| r.mention_id != *i) {
        return Err(Error::Contract(format!("result {i} is for mention {}", r.mention_id)));
    }
    let predicted: Vec<Vec<&str>> = results
        .iter()
        .map(|r| r.selected.iter().map(String::as_str).collect())
        .collect();
    accuracy_of(&predicted, gold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub ks: Vec<usize>,
    /// Fraction of mentions, one per entry of `ks`.
    pub values: Vec<f64>,
}

impl RecallAtK {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.values[i])
    }
}

/// Fraction of mentions whose every gold code is within the first `k`
/// codes of its candidate list, for each `k`.
pub fn recall_at_k<S: AsRef<str>>(candidates: &[Vec<S>], gold: &[MentionRecord], ks: &[usize]) -> Result<RecallAtK> {
    if candidates.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} candidate lists for {} gold mentions",
            candidates.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("recall_at_k over no mentions".into()));
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if let Some((i, c)) = candidates.iter().enumerate().find(|(_, c)| c.len() < max_k) {
        return Err(Error::Contract(format!(
            "candidate list {i} has {} entries, fewer than k = {max_k}",
            c.len()
        )));
    }
    let values = ks
        .iter()
        .map(|&k| {
            let hits = candidates
                .iter()
                .zip(gold)
                .filter(|(c, g)| g.codes.iter().all(|code| c[..k].iter().any(|x| x.as_ref() == code)))
                .count();
            hits as f64 / gold.len() as f64
        })
        .collect();
    Ok(RecallAtK { ks: ks.to_vec(), values })
}

/// Fraction of predictions matching the gold implication class.
pub fn implication_accuracy(predicted: &[ImplicationLabel], gold: &[MentionRecord]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::Contract("implication predictions and gold differ in length".into()));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput("no mentions to score".into()));
    }
    let mut hits = 0;
    for (p, g) in predicted.iter().zip(gold) {
        hits += (*p == ImplicationLabel::from_count(g.codes.len())?) as usize;
    }
    Ok(hits as f64 / gold.len() as f64)
}
