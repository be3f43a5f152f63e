//! String-similarity and implication-number baselines.

use crate::corpus::{edit_distance, ImplicationLabel, KnowledgeBase, MentionRecord, TfidfModel};
use crate::error::{Error, Result};

/// Index of the largest value, ties to the smaller code.
fn best_by(kb: &KnowledgeBase, scores: &[f64], higher_is_better: bool) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better = if higher_is_better {
            scores[i] > scores[best]
        } else {
            scores[i] < scores[best]
        };
        let tie = scores[i] == scores[best] && kb.term(i).code < kb.term(best).code;
        if better || tie {
            best = i;
        }
    }
    best
}

/// The single most tf-idf-similar terminology for each mention.
pub fn tfidf_top1(model: &TfidfModel, kb: &KnowledgeBase, mentions: &[&str]) -> Result<Vec<Vec<String>>> {
    if kb.is_empty() {
        return Err(Error::Contract("baseline against an empty KB".into()));
    }
    Ok(mentions
        .iter()
        .map(|m| vec![kb.term(best_by(kb, &model.similarities(m), true)).code.clone()])
        .collect())
}

/// The single terminology with the smallest Levenshtein distance.
pub fn edit_distance_top1(kb: &KnowledgeBase, mentions: &[&str]) -> Result<Vec<Vec<String>>> {
    if kb.is_empty() {
        return Err(Error::Contract("baseline against an empty KB".into()));
    }
    Ok(mentions
        .iter()
        .map(|m| {
            let d: Vec<f64> = kb.texts().map(|t| edit_distance(m, t) as f64).collect();
            vec![kb.term(best_by(kb, &d, false)).code.clone()]
        })
        .collect())
}

/// Most frequent implication class in `train`, ties to the smaller class.
pub fn majority_class(train: &[MentionRecord]) -> Result<ImplicationLabel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("majority class of an empty corpus".into()));
    }
    let mut counts = [0usize; 3];
    for r in train {
        counts[ImplicationLabel::from_count(r.codes.len())?.class_index()] += 1;
    }
    let best = (0..3).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    ImplicationLabel::from_class_index(best)
}

/// One more than the number of `+` separators.
pub fn delimiter_class(mention: &str) -> ImplicationLabel {
    let n = 1 + mention.matches('+').count();
    ImplicationLabel::from_count(n).expect("count is at least 1")
}
