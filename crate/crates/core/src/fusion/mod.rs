//! Score fusion and output selection: recall distances become similarity
//! scores, are averaged with ranker scores, and the predicted implication
//! number decides how many codes are returned.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ImplicationLabel, KnowledgeBase};
use crate::error::{Error, Result};
use crate::kar::{kar_scores, KarModel};
use crate::mtcg::{embed_and_predict, Candidate, KbIndex, MtcgModel};

const DEGENERATE_SUM: f64 = 1e-12;

/// `1 − dᵢ / Σⱼ dⱼ`; all ones when the distances sum to (almost) zero.
pub fn candidate_scores(distances: &[f64]) -> Result<Vec<f64>> {
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::Contract(format!("recall distance {d} is negative or not finite")));
    }
    let total: f64 = distances.iter().sum();
    if total < DEGENERATE_SUM {
        return Ok(vec![1.0; distances.len()]);
    }
    Ok(distances.iter().map(|d| 1.0 - d / total).collect())
}

pub fn fuse(sc: f64, sr: f64) -> f64 {
    (sc + sr) / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub code: String,
    pub d: f64,
    pub sc: f64,
    pub sr: f64,
    pub s: f64,
}

/// Sorts by fused score descending, ties by ascending code.
pub fn sort_scored(list: &mut [ScoredCandidate]) {
    list.sort_by(|a, b| b.s.total_cmp(&a.s).then_with(|| a.code.cmp(&b.code)));
}

/// Selected codes and whether fewer than the requested number existed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub codes: Vec<String>,
    pub short: bool,
}

/// Top `x` candidates for x ∈ {1, 2}; for the "3 or more" class the top
/// three plus every later candidate scoring above `theta`.
pub fn select(candidates: &[ScoredCandidate], x: ImplicationLabel, theta: f64) -> Selection {
    let want = x.get();
    let short = candidates.len() < want;
    let mut codes: Vec<String> = candidates.iter().take(want).map(|c| c.code.clone()).collect();
    if x == ImplicationLabel::MANY {
        codes.extend(candidates.iter().skip(want).filter(|c| c.s > theta).map(|c| c.code.clone()));
    }
    Selection { codes, short }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Average of recall and ranker scores.
    #[default]
    Fused,
    /// Recall distances only; the top `x` candidates are returned.
    RecallOnly,
    /// Ranker scores only.
    RankOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub k_c: usize,
    pub theta: f64,
    #[serde(default)]
    pub mode: FusionMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            k_c: 10,
            theta: 0.8,
            mode: FusionMode::Fused,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_c < 3 {
            return Err(Error::Spec(format!("k_c must be at least 3, got {}", self.k_c)));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::Spec(format!("theta must be non-negative, got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub mention_id: usize,
    pub mention: String,
    pub implication: ImplicationLabel,
    pub selected: Vec<String>,
    /// Fewer candidates than the predicted implication number.
    #[serde(default)]
    pub short: bool,
    pub candidates: Vec<ScoredCandidate>,
}

/// Scores recalled candidates and ranks them under `mode`.
pub fn score_candidates(
    recalled: &[Candidate],
    ranker: &[f64],
    mode: FusionMode,
) -> Result<Vec<ScoredCandidate>> {
    if recalled.len() != ranker.len() {
        return Err(Error::dim("score_candidates", recalled.len(), ranker.len()));
    }
    let distances: Vec<f64> = recalled.iter().map(|c| c.distance).collect();
    let sc = candidate_scores(&distances)?;
    let mut out: Vec<ScoredCandidate> = recalled
        .iter()
        .zip(sc)
        .zip(ranker)
        .map(|((c, sc), &sr)| ScoredCandidate {
            code: c.code.clone(),
            d: c.distance,
            sc,
            sr,
            s: fuse(sc, sr),
        })
        .collect();
    match mode {
        FusionMode::Fused => sort_scored(&mut out),
        FusionMode::RankOnly => {
            out.sort_by(|a, b| b.sr.total_cmp(&a.sr).then_with(|| a.code.cmp(&b.code)))
        }
        // Recall order is already ascending distance, ties by code.
        FusionMode::RecallOnly => {}
    }
    Ok(out)
}

/// The models and KB snapshot needed at inference time.
pub struct Pipeline<'a> {
    pub mtcg: &'a MtcgModel,
    pub kar: &'a KarModel,
    pub kb: &'a KnowledgeBase,
    pub index: &'a KbIndex,
    pub config: FusionConfig,
}

impl Pipeline<'_> {
    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        if self.kb.is_empty() {
            return Err(Error::Contract("normalization against an empty KB".into()));
        }
        if self.index.kb_hash != self.kb.content_hash() {
            return Err(Error::Stale("KB index does not match the KB".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, mention_id: usize, mention: &str) -> Result<NormalizationResult> {
        self.check()?;
        let (query, x) = embed_and_predict(self.mtcg, mention)?;
        let recalled = self.index.recall(&query, self.config.k_c)?;
        let ranker = if self.config.mode == FusionMode::RecallOnly {
            vec![0.5; recalled.len()]
        } else {
            let texts: Vec<&str> = recalled
                .iter()
                .map(|c| {
                    self.kb
                        .get(&c.code)
                        .map(|t| t.text.as_str())
                        .ok_or_else(|| Error::Stale(format!("indexed code {} missing from KB", c.code)))
                })
                .collect::<Result<_>>()?;
            kar_scores(self.kar, mention, &texts)?
        };
        let candidates = score_candidates(&recalled, &ranker, self.config.mode)?;
        let sel = if self.config.mode == FusionMode::RecallOnly {
            let want = x.get();
            Selection {
                codes: candidates.iter().take(want).map(|c| c.code.clone()).collect(),
                short: candidates.len() < want,
            }
        } else {
            select(&candidates, x, self.config.theta)
        };
        if sel.short {
            log::warn!("mention {mention_id}: only {} candidates for class {}", candidates.len(), x.get());
        }
        Ok(NormalizationResult {
            mention_id,
            mention: mention.to_string(),
            implication: x,
            selected: sel.codes,
            short: sel.short,
            candidates,
        })
    }

    /// Normalizes every mention, in parallel, preserving order.
    pub fn normalize_all<S: AsRef<str> + Sync>(&self, mentions: &[S]) -> Result<Vec<NormalizationResult>> {
        self.check()?;
        mentions
            .par_iter()
            .enumerate()
            .map(|(i, m)| self.normalize(i, m.as_ref()))
            .collect()
    }
}

pub fn results_to_jsonl(results: &[NormalizationResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_results(results: &[NormalizationResult], path: &Path) -> Result<()> {
    fs::write(path, results_to_jsonl(results)?).map_err(|e| Error::io(path, e))
}
