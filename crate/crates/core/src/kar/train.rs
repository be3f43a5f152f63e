use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::{build_mask, KarInput};
use super::model::{kar_score_graph, KarModel};
use crate::corpus::{KnowledgeBase, MentionRecord};
use crate::error::{Error, Result};
use crate::kernel::{adamw_step, AdamWConfig, BinaryMask, LrSchedule, Graph, OptimizerState, ParamSet};
use crate::mtcg::{embed_corpus, KbIndex, MtcgModel};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub mention_id: usize,
    pub code: String,
    pub label: u8,
}

pub fn save_pairs(pairs: &[PairExample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Candidates recalled per mention.
    pub k: usize,
    /// Add a positive pair for every gold the recall missed.
    pub append_missed_golds: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            k: 10,
            append_missed_golds: true,
        }
    }
}

/// One pair per recalled candidate, labelled by gold membership, plus
/// (optionally) a positive pair for each gold outside the recalled set.
pub fn make_training_pairs(
    mtcg: &MtcgModel,
    index: &KbIndex,
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    cfg: PairConfig,
) -> Result<Vec<PairExample>> {
    if index.kb_hash != kb.content_hash() {
        return Err(Error::Stale("KB index does not match the KB".into()));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<&str> = records.iter().map(|r| r.mention.as_str()).collect();
    let mentions = embed_corpus(mtcg, &texts)?;
    let mut pairs = Vec::new();
    for (id, rec) in records.iter().enumerate() {
        let recalled = index.recall(mentions.row(id), cfg.k)?;
        let seen: HashSet<&str> = recalled.iter().map(|c| c.code.as_str()).collect();
        for c in &recalled {
            pairs.push(PairExample {
                mention_id: id,
                code: c.code.clone(),
                label: rec.is_gold(&c.code) as u8,
            });
        }
        if cfg.append_missed_golds {
            for code in rec.codes.iter().filter(|c| !seen.contains(c.as_str())) {
                pairs.push(PairExample {
                    mention_id: id,
                    code: code.clone(),
                    label: 1,
                });
            }
        }
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KarTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for KarTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            schedule: LrSchedule::Linear,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KarEpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pairs: usize,
    /// Pairs whose prediction had to be clamped.
    pub clamped: usize,
}

/// Minimizes the mean pointwise loss over shuffled mini-batches of pairs.
/// `on_epoch` sees the stats and the updated model.
pub fn train_kar(
    model: &mut KarModel,
    pairs: &[PairExample],
    records: &[MentionRecord],
    kb: &KnowledgeBase,
    cfg: &KarTrainConfig,
    mut on_epoch: impl FnMut(&KarEpochStats, &KarModel),
) -> Result<Vec<KarEpochStats>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no training pairs".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Spec("batch_size must be at least 1".into()));
    }
    let mut inputs: Vec<(KarInput, BinaryMask, f64)> = Vec::with_capacity(pairs.len());
    for p in pairs {
        let rec = records
            .get(p.mention_id)
            .ok_or_else(|| Error::Contract(format!("pair refers to missing mention {}", p.mention_id)))?;
        let term = kb
            .get(&p.code)
            .ok_or_else(|| Error::Validation(format!("pair code {} not in KB", p.code)))?;
        if p.label != rec.is_gold(&p.code) as u8 {
            return Err(Error::Contract(format!(
                "pair ({}, {}) has label {} but gold membership says otherwise",
                p.mention_id, p.code, p.label
            )));
        }
        let input = model.input(&rec.mention, &term.text)?;
        let mask = build_mask(&input);
        inputs.push((input, mask, p.label as f64));
    }

    let mut state = OptimizerState::new(model.named_params().into_iter().map(|(_, m)| m), cfg.optimizer);
    let mut stats = Vec::with_capacity(cfg.epochs);
    let total_steps = cfg.epochs * inputs.len().div_ceil(cfg.batch_size);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::mtcg::train::epoch_seed(cfg.seed, epoch)));
        let (mut total, mut clamped) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let grads = {
                let mut g = Graph::new();
                let vars = model.bind(&mut g);
                let mut losses = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (input, mask, y) = &inputs[i];
                    let p = kar_score_graph(&mut g, &vars, model, input, mask);
                    let pv = g.scalar(p);
                    if pv <= 0.0 || pv >= 1.0 {
                        clamped += 1;
                    }
                    let loss = g.bce(p, *y);
                    total += g.scalar(loss);
                    losses.push(loss);
                }
                let stacked = if losses.len() == 1 { losses[0] } else { g.concat_cols(&losses) };
                let s = g.sum(stacked);
                let mean = g.scale(s, 1.0 / batch.len() as f64);
                g.backward(mean)?.into_param_grads(&g)
            };
            state.config.lr = cfg.optimizer.lr * cfg.schedule.factor(step, total_steps);
            step += 1;
            adamw_step(&mut model.params_mut(), &grads, &mut state)?;
        }
        let s = KarEpochStats {
            epoch,
            mean_loss: total / inputs.len() as f64,
            pairs: inputs.len(),
            clamped,
        };
        log::info!("kar epoch {epoch}: loss {:.4}", s.mean_loss);
        on_epoch(&s, model);
        stats.push(s);
    }
    Ok(stats)
}
