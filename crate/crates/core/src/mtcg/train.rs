use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{mention_loss_graph, pooled_graph, MtcgModel};
use crate::corpus::{ImplicationLabel, KnowledgeBase, MentionRecord};
use crate::encoder::TokenSequence;
use crate::error::{Error, Result};
use crate::kernel::{adamw_step, AdamWConfig, Graph, LrSchedule, OptimizerState, ParamSet, Var};
use crate::negatives::{initial_assignment, sample_online, NegativeAssignment, NegativeStrategy, SamplingInputs};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtcgTrainConfig {
    pub margin: f64,
    pub k_n: usize,
    pub epochs: usize,
    /// Mentions per optimizer step; the step minimizes the mean per-mention loss.
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for MtcgTrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            k_n: 4,
            epochs: 10,
            batch_size: 16,
            optimizer: AdamWConfig::default(),
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

impl MtcgTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Spec(format!("margin must be positive, got {}", self.margin)));
        }
        if self.k_n == 0 || self.batch_size == 0 {
            return Err(Error::Spec("k_n and batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_triplet: f64,
    pub mean_classification: f64,
    pub mentions: usize,
}

/// Seed for the per-epoch shuffle.
pub(crate) fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One optimizer pass over every (mention, gold, negative) triple, in
/// shuffled mini-batches of mentions.
pub fn train_epoch(
    model: &mut MtcgModel,
    records: &[MentionRecord],
    kb: &KnowledgeBase,
    negatives: &NegativeAssignment,
    cfg: &MtcgTrainConfig,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("no training mentions".into()));
    }
    if negatives.k_n != cfg.k_n {
        return Err(Error::Contract(format!(
            "negatives were assigned with k_n = {}, config says {}",
            negatives.k_n, cfg.k_n
        )));
    }
    negatives.check(records)?;

    let mut mention_tokens = Vec::with_capacity(records.len());
    let mut positives = Vec::with_capacity(records.len());
    let mut negs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let lookup = |code: &String| {
        kb.index_of(code)
            .ok_or_else(|| Error::Validation(format!("code {code} not in KB")))
    };
    for (rec, row) in records.iter().zip(&negatives.rows) {
        mention_tokens.push(model.tokenize(&rec.mention)?);
        positives.push(rec.codes.iter().map(lookup).collect::<Result<Vec<_>>>()?);
        negs.push(row.negatives.iter().map(lookup).collect::<Result<Vec<_>>>()?);
        labels.push(ImplicationLabel::from_count(rec.codes.len())?);
    }
    let kb_tokens: Vec<TokenSequence> = kb.texts().map(|t| model.tokenize(t)).collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch)));

    let options = model.config().attention;
    let (mut sum_total, mut sum_triplet, mut sum_class) = (0.0, 0.0, 0.0);
    for batch in order.chunks(cfg.batch_size) {
        let grads = {
            let mut g = Graph::new();
            let vars = model.bind(&mut g);
            let mut cache: HashMap<usize, Var> = HashMap::new();
            let mut pooled_kb = |g: &mut Graph<'_>, i: usize| {
                *cache
                    .entry(i)
                    .or_insert_with(|| pooled_graph(g, &vars, options, &kb_tokens[i]).1)
            };
            let mut totals = Vec::with_capacity(batch.len());
            for &m in batch {
                let pos: Vec<Var> = positives[m].iter().map(|&i| pooled_kb(&mut g, i)).collect();
                let neg: Vec<Var> = negs[m].iter().map(|&i| pooled_kb(&mut g, i)).collect();
                let parts =
                    mention_loss_graph(&mut g, &vars, options, &mention_tokens[m], &pos, &neg, labels[m], cfg.margin);
                sum_total += g.scalar(parts.total);
                sum_triplet += g.scalar(parts.triplet);
                sum_class += g.scalar(parts.classification);
                totals.push(parts.total);
            }
            let stacked = if totals.len() == 1 { totals[0] } else { g.concat_cols(&totals) };
            let s = g.sum(stacked);
            let loss = g.scale(s, 1.0 / batch.len() as f64);
            g.backward(loss)?.into_param_grads(&g)
        };
        let total = cfg.epochs * records.len().div_ceil(cfg.batch_size);
        state.config.lr = cfg.optimizer.lr * cfg.schedule.factor(state.step() as usize, total);
        adamw_step(&mut model.params_mut(), &grads, state)?;
    }
    let n = records.len() as f64;
    Ok(EpochStats {
        epoch,
        mean_loss: sum_total / n,
        mean_triplet: sum_triplet / n,
        mean_classification: sum_class / n,
        mentions: records.len(),
    })
}

/// Per-epoch stats plus the final negative assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct MtcgTrainReport {
    pub epochs: Vec<EpochStats>,
    pub last_negatives: NegativeAssignment,
}

/// Trains for `cfg.epochs` epochs. Online mining re-mines negatives with
/// the current model after every epoch; the other strategies keep their
/// initial assignment. `on_epoch` sees the stats, the updated model and
/// the negatives mined from it.
pub fn train_mtcg(
    model: &mut MtcgModel,
    strategy: NegativeStrategy,
    inputs: SamplingInputs<'_>,
    cfg: &MtcgTrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &MtcgModel, &NegativeAssignment),
) -> Result<MtcgTrainReport> {
    cfg.validate()?;
    if inputs.k_n != cfg.k_n {
        return Err(Error::Contract("sampling k_n differs from training k_n".into()));
    }
    let mut state = OptimizerState::new(model.named_params().into_iter().map(|(_, m)| m), cfg.optimizer);
    let mut negatives = initial_assignment(strategy, inputs)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stats = train_epoch(model, inputs.records, inputs.kb, &negatives, cfg, &mut state, epoch)?;
        log::info!(
            "epoch {epoch}: loss {:.4} (triplet {:.4}, implication {:.4})",
            stats.mean_loss,
            stats.mean_triplet,
            stats.mean_classification
        );
        if strategy == NegativeStrategy::Online {
            negatives = sample_online(model, inputs.records, inputs.kb, cfg.k_n)?;
        }
        on_epoch(&stats, model, &negatives);
        epochs.push(stats);
    }
    Ok(MtcgTrainReport {
        epochs,
        last_negatives: negatives,
    })
}
