//! End-to-end orchestration: run configuration, training of both models,
//! evaluation and cross-validation.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tfidf_fit, KeywordVocab, KnowledgeBase, MentionRecord};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::eval::{accuracy, implication_accuracy, kfold, recall_at_k, Metrics, RecallAtK};
use crate::fusion::{FusionConfig, FusionMode, NormalizationResult, Pipeline};
use crate::kar::{make_training_pairs, train_kar, KarEpochStats, KarModel, KarTrainConfig, PairConfig, PairExample};
use crate::mtcg::{train_mtcg, EncoderShape, EpochStats, KbIndex, MtcgModel, MtcgTrainConfig, MtcgTrainReport};
use crate::negatives::{NegativeAssignment, NegativeStrategy, SamplingInputs};

const KAR_SEED_SALT: u64 = 0x4b41_5200;

/// Every hyperparameter of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder: EncoderShape,
    pub kar_encoder: EncoderShape,
    pub negative_strategy: NegativeStrategy,
    pub mtcg: MtcgTrainConfig,
    pub pairs: PairConfig,
    pub kar: KarTrainConfig,
    pub fusion: FusionConfig,
    pub cv_folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            encoder: EncoderShape::default(),
            kar_encoder: EncoderShape::default(),
            negative_strategy: NegativeStrategy::Online,
            mtcg: MtcgTrainConfig::default(),
            pairs: PairConfig::default(),
            kar: KarTrainConfig::default(),
            fusion: FusionConfig::default(),
            cv_folds: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Copy with `seed` propagated to every stochastic stage.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.mtcg.seed = seed;
        c.kar.seed = seed ^ KAR_SEED_SALT;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.mtcg.validate()?;
        self.fusion.validate()?;
        if self.cv_folds < 2 {
            return Err(Error::Spec("cv_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Character vocabulary over KB texts and training mentions.
pub fn build_vocab(kb: &KnowledgeBase, train: &[MentionRecord]) -> Vocabulary {
    Vocabulary::from_texts(kb.texts().chain(train.iter().map(|r| r.mention.as_str())))
}

/// Initializes and trains the candidate generator.
pub fn train_mtcg_stage(
    cfg: &RunConfig,
    kb: &KnowledgeBase,
    train: &[MentionRecord],
    keywords: Option<&KeywordVocab>,
    on_epoch: impl FnMut(&EpochStats, &MtcgModel, &NegativeAssignment),
) -> Result<(MtcgModel, MtcgTrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mtcg.seed);
    let mut model = MtcgModel::init(build_vocab(kb, train), cfg.encoder, &mut rng)?;
    let tfidf = match cfg.negative_strategy {
        NegativeStrategy::Tfidf => Some(tfidf_fit(kb)?),
        _ => None,
    };
    let inputs = SamplingInputs {
        kb,
        records: train,
        k_n: cfg.mtcg.k_n,
        seed: cfg.mtcg.seed,
        tfidf: tfidf.as_ref(),
        keywords,
    };
    let report = train_mtcg(&mut model, cfg.negative_strategy, inputs, &cfg.mtcg, on_epoch)?;
    Ok((model, report))
}

/// Builds training pairs from the generator's recall and trains the ranker.
pub fn train_kar_stage(
    cfg: &RunConfig,
    mtcg: &MtcgModel,
    index: &KbIndex,
    kb: &KnowledgeBase,
    train: &[MentionRecord],
    keywords: &KeywordVocab,
    on_epoch: impl FnMut(&KarEpochStats, &KarModel),
) -> Result<(KarModel, Vec<PairExample>, Vec<KarEpochStats>)> {
    let pairs = make_training_pairs(mtcg, index, kb, train, cfg.pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.kar.seed);
    let mut kar = KarModel::init(build_vocab(kb, train), keywords.clone(), cfg.kar_encoder, &mut rng)?;
    let stats = train_kar(&mut kar, &pairs, train, kb, &cfg.kar, on_epoch)?;
    Ok((kar, pairs, stats))
}

pub struct TrainedModels {
    pub mtcg: MtcgModel,
    pub kar: KarModel,
    pub index: KbIndex,
}

impl TrainedModels {
    pub fn pipeline<'a>(&'a self, kb: &'a KnowledgeBase, config: FusionConfig) -> Pipeline<'a> {
        Pipeline {
            mtcg: &self.mtcg,
            kar: &self.kar,
            kb,
            index: &self.index,
            config,
        }
    }
}

pub fn train_models(
    cfg: &RunConfig,
    kb: &KnowledgeBase,
    train: &[MentionRecord],
    keywords: &KeywordVocab,
) -> Result<TrainedModels> {
    cfg.validate()?;
    let (mtcg, _) = train_mtcg_stage(cfg, kb, train, Some(keywords), |_, _, _| {})?;
    let index = KbIndex::build(&mtcg, kb)?;
    let (kar, _, _) = train_kar_stage(cfg, &mtcg, &index, kb, train, keywords, |_, _| {})?;
    Ok(TrainedModels { mtcg, kar, index })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    /// Absent when some result carries fewer candidates than the largest k.
    pub recall: Option<RecallAtK>,
    pub implication_accuracy: f64,
}

/// Recall cut-offs reported by default, limited to the candidate count.
pub fn default_ks(k_c: usize) -> Vec<usize> {
    [1, 2, 5, 10].into_iter().filter(|&k| k <= k_c).collect()
}

/// Scores pipeline results: exact-set accuracy, recall@k over the
/// candidate lists in recall order, and implication accuracy.
pub fn evaluate_results(results: &[NormalizationResult], gold: &[MentionRecord], ks: &[usize]) -> Result<EvalReport> {
    let by_distance: Vec<Vec<&str>> = results
        .iter()
        .map(|r| {
            let mut c: Vec<_> = r.candidates.iter().collect();
            c.sort_by(|a, b| a.d.total_cmp(&b.d).then_with(|| a.code.cmp(&b.code)));
            c.into_iter().map(|c| c.code.as_str()).collect()
        })
        .collect();
    let implications: Vec<_> = results.iter().map(|r| r.implication).collect();
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let recall = if by_distance.iter().all(|c| c.len() >= max_k) {
        Some(recall_at_k(&by_distance, gold, ks)?)
    } else {
        log::warn!("candidate lists shorter than k = {max_k}; recall@k skipped");
        None
    };
    Ok(EvalReport {
        metrics: accuracy(results, gold)?,
        recall,
        implication_accuracy: implication_accuracy(&implications, gold)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<Metrics>,
    pub uni: MeanStd,
    pub multi: MeanStd,
    pub total: MeanStd,
}

/// k-fold cross-validation over `corpus`: both models are retrained on each
/// fold's training part and evaluated on the held-out fold.
pub fn cross_validate(
    cfg: &RunConfig,
    kb: &KnowledgeBase,
    corpus: &[MentionRecord],
    keywords: &KeywordVocab,
) -> Result<CvReport> {
    cfg.validate()?;
    let split = kfold(corpus.len(), cfg.cv_folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(cfg.cv_folds);
    for (i, (train_ids, val_ids)) in split.splits().enumerate() {
        let pick = |ids: &[usize]| ids.iter().map(|&j| corpus[j].clone()).collect::<Vec<_>>();
        let (train, val) = (pick(&train_ids), pick(&val_ids));
        let models = train_models(cfg, kb, &train, keywords)?;
        let mentions: Vec<&str> = val.iter().map(|r| r.mention.as_str()).collect();
        let results = models.pipeline(kb, cfg.fusion).normalize_all(&mentions)?;
        let m = accuracy(&results, &val)?;
        log::info!("fold {i}: total {:.2}", m.total);
        folds.push(m);
    }
    let col = |f: fn(&Metrics) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
    Ok(CvReport {
        uni: col(|m| m.uni),
        multi: col(|m| m.multi),
        total: col(|m| m.total),
        folds,
    })
}

/// Normalizes `mentions` under each fusion mode, for ablations.
pub fn normalize_modes<S: AsRef<str> + Sync>(
    models: &TrainedModels,
    kb: &KnowledgeBase,
    base: FusionConfig,
    modes: &[FusionMode],
    mentions: &[S],
) -> Result<Vec<Vec<NormalizationResult>>> {
    modes
        .iter()
        .map(|&mode| models.pipeline(kb, FusionConfig { mode, ..base }).normalize_all(mentions))
        .collect()
}
