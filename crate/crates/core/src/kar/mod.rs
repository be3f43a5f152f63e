//! Keyword-attentive cross-encoder ranker. The `[PS]` and `[PT]` markers
//! attend only to matched procedure-site and procedure-type keywords.

pub mod input;
pub mod model;
pub mod train;

pub use input::{build_input, build_mask, KarInput, PS_POS, PT_POS};
pub use model::{kar_loss, kar_score, kar_score_graph, kar_scores, KarLoss, KarModel, KarVars};
pub use train::{load_pairs, make_training_pairs, save_pairs, train_kar, KarEpochStats, KarTrainConfig, PairConfig, PairExample};
