//! Multi-task candidate generator: a bi-encoder trained with triplet loss
//! plus an implication-number head, and exact nearest-neighbour recall.

pub mod model;
pub mod train;

pub use model::{
    embed_and_predict, embed_corpus, embed_text, euclidean, implication_loss, implication_probs, mention_loss_graph,
    pooled_graph, predict_implication, recall_candidates, total_loss, triplet_loss, Candidate, CandidateList, EncoderShape,
    KbIndex, MtcgModel, MtcgVars, PooledTriplet,
};
pub use train::{train_epoch, train_mtcg, EpochStats, MtcgTrainConfig, MtcgTrainReport};
