//! Accuracy and recall metrics, baselines, fold splitting and throughput
//! measurement.

pub mod baselines;
pub mod bench;
pub mod folds;
pub mod metrics;

pub use baselines::{delimiter_class, edit_distance_top1, majority_class, tfidf_top1};
pub use bench::{bench_throughput, BenchReport};
pub use folds::{kfold, FoldSplit};
pub use metrics::{accuracy, accuracy_of, implication_accuracy, recall_at_k, Metrics, RecallAtK};
