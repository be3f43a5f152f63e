//! Knowledge base, corpus and keyword file formats, string-similarity
//! baselines, and the synthetic data generator.

pub mod edit;
pub mod kb;
pub mod keywords;
pub mod mentions;
pub mod synthetic;
pub mod tfidf;

pub use edit::edit_distance;
pub use kb::{category_of, KnowledgeBase, Terminology, TreeCodeIndex};
pub use keywords::{match_keywords, KeywordEntry, KeywordKind, KeywordSpan, KeywordVocab};
pub use mentions::{load_corpus, load_mentions, save_corpus, validate_corpus, ImplicationLabel, MentionRecord};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use tfidf::{tfidf_fit, tfidf_similarity, TfidfModel};
