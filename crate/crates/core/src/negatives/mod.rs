//! Negative terminology assignment for triplet training: random, tf-idf,
//! tree-coding, keyword-replacement and online hard-negative mining.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{match_keywords, KeywordSpan, KeywordVocab, KnowledgeBase, MentionRecord, TfidfModel};
use crate::error::{Error, Result};
use crate::kernel::graph::euclidean_slices;
use crate::kernel::Matrix;
use crate::mtcg::{embed_corpus, MtcgModel};

pub use crate::corpus::TreeCodeIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeStrategy {
    Random,
    Tfidf,
    Tree,
    Keyword,
    Online,
}

impl NegativeStrategy {
    pub const ALL: [NegativeStrategy; 5] = [Self::Random, Self::Tfidf, Self::Tree, Self::Keyword, Self::Online];
}

impl fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Tfidf => "tfidf",
            Self::Tree => "tree",
            Self::Keyword => "keyword",
            Self::Online => "online",
        })
    }
}

impl FromStr for NegativeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Validation(format!("unknown negative strategy {s:?}")))
    }
}

/// Negatives for one mention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeRow {
    pub mention_id: usize,
    pub negatives: Vec<String>,
    /// Fewer than k_n legal negatives existed.
    #[serde(default)]
    pub kb_limited: bool,
    /// The strategy's own pool fell short and random negatives were added.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeAssignment {
    pub k_n: usize,
    pub rows: Vec<NegativeRow>,
}

impl NegativeAssignment {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks row count, list lengths, and gold exclusion against `records`.
    pub fn check(&self, records: &[MentionRecord]) -> Result<()> {
        if self.rows.len() != records.len() {
            return Err(Error::Contract(format!(
                "negative assignment has {} rows for {} mentions",
                self.rows.len(),
                records.len()
            )));
        }
        for (i, (row, rec)) in self.rows.iter().zip(records).enumerate() {
            if row.mention_id != i {
                return Err(Error::Contract(format!("row {i} is for mention {}", row.mention_id)));
            }
            if row.negatives.len() != self.k_n && !row.kb_limited {
                return Err(Error::Contract(format!(
                    "mention {i} has {} negatives, expected {}",
                    row.negatives.len(),
                    self.k_n
                )));
            }
            if let Some(g) = row.negatives.iter().find(|c| rec.is_gold(c)) {
                return Err(Error::Contract(format!("mention {i} is assigned its own gold {g} as a negative")));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, k_n: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { k_n, rows })
    }
}

fn check_k(k_n: usize) -> Result<()> {
    if k_n == 0 {
        return Err(Error::Contract("k_n must be at least 1".into()));
    }
    Ok(())
}

fn gold_indices(kb: &KnowledgeBase, rec: &MentionRecord) -> Result<HashSet<usize>> {
    rec.codes
        .iter()
        .map(|c| {
            kb.index_of(c)
                .ok_or_else(|| Error::Validation(format!("gold code {c} not in KB")))
        })
        .collect()
}

/// KB indices sorted by code.
fn code_order(kb: &KnowledgeBase) -> Vec<usize> {
    let mut order: Vec<usize> = (0..kb.len()).collect();
    order.sort_by(|&a, &b| kb.term(a).code.cmp(&kb.term(b).code));
    order
}

/// Appends random legal negatives until `chosen` holds `k_n` entries or
/// the KB runs out.
fn top_up(kb: &KnowledgeBase, gold: &HashSet<usize>, chosen: &mut Vec<usize>, k_n: usize, rng: &mut ChaCha8Rng) {
    if chosen.len() >= k_n {
        return;
    }
    let taken: HashSet<usize> = chosen.iter().copied().collect();
    let rest: Vec<usize> = (0..kb.len()).filter(|i| !gold.contains(i) && !taken.contains(i)).collect();
    chosen.extend(rest.choose_multiple(rng, k_n - chosen.len()).copied());
}

fn row(kb: &KnowledgeBase, mention_id: usize, chosen: &[usize], k_n: usize, fallback: bool) -> NegativeRow {
    NegativeRow {
        mention_id,
        negatives: chosen.iter().map(|&i| kb.term(i).code.clone()).collect(),
        kb_limited: chosen.len() < k_n,
        fallback,
    }
}

/// Uniform sample without replacement from the non-gold terminologies.
pub fn sample_random(kb: &KnowledgeBase, records: &[MentionRecord], k_n: usize, seed: u64) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(records.len());
    for (id, rec) in records.iter().enumerate() {
        let gold = gold_indices(kb, rec)?;
        let mut chosen = Vec::with_capacity(k_n);
        top_up(kb, &gold, &mut chosen, k_n, &mut rng);
        rows.push(row(kb, id, &chosen, k_n, false));
    }
    Ok(NegativeAssignment { k_n, rows })
}

/// The `k_n` non-gold terminologies most tf-idf-similar to each mention,
/// ties by ascending code.
pub fn sample_tfidf(
    model: &TfidfModel,
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    k_n: usize,
) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    if model.document_count() != kb.len() {
        return Err(Error::Contract("tf-idf model was fitted on a different KB".into()));
    }
    let by_code = code_order(kb);
    let mut rows = Vec::with_capacity(records.len());
    for (id, rec) in records.iter().enumerate() {
        let gold = gold_indices(kb, rec)?;
        let sims = model.similarities(&rec.mention);
        let mut order: Vec<usize> = by_code.iter().copied().filter(|i| !gold.contains(i)).collect();
        // Stable sort keeps ascending-code order among equal similarities.
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
        order.truncate(k_n);
        rows.push(row(kb, id, &order, k_n, false));
    }
    Ok(NegativeAssignment { k_n, rows })
}

/// Samples from terminologies sharing a category prefix with any gold,
/// topping up at random when that pool is too small.
pub fn sample_tree_coding(
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    k_n: usize,
    seed: u64,
) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = kb.tree();
    let mut rows = Vec::with_capacity(records.len());
    for (id, rec) in records.iter().enumerate() {
        let gold = gold_indices(kb, rec)?;
        let categories: BTreeSet<&str> = gold.iter().map(|&g| kb.term(g).category()).collect();
        let pool: Vec<usize> = categories
            .iter()
            .flat_map(|c| tree.codes(c))
            .map(|code| kb.index_of(code).expect("tree index matches KB"))
            .filter(|i| !gold.contains(i))
            .collect();
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, k_n.min(pool.len())).copied().collect();
        let fallback = chosen.len() < k_n;
        top_up(kb, &gold, &mut chosen, k_n, &mut rng);
        rows.push(row(kb, id, &chosen, k_n, fallback));
    }
    Ok(NegativeAssignment { k_n, rows })
}

/// Every text obtained by replacing one matched keyword of `text` with a
/// different keyword of the same kind, with the replaced span.
pub fn keyword_variants(text: &str, vocab: &KeywordVocab) -> Vec<(String, KeywordSpan)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for span in match_keywords(text, vocab) {
        let original: String = chars[span.start..span.end].iter().collect();
        let prefix: String = chars[..span.start].iter().collect();
        let suffix: String = chars[span.end..].iter().collect();
        for term in vocab.terms(span.kind) {
            if term != original {
                out.push((format!("{prefix}{term}{suffix}"), span));
            }
        }
    }
    out
}

/// Negatives built by swapping a site or type keyword of a gold
/// terminology for another keyword of the same kind, kept only when the
/// result is itself a KB terminology.
pub fn sample_keyword_replace(
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    vocab: &KeywordVocab,
    k_n: usize,
    seed: u64,
) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_text: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in kb.terms().iter().enumerate() {
        by_text.entry(t.text.as_str()).or_default().push(i);
    }
    let mut rows = Vec::with_capacity(records.len());
    for (id, rec) in records.iter().enumerate() {
        let gold = gold_indices(kb, rec)?;
        let mut pool = Vec::new();
        let mut seen = HashSet::new();
        for code in &rec.codes {
            let text = &kb.get(code).expect("gold checked").text;
            for (variant, _) in keyword_variants(text, vocab) {
                for &i in by_text.get(variant.as_str()).map_or(&[][..], Vec::as_slice) {
                    if !gold.contains(&i) && seen.insert(i) {
                        pool.push(i);
                    }
                }
            }
        }
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, k_n.min(pool.len())).copied().collect();
        let fallback = chosen.len() < k_n;
        top_up(kb, &gold, &mut chosen, k_n, &mut rng);
        rows.push(row(kb, id, &chosen, k_n, fallback));
    }
    Ok(NegativeAssignment { k_n, rows })
}

/// For each mention row of `mentions`, the `k_n` nearest non-gold KB rows
/// by Euclidean distance, ties by ascending code.
pub fn mine_hard_negatives(
    mentions: &Matrix,
    kb_embeddings: &Matrix,
    kb_codes: &[String],
    records: &[MentionRecord],
    k_n: usize,
) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    if mentions.rows() != records.len() {
        return Err(Error::dim("mine_hard_negatives mentions", records.len(), mentions.rows()));
    }
    if kb_embeddings.rows() != kb_codes.len() {
        return Err(Error::dim("mine_hard_negatives KB", kb_codes.len(), kb_embeddings.rows()));
    }
    if mentions.cols() != kb_embeddings.cols() {
        return Err(Error::dim("mine_hard_negatives width", kb_embeddings.cols(), mentions.cols()));
    }
    let mut rows = Vec::with_capacity(records.len());
    for (id, rec) in records.iter().enumerate() {
        let q = mentions.row(id);
        let mut order: Vec<(f64, usize)> = (0..kb_codes.len())
            .filter(|&i| !rec.is_gold(&kb_codes[i]))
            .map(|i| (euclidean_slices(q, kb_embeddings.row(i)), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| kb_codes[a.1].cmp(&kb_codes[b.1])));
        let negatives: Vec<String> = order.iter().take(k_n).map(|&(_, i)| kb_codes[i].clone()).collect();
        rows.push(NegativeRow {
            mention_id: id,
            kb_limited: negatives.len() < k_n,
            negatives,
            fallback: false,
        });
    }
    Ok(NegativeAssignment { k_n, rows })
}

/// Online hard-negative mining with the current model: embed mentions and
/// KB, then take each mention's nearest non-gold terminologies.
pub fn sample_online(
    model: &MtcgModel,
    records: &[MentionRecord],
    kb: &KnowledgeBase,
    k_n: usize,
) -> Result<NegativeAssignment> {
    check_k(k_n)?;
    if records.is_empty() {
        return Ok(NegativeAssignment { k_n, rows: Vec::new() });
    }
    let mention_texts: Vec<&str> = records.iter().map(|r| r.mention.as_str()).collect();
    let kb_texts: Vec<&str> = kb.texts().collect();
    let mentions = embed_corpus(model, &mention_texts)?;
    let kb_emb = embed_corpus(model, &kb_texts)?;
    let codes: Vec<String> = kb.terms().iter().map(|t| t.code.clone()).collect();
    mine_hard_negatives(&mentions, &kb_emb, &codes, records, k_n)
}

/// Inputs needed by the non-model strategies.
#[derive(Clone, Copy)]
pub struct SamplingInputs<'a> {
    pub kb: &'a KnowledgeBase,
    pub records: &'a [MentionRecord],
    pub k_n: usize,
    pub seed: u64,
    pub tfidf: Option<&'a TfidfModel>,
    pub keywords: Option<&'a KeywordVocab>,
}

/// Assignment used before (or without) a trained model. Online mining
/// starts from random negatives.
pub fn initial_assignment(strategy: NegativeStrategy, inputs: SamplingInputs<'_>) -> Result<NegativeAssignment> {
    let SamplingInputs {
        kb,
        records,
        k_n,
        seed,
        ..
    } = inputs;
    match strategy {
        NegativeStrategy::Random | NegativeStrategy::Online => sample_random(kb, records, k_n, seed),
        NegativeStrategy::Tree => sample_tree_coding(kb, records, k_n, seed),
        NegativeStrategy::Tfidf => {
            let model = inputs
                .tfidf
                .ok_or_else(|| Error::Contract("tf-idf sampling needs a fitted tf-idf model".into()))?;
            sample_tfidf(model, kb, records, k_n)
        }
        NegativeStrategy::Keyword => {
            let vocab = inputs
                .keywords
                .ok_or_else(|| Error::Contract("keyword sampling needs a keyword vocabulary".into()))?;
            sample_keyword_replace(kb, records, vocab, k_n, seed)
        }
    }
}
