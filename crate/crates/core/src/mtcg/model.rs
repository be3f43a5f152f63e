use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ImplicationLabel, KnowledgeBase};
use crate::encoder::{encode_graph, mean_pool_graph, tokenize, Encoder, EncoderConfig, EncoderVars, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::kernel::graph::{euclidean_slices, softmax_row};
use crate::kernel::nn::{ffn_graph, FfnVars};
use crate::encoder::persist::{load_model, save_model};
use crate::kernel::store::{load_params, save_params};
use crate::kernel::{AttentionOptions, FfnParams, Graph, Matrix, ParamSet, Var};

pub const IMPLICATION_CLASSES: usize = 3;

/// Architecture of an encoder, minus the vocabulary size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderShape {
    pub layers: usize,
    pub d: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    #[serde(default)]
    pub attention: AttentionOptions,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            layers: 2,
            d: 64,
            heads: 4,
            d_ff: 128,
            max_len: 96,
            attention: AttentionOptions::default(),
        }
    }
}

impl EncoderShape {
    pub fn with_vocab(self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            d: self.d,
            heads: self.heads,
            d_ff: self.d_ff,
            max_len: self.max_len,
            vocab_size,
            attention: self.attention,
        }
    }
}

/// Encoder plus the 3-way implication-number head read from `[CLS]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MtcgModel {
    pub vocab: Vocabulary,
    pub encoder: Encoder,
    pub head: FfnParams,
}

pub struct MtcgVars {
    pub encoder: EncoderVars,
    pub head: FfnVars,
}

impl ParamSet for MtcgModel {
    type Vars = MtcgVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
        self.encoder.visit(&p("encoder"), out);
        self.head.visit(&p("head"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        self.encoder.visit_mut(out);
        self.head.visit_mut(out);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> MtcgVars {
        MtcgVars {
            encoder: self.encoder.vars_from(it),
            head: self.head.vars_from(it),
        }
    }
}

impl MtcgModel {
    pub fn init<R: Rng + ?Sized>(vocab: Vocabulary, shape: EncoderShape, rng: &mut R) -> Result<Self> {
        let config = shape.with_vocab(vocab.len());
        let encoder = Encoder::init(config, rng)?;
        let head = FfnParams::init(config.d, config.d_ff, IMPLICATION_CLASSES, rng);
        Ok(Self { vocab, encoder, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        let tokens = tokenize(text, &self.vocab, true)?;
        self.encoder.check_tokens(&tokens)?;
        Ok(tokens)
    }

    pub fn save(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        save_model(dir, "mtcg", &self.vocab, &self.encoder, &self.head, &self.named_params(), extra)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        load_model(dir, "mtcg", |vocab, encoder, head| Self { vocab, encoder, head })
    }
}

/// Mention, positive and negative pooled vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledTriplet {
    pub mention: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// ‖u − v‖₂.
pub fn euclidean(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim("euclidean", u.len(), v.len()));
    }
    Ok(euclidean_slices(u, v))
}

/// max(0, D(M, P) + margin − D(M, N)).
pub fn triplet_loss(t: &PooledTriplet, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::Contract(format!("triplet margin must be positive, got {margin}")));
    }
    let dp = euclidean(&t.mention, &t.positive)?;
    let dn = euclidean(&t.mention, &t.negative)?;
    Ok((dp + margin - dn).max(0.0))
}

pub fn total_loss(triplet: f64, classification: f64) -> f64 {
    triplet + classification
}

/// Encodes `tokens` and returns (hidden states, mean-pooled row).
pub fn pooled_graph(g: &mut Graph<'_>, vars: &MtcgVars, options: AttentionOptions, tokens: &TokenSequence) -> (Var, Var) {
    let h = encode_graph(g, &vars.encoder, options, tokens, None, None);
    let pooled = mean_pool_graph(g, h, tokens);
    (h, pooled)
}

/// 1×3 implication logits from the `[CLS]` row of `hidden`.
pub fn implication_logits_graph(g: &mut Graph<'_>, vars: &MtcgVars, hidden: Var) -> Var {
    let cls = g.row(hidden, 0);
    ffn_graph(g, cls, &vars.head)
}

/// `max(0, d(m, p) + margin − d(m, n))` as a graph node.
pub fn triplet_graph(g: &mut Graph<'_>, m: Var, p: Var, n: Var, margin: f64) -> Var {
    let dp = g.euclidean(m, p);
    let dn = g.euclidean(m, n);
    let diff = g.sub(dp, dn);
    let shifted = g.add_scalar(diff, margin);
    g.relu(shifted)
}

/// Loss nodes for one mention.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub triplet: Var,
    pub classification: Var,
}

/// One mention's objective: the mean triplet loss over every (gold,
/// negative) pair plus the implication cross-entropy. A mention without
/// negatives contributes a zero triplet term.
pub fn mention_loss_graph(
    g: &mut Graph<'_>,
    vars: &MtcgVars,
    options: AttentionOptions,
    mention: &TokenSequence,
    positives: &[Var],
    negatives: &[Var],
    label: ImplicationLabel,
    margin: f64,
) -> LossParts {
    let (h, vm) = pooled_graph(g, vars, options, mention);
    let logits = implication_logits_graph(g, vars, h);
    let classification = g.cross_entropy(logits, label.class_index());
    let mut terms = Vec::with_capacity(positives.len() * negatives.len());
    for &p in positives {
        for &n in negatives {
            terms.push(triplet_graph(g, vm, p, n, margin));
        }
    }
    let triplet = if terms.is_empty() {
        g.constant(Matrix::scalar(0.0))
    } else {
        let stacked = if terms.len() == 1 { terms[0] } else { g.concat_cols(&terms) };
        let s = g.sum(stacked);
        g.scale(s, 1.0 / terms.len() as f64)
    };
    let total = g.add(triplet, classification);
    LossParts {
        total,
        triplet,
        classification,
    }
}

/// Implication cross-entropy for a mention.
pub fn implication_loss(model: &MtcgModel, tokens: &TokenSequence, label: ImplicationLabel) -> Result<f64> {
    model.encoder.check_tokens(tokens)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let h = encode_graph(&mut g, &vars.encoder, model.config().attention, tokens, None, None);
    let logits = implication_logits_graph(&mut g, &vars, h);
    let loss = g.cross_entropy(logits, label.class_index());
    Ok(g.scalar(loss))
}

pub fn implication_probs(model: &MtcgModel, tokens: &TokenSequence) -> Result<Vec<f64>> {
    model.encoder.check_tokens(tokens)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let h = encode_graph(&mut g, &vars.encoder, model.config().attention, tokens, None, None);
    let logits = implication_logits_graph(&mut g, &vars, h);
    Ok(softmax_row(g.value(logits).as_slice()))
}

/// Argmax of the implication head; ties go to the smaller class.
pub fn predict_implication(model: &MtcgModel, tokens: &TokenSequence) -> Result<ImplicationLabel> {
    argmax_class(&implication_probs(model, tokens)?)
}

fn argmax_class(probs: &[f64]) -> Result<ImplicationLabel> {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    ImplicationLabel::from_class_index(best)
}

/// Mean-pooled vector and implication class from one encode pass.
pub fn embed_and_predict(model: &MtcgModel, text: &str) -> Result<(Vec<f64>, ImplicationLabel)> {
    let tokens = model.tokenize(text)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let (h, pooled) = pooled_graph(&mut g, &vars, model.config().attention, &tokens);
    let logits = implication_logits_graph(&mut g, &vars, h);
    let label = argmax_class(&softmax_row(g.value(logits).as_slice()))?;
    Ok((g.value(pooled).as_slice().to_vec(), label))
}

pub fn embed_text(model: &MtcgModel, text: &str) -> Result<Vec<f64>> {
    let tokens = model.tokenize(text)?;
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let (_, pooled) = pooled_graph(&mut g, &vars, model.config().attention, &tokens);
    Ok(g.value(pooled).as_slice().to_vec())
}

/// Mean-pooled vectors, row i for `texts[i]`.
pub fn embed_corpus<S: AsRef<str> + Sync>(model: &MtcgModel, texts: &[S]) -> Result<Matrix> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("embed_corpus needs at least one text".into()));
    }
    let rows: Vec<Vec<f64>> = texts
        .par_iter()
        .map(|t| embed_text(model, t.as_ref()))
        .collect::<Result<_>>()?;
    let d = model.config().d;
    let mut data = Vec::with_capacity(rows.len() * d);
    for r in rows {
        data.extend(r);
    }
    Matrix::new(texts.len(), d, data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: String,
    pub distance: f64,
}

/// Recalled candidates in ascending distance, ties by ascending code.
pub type CandidateList = Vec<Candidate>;

/// Exact scan for the `k_c` nearest rows of `kb` to `query`.
pub fn recall_candidates(query: &[f64], kb: &Matrix, codes: &[String], k_c: usize) -> Result<CandidateList> {
    if codes.len() != kb.rows() {
        return Err(Error::dim("recall_candidates codes", kb.rows(), codes.len()));
    }
    if query.len() != kb.cols() {
        return Err(Error::dim("recall_candidates query", kb.cols(), query.len()));
    }
    if kb.rows() == 0 {
        return Err(Error::Contract("recall against an empty KB".into()));
    }
    let k = if k_c > kb.rows() {
        log::warn!("k_c = {k_c} exceeds KB size {}; clamping", kb.rows());
        kb.rows()
    } else {
        k_c
    };
    let mut all: Vec<(f64, usize)> = (0..kb.rows()).map(|i| (euclidean_slices(query, kb.row(i)), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| codes[a.1].cmp(&codes[b.1])));
    Ok(all
        .into_iter()
        .take(k)
        .map(|(distance, i)| Candidate {
            code: codes[i].clone(),
            distance,
        })
        .collect())
}

/// Immutable snapshot of KB embeddings tied to a KB content hash.
#[derive(Clone, Debug, PartialEq)]
pub struct KbIndex {
    pub codes: Vec<String>,
    pub embeddings: Matrix,
    pub kb_hash: String,
}

impl KbIndex {
    pub fn build(model: &MtcgModel, kb: &KnowledgeBase) -> Result<Self> {
        if kb.is_empty() {
            return Err(Error::Contract("cannot index an empty KB".into()));
        }
        let texts: Vec<&str> = kb.texts().collect();
        Ok(Self {
            codes: kb.terms().iter().map(|t| t.code.clone()).collect(),
            embeddings: embed_corpus(model, &texts)?,
            kb_hash: kb.content_hash(),
        })
    }

    pub fn recall(&self, query: &[f64], k_c: usize) -> Result<CandidateList> {
        recall_candidates(query, &self.embeddings, &self.codes, k_c)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = serde_json::json!({ "kb_hash": self.kb_hash, "codes": self.codes });
        save_params(dir, &[("embeddings".to_string(), &self.embeddings)], meta)
    }

    /// Loads a snapshot, rejecting it when `kb` no longer matches its hash.
    pub fn load(dir: &Path, kb: &KnowledgeBase) -> Result<Self> {
        let (mut params, meta) = load_params(dir)?;
        let hash = meta["kb_hash"].as_str().unwrap_or_default().to_string();
        if hash != kb.content_hash() {
            return Err(Error::Stale(format!(
                "KB embeddings in {} were built from a different KB",
                dir.display()
            )));
        }
        let codes: Vec<String> = serde_json::from_value(meta["codes"].clone())?;
        let (_, embeddings) = params.pop().ok_or_else(|| Error::Validation("missing embeddings".into()))?;
        if embeddings.rows() != codes.len() {
            return Err(Error::dim("KbIndex rows", codes.len(), embeddings.rows()));
        }
        Ok(Self {
            codes,
            embeddings,
            kb_hash: hash,
        })
    }
}
