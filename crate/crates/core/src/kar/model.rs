use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::input::{build_input, build_mask, KarInput, PS_POS, PT_POS};
use crate::corpus::KeywordVocab;
use crate::encoder::persist::{load_model, save_model};
use crate::encoder::{encode_graph, Encoder, EncoderConfig, EncoderVars, Vocabulary};
use crate::error::{Error, Result};
use crate::kernel::graph::bce_value;
use crate::kernel::nn::{ffn_graph, FfnVars};
use crate::kernel::{BinaryMask, FfnParams, Graph, Matrix, ParamSet, Var};
use crate::mtcg::EncoderShape;

pub const KEYWORDS_FILE: &str = "keywords.tsv";

/// Cross-encoder with a scalar scoring head over the mean of the `[CLS]`,
/// `[PS]` and `[PT]` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct KarModel {
    pub vocab: Vocabulary,
    pub keywords: KeywordVocab,
    pub encoder: Encoder,
    pub head: FfnParams,
}

pub struct KarVars {
    pub encoder: EncoderVars,
    pub head: FfnVars,
}

impl ParamSet for KarModel {
    type Vars = KarVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
        self.encoder.visit(&p("encoder"), out);
        self.head.visit(&p("head"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        self.encoder.visit_mut(out);
        self.head.visit_mut(out);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> KarVars {
        KarVars {
            encoder: self.encoder.vars_from(it),
            head: self.head.vars_from(it),
        }
    }
}

impl KarModel {
    pub fn init<R: Rng + ?Sized>(
        vocab: Vocabulary,
        keywords: KeywordVocab,
        shape: EncoderShape,
        rng: &mut R,
    ) -> Result<Self> {
        let config = shape.with_vocab(vocab.len());
        let encoder = Encoder::init(config, rng)?;
        let head = FfnParams::init(config.d, config.d_ff, 1, rng);
        Ok(Self {
            vocab,
            keywords,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    /// Builds and length-checks the pair input.
    pub fn input(&self, mention: &str, candidate: &str) -> Result<KarInput> {
        let input = build_input(mention, candidate, &self.vocab, &self.keywords)?;
        self.encoder.check_tokens(&input.tokens)?;
        Ok(input)
    }

    pub fn save(&self, dir: &Path, extra: serde_json::Value) -> Result<()> {
        save_model(dir, "kar", &self.vocab, &self.encoder, &self.head, &self.named_params(), extra)?;
        self.keywords.save(&dir.join(KEYWORDS_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let keywords = KeywordVocab::load(&dir.join(KEYWORDS_FILE))?;
        load_model(dir, "kar", |vocab, encoder, head| Self {
            vocab,
            keywords,
            encoder,
            head,
        })
    }
}

/// Score node (1×1, in (0, 1)) for one pair.
pub fn kar_score_graph(g: &mut Graph<'_>, vars: &KarVars, model: &KarModel, input: &KarInput, mask: &BinaryMask) -> Var {
    let h = encode_graph(g, &vars.encoder, model.config().attention, &input.tokens, Some(mask), None);
    let merged = g.mean_rows(h, &[0, PS_POS, PT_POS]);
    let logit = ffn_graph(g, merged, &vars.head);
    g.sigmoid(logit)
}

pub fn kar_score(model: &KarModel, input: &KarInput) -> Result<f64> {
    model.encoder.check_tokens(&input.tokens)?;
    let mask = build_mask(input);
    let mut g = Graph::new();
    let vars = model.bind(&mut g);
    let p = kar_score_graph(&mut g, &vars, model, input, &mask);
    Ok(g.scalar(p))
}

/// Scores every candidate text against `mention`, in order.
pub fn kar_scores<S: AsRef<str> + Sync>(model: &KarModel, mention: &str, candidates: &[S]) -> Result<Vec<f64>> {
    candidates
        .par_iter()
        .map(|c| kar_score(model, &model.input(mention, c.as_ref())?))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KarLoss {
    pub loss: f64,
    /// The prediction sat at 0 or 1 and was clamped before taking logs.
    pub clamped: bool,
}

/// Pointwise binary cross-entropy.
pub fn kar_loss(prediction: f64, label: u8) -> Result<KarLoss> {
    if !prediction.is_finite() || !(0.0..=1.0).contains(&prediction) {
        return Err(Error::Numeric(format!("KAR prediction {prediction} is not a probability")));
    }
    if label > 1 {
        return Err(Error::Contract(format!("label must be 0 or 1, got {label}")));
    }
    let (loss, _, clamped) = bce_value(prediction, label as f64);
    Ok(KarLoss { loss, clamped })
}
