use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{TokenSequence, CLS_ID};
use crate::error::{Error, Result};
use crate::kernel::nn::{layer_graph, AttentionMasks, AttentionTrace, LayerVars};
use crate::kernel::{AttentionOptions, BinaryMask, Graph, LayerParams, Matrix, ParamSet, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub d: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub attention: AttentionOptions,
}

impl EncoderConfig {
    pub fn d_head(&self) -> usize {
        self.d / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Spec(format!("d = {} must equal heads·d_head (heads = {})", self.d, self.heads)));
        }
        if self.d_ff == 0 || self.max_len == 0 || self.vocab_size == 0 {
            return Err(Error::Spec("d_ff, max_len and vocab_size must be positive".into()));
        }
        Ok(())
    }
}

const TOKEN_EMB_STD: f64 = 0.5;
const POS_EMB_STD: f64 = 0.2;
const SEG_EMB_STD: f64 = 0.2;

/// Micro-transformer: token + learned position + segment embeddings
/// followed by post-norm transformer layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub token_emb: Matrix,
    pub pos_emb: Matrix,
    pub seg_emb: Matrix,
    pub layers: Vec<LayerParams>,
}

pub struct EncoderVars {
    pub token_emb: Var,
    pub pos_emb: Var,
    pub seg_emb: Var,
    pub layers: Vec<LayerVars>,
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let token_emb = Matrix::random_normal(config.vocab_size, config.d, TOKEN_EMB_STD, rng);
        let pos_emb = Matrix::random_normal(config.max_len, config.d, POS_EMB_STD, rng);
        let seg_emb = Matrix::random_normal(2, config.d, SEG_EMB_STD, rng);
        let layers = (0..config.layers)
            .map(|_| LayerParams::init(config.d, config.heads, config.d_ff, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            token_emb,
            pos_emb,
            seg_emb,
            layers,
        })
    }

    pub fn check_tokens(&self, tokens: &TokenSequence) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if tokens.padding.len() != tokens.len() || tokens.segments.len() != tokens.len() {
            return Err(Error::Contract("token, padding and segment lists differ in length".into()));
        }
        if let Some(&bad) = tokens.ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::Contract(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if let Some(&bad) = tokens.segments.iter().find(|&&s| s > 1) {
            return Err(Error::Contract(format!("segment id {bad} not in {{0, 1}}")));
        }
        Ok(())
    }
}

impl ParamSet for Encoder {
    type Vars = EncoderVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
        out.push((p("token_emb"), &self.token_emb));
        out.push((p("pos_emb"), &self.pos_emb));
        out.push((p("seg_emb"), &self.seg_emb));
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&p(&format!("layer{i}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        out.extend([&mut self.token_emb, &mut self.pos_emb, &mut self.seg_emb]);
        for layer in &mut self.layers {
            layer.visit_mut(out);
        }
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> EncoderVars {
        let mut take = || it.next().expect("parameter iterator exhausted");
        let (token_emb, pos_emb, seg_emb) = (take(), take(), take());
        EncoderVars {
            token_emb,
            pos_emb,
            seg_emb,
            layers: self.layers.iter().map(|l| l.vars_from(it)).collect(),
        }
    }
}

/// Key visibility for padded sequences: real tokens see only real tokens,
/// pad positions see only themselves. `None` when nothing is padded.
pub fn padding_allowed(tokens: &TokenSequence) -> Option<Vec<bool>> {
    if !tokens.has_padding() {
        return None;
    }
    let l = tokens.len();
    let mut allowed = vec![false; l * l];
    for i in 0..l {
        for j in 0..l {
            allowed[i * l + j] = if tokens.padding[i] == 0 { i == j } else { tokens.padding[j] == 1 };
        }
    }
    Some(allowed)
}

/// Per-layer, per-head attention weights recorded during a forward pass.
pub type LayerTraces = Vec<AttentionTrace>;

/// Builds the encoder forward pass on `g` and returns the hidden-state node
/// (l×d). `keyword_mask` multiplies attention weights in every layer.
pub fn encode_graph(
    g: &mut Graph<'_>,
    vars: &EncoderVars,
    options: AttentionOptions,
    tokens: &TokenSequence,
    keyword_mask: Option<&BinaryMask>,
    mut traces: Option<&mut LayerTraces>,
) -> Var {
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let segments: Vec<usize> = tokens.segments.iter().map(|&s| s as usize).collect();
    let tok = g.gather(vars.token_emb, &tokens.ids);
    let pos = g.gather(vars.pos_emb, &positions);
    let seg = g.gather(vars.seg_emb, &segments);
    let x = g.add(tok, pos);
    let mut x = g.add(x, seg);
    let allowed = padding_allowed(tokens);
    let masks = AttentionMasks {
        allowed: allowed.as_deref(),
        mask: keyword_mask,
        options,
    };
    for layer in &vars.layers {
        let mut trace = AttentionTrace::new();
        x = layer_graph(g, x, layer, masks, Some(&mut trace));
        if let Some(t) = traces.as_deref_mut() {
            t.push(trace);
        }
    }
    x
}

/// Mean of the hidden rows at non-pad positions, as a 1×d node.
pub fn mean_pool_graph(g: &mut Graph<'_>, hidden: Var, tokens: &TokenSequence) -> Var {
    g.mean_rows(hidden, &tokens.real_positions())
}

/// Encoder output together with its input tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSequence {
    pub hidden: Matrix,
    pub tokens: TokenSequence,
}

pub fn encode(tokens: &TokenSequence, encoder: &Encoder) -> Result<EncodedSequence> {
    encode_masked(tokens, encoder, None)
}

pub fn encode_masked(
    tokens: &TokenSequence,
    encoder: &Encoder,
    keyword_mask: Option<&BinaryMask>,
) -> Result<EncodedSequence> {
    encode_traced(tokens, encoder, keyword_mask).map(|(enc, _)| enc)
}

/// Like [`encode_masked`], also returning every layer's post-mask
/// attention weights (one l×l matrix per head).
pub fn encode_traced(
    tokens: &TokenSequence,
    encoder: &Encoder,
    keyword_mask: Option<&BinaryMask>,
) -> Result<(EncodedSequence, Vec<Vec<Matrix>>)> {
    encoder.check_tokens(tokens)?;
    if let Some(m) = keyword_mask {
        if m.len() != tokens.len() {
            return Err(Error::dim("encoder attention mask", tokens.len(), m.len()));
        }
    }
    let mut g = Graph::new();
    let vars = encoder.bind(&mut g);
    let mut traces = LayerTraces::new();
    let h = encode_graph(
        &mut g,
        &vars,
        encoder.config.attention,
        tokens,
        keyword_mask,
        Some(&mut traces),
    );
    let weights = traces
        .iter()
        .map(|layer| layer.iter().map(|&v| g.value(v).clone()).collect())
        .collect();
    Ok((
        EncodedSequence {
            hidden: g.value(h).clone(),
            tokens: tokens.clone(),
        },
        weights,
    ))
}

/// Average of the hidden rows whose padding flag is 1.
pub fn mean_pool(enc: &EncodedSequence) -> Result<Vec<f64>> {
    let rows = enc.tokens.real_positions();
    if rows.is_empty() {
        return Err(Error::EmptyInput("mean_pool over an all-pad sequence".into()));
    }
    let mut out = vec![0.0; enc.hidden.cols()];
    for &r in &rows {
        for (o, v) in out.iter_mut().zip(enc.hidden.row(r)) {
            *o += v;
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Hidden state of the leading `[CLS]` token.
pub fn cls_vector(enc: &EncodedSequence) -> Result<Vec<f64>> {
    if enc.tokens.ids.first() != Some(&CLS_ID) {
        return Err(Error::Contract("sequence is not [CLS]-wrapped".into()));
    }
    Ok(enc.hidden.row(0).to_vec())
}
