//! Transformer building blocks: multi-head attention with an optional
//! post-softmax visibility mask, the position-wise feed-forward block, and a
//! post-norm residual layer.

use std::sync::Arc;

use rand::Rng;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A collection of named trainable matrices with a typed graph binding.
///
/// `visit`, `visit_mut` and `vars_from` must walk fields in the same order.
pub trait ParamSet {
    type Vars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>);
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>);
    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> Self::Vars;

    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        self.visit_mut(&mut out);
        out
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, m)| m.len()).sum()
    }

    /// Registers every parameter on `g` (borrowed, no copy).
    fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Self::Vars {
        let vars: Vec<Var> = self.named_params().into_iter().map(|(_, m)| g.param(m)).collect();
        self.vars_from(&mut vars.into_iter())
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn next(it: &mut dyn Iterator<Item = Var>) -> Var {
    it.next().expect("parameter iterator exhausted")
}

/// Binary token-to-token visibility matrix. Entry (i, j) is 1 when position
/// i may attend to position j.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask(Arc<Matrix>);

impl BinaryMask {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::dim("BinaryMask", "square matrix", format!("{}x{}", m.rows(), m.cols())));
        }
        if m.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidMask("entries must be exactly 0 or 1".into()));
        }
        if let Some(r) = (0..m.rows()).find(|&r| m.row(r).iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidMask(format!("row {r} has no visible position")));
        }
        Ok(Self(Arc::new(m)))
    }

    pub fn ones(l: usize) -> Self {
        Self(Arc::new(Matrix::filled(l, l, 1.0)))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.0.get(i, j) == 1.0
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub(crate) fn shared(&self) -> Arc<Matrix> {
        Arc::clone(&self.0)
    }
}

/// Options for masked attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AttentionOptions {
    /// Rescale masked attention rows to sum to one. Off by default: the mask
    /// is applied as a plain elementwise product after the softmax.
    #[serde(default)]
    pub renormalize_masked: bool,
}

/// Per-head query/key/value projections (d × d_head each) and the shared
/// output projection (d × d).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_q: Vec<Matrix>,
    pub w_k: Vec<Matrix>,
    pub w_v: Vec<Matrix>,
    pub w_o: Matrix,
}

pub struct AttentionVars {
    pub w_q: Vec<Var>,
    pub w_k: Vec<Var>,
    pub w_v: Vec<Var>,
    pub w_o: Var,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, rng: &mut R) -> Result<Self> {
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::dim("AttentionParams::init", format!("d divisible by {n_heads} heads"), d));
        }
        let d_head = d / n_heads;
        let std = 1.0 / (d as f64).sqrt();
        let proj = |rng: &mut R| (0..n_heads).map(|_| Matrix::random_normal(d, d_head, std, rng)).collect();
        Ok(Self {
            w_q: proj(rng),
            w_k: proj(rng),
            w_v: proj(rng),
            w_o: Matrix::random_normal(d, d, std, rng),
        })
    }

    pub fn n_heads(&self) -> usize {
        self.w_q.len()
    }

    pub fn d_head(&self) -> usize {
        self.w_q.first().map_or(0, Matrix::cols)
    }

    pub fn d(&self) -> usize {
        self.w_o.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, dh, d) = (self.n_heads(), self.d_head(), self.d());
        if n == 0 || self.w_k.len() != n || self.w_v.len() != n {
            return Err(Error::dim("AttentionParams", format!("{n} heads for q/k/v"), "inconsistent head counts"));
        }
        if d != n * dh {
            return Err(Error::dim("AttentionParams", format!("d = n·d_head = {}", n * dh), d));
        }
        if self.w_o.shape() != (d, d) {
            return Err(Error::dim("AttentionParams.w_o", format!("{d}x{d}"), format!("{:?}", self.w_o.shape())));
        }
        for m in self.w_q.iter().chain(&self.w_k).chain(&self.w_v) {
            if m.shape() != (d, dh) {
                return Err(Error::dim("AttentionParams head projection", format!("{d}x{dh}"), format!("{:?}", m.shape())));
            }
        }
        Ok(())
    }
}

impl ParamSet for AttentionParams {
    type Vars = AttentionVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (kind, mats) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            for (h, m) in mats.iter().enumerate() {
                out.push((join(prefix, &format!("{kind}.{h}")), m));
            }
        }
        out.push((join(prefix, "w_o"), &self.w_o));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        out.extend(self.w_q.iter_mut());
        out.extend(self.w_k.iter_mut());
        out.extend(self.w_v.iter_mut());
        out.push(&mut self.w_o);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> AttentionVars {
        let n = self.n_heads();
        let w_q = (0..n).map(|_| next(it)).collect();
        let w_k = (0..n).map(|_| next(it)).collect();
        let w_v = (0..n).map(|_| next(it)).collect();
        AttentionVars {
            w_q,
            w_k,
            w_v,
            w_o: next(it),
        }
    }
}

/// `max(0, x·W1 + b1)·W2 + b2`, with W1: d×d_ff and W2: d_ff×out.
#[derive(Clone, Debug, PartialEq)]
pub struct FfnParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

pub struct FfnVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl FfnParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_ff: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w1: Matrix::random_normal(d_in, d_ff, (2.0 / d_in as f64).sqrt(), rng),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::random_normal(d_ff, d_out, 1.0 / (d_ff as f64).sqrt(), rng),
            b2: Matrix::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_ff(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, f, o) = (self.d_in(), self.d_ff(), self.d_out());
        if f == 0 {
            return Err(Error::dim("FfnParams", "d_ff > 0", 0));
        }
        if self.b1.shape() != (1, f) || self.w2.rows() != f || self.b2.shape() != (1, o) {
            return Err(Error::dim(
                "FfnParams",
                format!("w1 {d}x{f}, b1 1x{f}, w2 {f}x{o}, b2 1x{o}"),
                format!(
                    "w1 {:?}, b1 {:?}, w2 {:?}, b2 {:?}",
                    self.w1.shape(),
                    self.b1.shape(),
                    self.w2.shape(),
                    self.b2.shape()
                ),
            ));
        }
        Ok(())
    }
}

impl ParamSet for FfnParams {
    type Vars = FfnVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((join(prefix, "w1"), &self.w1));
        out.push((join(prefix, "b1"), &self.b1));
        out.push((join(prefix, "w2"), &self.w2));
        out.push((join(prefix, "b2"), &self.b2));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> FfnVars {
        FfnVars {
            w1: next(it),
            b1: next(it),
            w2: next(it),
            b2: next(it),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Matrix,
    pub beta: Matrix,
}

pub struct LayerNormVars {
    pub gamma: Var,
    pub beta: Var,
}

impl LayerNormParams {
    pub fn identity(d: usize) -> Self {
        Self {
            gamma: Matrix::filled(1, d, 1.0),
            beta: Matrix::zeros(1, d),
        }
    }
}

impl ParamSet for LayerNormParams {
    type Vars = LayerNormVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        out.extend([&mut self.gamma, &mut self.beta]);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> LayerNormVars {
        LayerNormVars {
            gamma: next(it),
            beta: next(it),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub attention: AttentionParams,
    pub ffn: FfnParams,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
}

pub struct LayerVars {
    pub attention: AttentionVars,
    pub ffn: FfnVars,
    pub norm1: LayerNormVars,
    pub norm2: LayerNormVars,
}

impl LayerParams {
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, d_ff: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            attention: AttentionParams::init(d, n_heads, rng)?,
            ffn: FfnParams::init(d, d_ff, d, rng),
            norm1: LayerNormParams::identity(d),
            norm2: LayerNormParams::identity(d),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        self.ffn.validate()?;
        let d = self.attention.d();
        if self.ffn.d_in() != d || self.ffn.d_out() != d {
            return Err(Error::dim("LayerParams.ffn", format!("{d} -> {d}"), format!("{} -> {}", self.ffn.d_in(), self.ffn.d_out())));
        }
        for ln in [&self.norm1, &self.norm2] {
            if ln.gamma.shape() != (1, d) || ln.beta.shape() != (1, d) {
                return Err(Error::dim("LayerParams.norm", format!("1x{d}"), format!("{:?}", ln.gamma.shape())));
            }
        }
        Ok(())
    }
}

impl ParamSet for LayerParams {
    type Vars = LayerVars;

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        self.attention.visit(&join(prefix, "attention"), out);
        self.ffn.visit(&join(prefix, "ffn"), out);
        self.norm1.visit(&join(prefix, "norm1"), out);
        self.norm2.visit(&join(prefix, "norm2"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        self.attention.visit_mut(out);
        self.ffn.visit_mut(out);
        self.norm1.visit_mut(out);
        self.norm2.visit_mut(out);
    }

    fn vars_from(&self, it: &mut dyn Iterator<Item = Var>) -> LayerVars {
        LayerVars {
            attention: self.attention.vars_from(it),
            ffn: self.ffn.vars_from(it),
            norm1: self.norm1.vars_from(it),
            norm2: self.norm2.vars_from(it),
        }
    }
}

/// Visibility applied inside attention.
///
/// `allowed` excludes key columns before the softmax (used for padding);
/// `mask` multiplies the softmax output elementwise.
#[derive(Clone, Copy, Default)]
pub struct AttentionMasks<'m> {
    pub allowed: Option<&'m [bool]>,
    pub mask: Option<&'m BinaryMask>,
    pub options: AttentionOptions,
}

/// Records the post-mask attention weight node of every head.
pub type AttentionTrace = Vec<Var>;

pub fn attention_graph(
    g: &mut Graph<'_>,
    x: Var,
    p: &AttentionVars,
    masks: AttentionMasks<'_>,
    mut trace: Option<&mut AttentionTrace>,
) -> Var {
    let d_head = g.value(p.w_q[0]).cols();
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut heads = Vec::with_capacity(p.w_q.len());
    for h in 0..p.w_q.len() {
        let q = g.matmul(x, p.w_q[h]);
        let k = g.matmul(x, p.w_k[h]);
        let v = g.matmul(x, p.w_v[h]);
        let scores = g.matmul_t(q, k);
        let scores = g.scale(scores, scale);
        let mut weights = g.softmax_rows(scores, masks.allowed);
        if let Some(mask) = masks.mask {
            weights = g.mask_mul(weights, mask.shared());
            if masks.options.renormalize_masked {
                weights = g.row_normalize(weights);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(weights);
        }
        heads.push(g.matmul(weights, v));
    }
    let concat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
    g.matmul(concat, p.w_o)
}

pub fn ffn_graph(g: &mut Graph<'_>, x: Var, p: &FfnVars) -> Var {
    let h = g.matmul(x, p.w1);
    let h = g.add_row(h, p.b1);
    let h = g.relu(h);
    let o = g.matmul(h, p.w2);
    g.add_row(o, p.b2)
}

/// `norm1(x + attention(x))`, then `norm2(h + ffn(h))`.
pub fn layer_graph(
    g: &mut Graph<'_>,
    x: Var,
    p: &LayerVars,
    masks: AttentionMasks<'_>,
    trace: Option<&mut AttentionTrace>,
) -> Var {
    let a = attention_graph(g, x, &p.attention, masks, trace);
    let h = g.add(x, a);
    let h = g.layer_norm(h, p.norm1.gamma, p.norm1.beta);
    let f = ffn_graph(g, h, &p.ffn);
    let o = g.add(h, f);
    g.layer_norm(o, p.norm2.gamma, p.norm2.beta)
}

fn check_mask(mask: Option<&BinaryMask>, l: usize) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != l {
            return Err(Error::dim("attention mask", format!("{l}x{l}"), format!("{0}x{0}", m.len())));
        }
        if let Some(r) = (0..l).find(|&r| m.matrix().row(r).iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidMask(format!("row {r} has no visible position")));
        }
    }
    Ok(())
}

/// Multi-head self-attention of `e` (l×d). A mask, when given, multiplies
/// the softmax weights elementwise.
pub fn multi_head_attention(e: &Matrix, p: &AttentionParams, mask: Option<&BinaryMask>) -> Result<Matrix> {
    multi_head_attention_with(e, p, mask, AttentionOptions::default())
}

pub fn multi_head_attention_with(
    e: &Matrix,
    p: &AttentionParams,
    mask: Option<&BinaryMask>,
    options: AttentionOptions,
) -> Result<Matrix> {
    p.validate()?;
    if e.cols() != p.d() {
        return Err(Error::dim("multi_head_attention input width", p.d(), e.cols()));
    }
    check_mask(mask, e.rows())?;
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let x = g.constant(e.clone());
    let masks = AttentionMasks {
        allowed: None,
        mask,
        options,
    };
    let out = attention_graph(&mut g, x, &vars, masks, None);
    Ok(g.value(out).clone())
}

/// Position-wise feed-forward block applied to every row of `x`.
pub fn ffn(x: &Matrix, p: &FfnParams) -> Result<Matrix> {
    p.validate()?;
    if x.cols() != p.d_in() {
        return Err(Error::dim("ffn input width", p.d_in(), x.cols()));
    }
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let xv = g.constant(x.clone());
    let out = ffn_graph(&mut g, xv, &vars);
    Ok(g.value(out).clone())
}

pub fn transformer_layer(e: &Matrix, p: &LayerParams, mask: Option<&BinaryMask>) -> Result<Matrix> {
    p.validate()?;
    if e.cols() != p.attention.d() {
        return Err(Error::dim("transformer_layer input width", p.attention.d(), e.cols()));
    }
    check_mask(mask, e.rows())?;
    let mut g = Graph::new();
    let vars = p.bind(&mut g);
    let x = g.constant(e.clone());
    let masks = AttentionMasks {
        allowed: None,
        mask,
        options: AttentionOptions::default(),
    };
    let out = layer_graph(&mut g, x, &vars, masks, None);
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn mask_validation() {
        assert!(matches!(
            BinaryMask::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap()),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(
            BinaryMask::new(Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap()),
            Err(Error::InvalidMask(_))
        ));
        assert!(BinaryMask::new(Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn attention_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = AttentionParams::init(8, 2, &mut rng).unwrap();
        let e = Matrix::zeros(3, 6);
        assert!(matches!(multi_head_attention(&e, &p, None), Err(Error::Dimension { .. })));
        let e = Matrix::zeros(3, 8);
        let mask = BinaryMask::ones(4);
        assert!(matches!(multi_head_attention(&e, &p, Some(&mask)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn param_order_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = LayerParams::init(8, 2, 16, &mut rng).unwrap();
        let names: Vec<String> = layer.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "attention.w_q.0");
        assert_eq!(names.last().unwrap(), "norm2.beta");
        let shapes: Vec<_> = layer.named_params().iter().map(|(_, m)| m.shape()).collect();
        let mut_shapes: Vec<_> = layer.params_mut().iter().map(|m| m.shape()).collect();
        assert_eq!(shapes, mut_shapes);
        let mut g = Graph::new();
        let _ = layer.bind(&mut g);
        assert_eq!(g.params().len(), names.len());
    }
}
