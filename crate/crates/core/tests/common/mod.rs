//! Straight-line reference implementations on plain nested vectors.
#![allow(dead_code)]

use termnorm::encoder::{Encoder, TokenSequence};
use termnorm::kernel::{AttentionParams, BinaryMask, FfnParams, LayerNormParams, LayerParams, Matrix};

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_diff(a: &Rows, b: &Matrix) -> f64 {
    assert_eq!((a.len(), a[0].len()), b.shape());
    let mut worst = 0.0f64;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(r, c)).abs());
        }
    }
    worst
}

pub fn matmul(a: &Rows, b: &Rows) -> Rows {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Rows) -> Rows {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn add_bias(a: &Rows, b: &[f64]) -> Rows {
    a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
}

/// Softmax over the entries of `row` where `keep` is true; the rest are 0.
pub fn softmax(row: &[f64], keep: &[bool]) -> Vec<f64> {
    let max = row
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().zip(keep).map(|(v, k)| if *k { (v - max).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn layer_norm(x: &Rows, p: &LayerNormParams) -> Rows {
    let gamma = p.gamma.row(0);
    let beta = p.beta.row(0);
    x.iter()
        .map(|r| {
            let d = r.len() as f64;
            let mean = r.iter().sum::<f64>() / d;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + 1e-12).sqrt();
            r.iter().enumerate().map(|(c, v)| (v - mean) * inv * gamma[c] + beta[c]).collect()
        })
        .collect()
}

/// Attention with optional pre-softmax key exclusion and an optional
/// post-softmax multiplicative mask.
pub fn attention(e: &Rows, p: &AttentionParams, allowed: Option<&[Vec<bool>]>, mask: Option<&BinaryMask>) -> Rows {
    let l = e.len();
    let d_head = p.w_q[0].cols() as f64;
    let mut heads: Vec<Rows> = Vec::new();
    for h in 0..p.w_q.len() {
        let q = matmul(e, &rows(&p.w_q[h]));
        let k = matmul(e, &rows(&p.w_k[h]));
        let v = matmul(e, &rows(&p.w_v[h]));
        let scores = matmul(&q, &transpose(&k));
        let mut weights = Vec::with_capacity(l);
        for i in 0..l {
            let scaled: Vec<f64> = scores[i].iter().map(|s| s / d_head.sqrt()).collect();
            let keep = allowed.map_or(vec![true; l], |a| a[i].clone());
            let mut w = softmax(&scaled, &keep);
            if let Some(m) = mask {
                for (j, x) in w.iter_mut().enumerate() {
                    if !m.get(i, j) {
                        *x = 0.0;
                    }
                }
            }
            weights.push(w);
        }
        heads.push(matmul(&weights, &v));
    }
    let concat: Rows = (0..l).map(|i| heads.iter().flat_map(|h| h[i].clone()).collect()).collect();
    matmul(&concat, &rows(&p.w_o))
}

pub fn ffn(x: &Rows, p: &FfnParams) -> Rows {
    let h = add_bias(&matmul(x, &rows(&p.w1)), p.b1.row(0));
    let h: Rows = h.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect();
    add_bias(&matmul(&h, &rows(&p.w2)), p.b2.row(0))
}

pub fn layer(e: &Rows, p: &LayerParams, allowed: Option<&[Vec<bool>]>, mask: Option<&BinaryMask>) -> Rows {
    let h = layer_norm(&add(e, &attention(e, &p.attention, allowed, mask)), &p.norm1);
    layer_norm(&add(&h, &ffn(&h, &p.ffn)), &p.norm2)
}

/// Embedding sum followed by every layer; pads are excluded as keys and
/// attend only to themselves.
pub fn encoder(tokens: &TokenSequence, enc: &Encoder, mask: Option<&BinaryMask>) -> Rows {
    let l = tokens.len();
    let mut x: Rows = (0..l)
        .map(|i| {
            (0..enc.config.d)
                .map(|c| {
                    enc.token_emb.get(tokens.ids[i], c)
                        + enc.pos_emb.get(i, c)
                        + enc.seg_emb.get(tokens.segments[i] as usize, c)
                })
                .collect()
        })
        .collect();
    let allowed: Option<Vec<Vec<bool>>> = tokens.has_padding().then(|| {
        (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| if tokens.padding[i] == 0 { i == j } else { tokens.padding[j] == 1 })
                    .collect()
            })
            .collect()
    });
    for p in &enc.layers {
        x = layer(&x, p, allowed.as_deref(), mask);
    }
    x
}

pub fn mean_rows(x: &Rows, which: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; x[0].len()];
    for &r in which {
        for (o, v) in out.iter_mut().zip(&x[r]) {
            *o += v;
        }
    }
    out.iter().map(|v| v / which.len() as f64).collect()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn char_ngrams(text: &str) -> Vec<String> {
    let c: Vec<char> = text.chars().collect();
    let mut out: Vec<String> = c.iter().map(|x| x.to_string()).collect();
    for i in 1..c.len() {
        out.push(format!("{}{}", c[i - 1], c[i]));
    }
    out
}

/// Cosine of `query` against each of `docs` under smoothed-idf tf-idf,
/// with a dense column per n-gram.
pub fn dense_tfidf_cosines(docs: &[&str], query: &str) -> Vec<f64> {
    let mut terms: std::collections::BTreeSet<String> = char_ngrams(query).into_iter().collect();
    for t in docs {
        terms.extend(char_ngrams(t));
    }
    let terms: Vec<String> = terms.into_iter().collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|term| {
            let df = docs.iter().filter(|t| char_ngrams(t).contains(term)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let vec_of = |text: &str| {
        let grams = char_ngrams(text);
        let mut v: Vec<f64> = terms
            .iter()
            .zip(&idf)
            .map(|(term, w)| grams.iter().filter(|g| *g == term).count() as f64 * w)
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    };
    let q = vec_of(query);
    docs.iter().map(|t| vec_of(t).iter().zip(&q).map(|(a, b)| a * b).sum()).collect()
}
