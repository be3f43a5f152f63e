use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Encoder, EncoderConfig};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::kernel::store::{assign_params, load_params, save_params};
use crate::kernel::{FfnParams, Matrix, ParamSet};

pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    encoder: EncoderConfig,
    head_d_ff: usize,
    head_out: usize,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Saves an encoder-plus-head model: parameters, `meta.json`, and the
/// vocabulary file.
pub fn save_model(
    dir: &Path,
    kind: &str,
    vocab: &Vocabulary,
    encoder: &Encoder,
    head: &FfnParams,
    named: &[(String, &Matrix)],
    extra: serde_json::Value,
) -> Result<()> {
    let meta = ModelMeta {
        kind: kind.into(),
        encoder: encoder.config,
        head_d_ff: head.d_ff(),
        head_out: head.d_out(),
        extra,
    };
    save_params(dir, named, serde_json::to_value(meta)?)?;
    vocab.save(&dir.join(VOCAB_FILE))
}

/// Loads a model saved by [`save_model`]; `build` assembles the model
/// skeleton from (vocabulary, encoder, head) before parameters are copied in.
pub fn load_model<P: ParamSet>(
    dir: &Path,
    kind: &str,
    build: impl FnOnce(Vocabulary, Encoder, FfnParams) -> P,
) -> Result<P> {
    let (params, meta) = load_params(dir)?;
    let meta: ModelMeta = serde_json::from_value(meta)?;
    if meta.kind != kind {
        return Err(Error::Validation(format!(
            "{} holds a {} model, expected {kind}",
            dir.display(),
            meta.kind
        )));
    }
    let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
    if vocab.len() != meta.encoder.vocab_size {
        return Err(Error::Validation("vocabulary size does not match the saved encoder".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let encoder = Encoder::init(meta.encoder, &mut rng)?;
    let head = FfnParams::init(meta.encoder.d, meta.head_d_ff, meta.head_out, &mut rng);
    let mut model = build(vocab, encoder, head);
    assign_params(&mut model, params)?;
    Ok(model)
}

/// The free-form metadata stored with a model.
pub fn saved_metadata(dir: &Path) -> Result<serde_json::Value> {
    let meta = crate::kernel::store::load_meta(dir)?;
    Ok(meta.metadata.get("extra").cloned().unwrap_or(serde_json::Value::Null))
}
