mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termnorm::encoder::vocab::{CLS_ID, PAD_ID, SEP_ID, UNK_ID};
use termnorm::encoder::{
    cls_vector, encode, encode_masked, mean_pool, tokenize, Encoder, EncoderConfig, TokenSequence, Vocabulary,
};
use termnorm::kernel::{AttentionOptions, BinaryMask, Matrix};
use termnorm::mtcg::{EncoderShape, MtcgModel};
use termnorm::Error;

fn vocab() -> Vocabulary {
    Vocabulary::from_texts(["甲状腺切除术", "肾上腺活检"])
}

fn encoder(layers: usize, seed: u64) -> Encoder {
    let config = EncoderConfig {
        layers,
        d: 8,
        heads: 2,
        d_ff: 16,
        max_len: 16,
        vocab_size: vocab().len(),
        attention: AttentionOptions::default(),
    };
    Encoder::init(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn tokenize_examples() {
    let v = vocab();
    let t = tokenize("甲状腺", &v, true).unwrap();
    assert_eq!(t.len(), 5);
    assert_eq!(t.ids[0], CLS_ID);
    assert_eq!(t.ids[4], SEP_ID);
    assert_eq!(t.ids[1], v.char_id('甲'));
    assert_eq!(t.padding, vec![1; 5]);
    assert!(matches!(tokenize("", &v, true), Err(Error::EmptyInput(_))));
    assert!(matches!(tokenize("  ", &v, false), Err(Error::EmptyInput(_))));
    let t = tokenize("甲X", &v, false).unwrap();
    assert_eq!(t.ids, vec![v.char_id('甲'), UNK_ID]);
}

#[test]
fn vocabulary_ids_are_dense() {
    let v = vocab();
    for (i, tok) in v.tokens().iter().enumerate() {
        assert_eq!(v.token(i), Some(tok.as_str()));
    }
    assert_eq!(v.token(v.len()), None);
}

#[test]
fn encode_shape_and_determinism() {
    let enc = encoder(2, 1);
    let t = tokenize("甲状腺切除术", &vocab(), true).unwrap();
    let a = encode(&t, &enc).unwrap();
    let b = encode(&t, &enc).unwrap();
    assert_eq!(a.hidden.shape(), (8, 8));
    assert_eq!(a.hidden, b.hidden);
}

#[test]
fn encode_matches_composed_reference() {
    for seed in 0..4 {
        let enc = encoder(2, seed);
        let mut t = tokenize("肾上腺活检", &vocab(), true).unwrap();
        t.segments[4..].iter_mut().for_each(|s| *s = 1);
        let out = encode(&t, &enc).unwrap();
        assert!(common::max_diff(&common::encoder(&t, &enc, None), &out.hidden) < 1e-10);
    }
}

#[test]
fn keyword_mask_reaches_every_layer() {
    let enc = encoder(2, 5);
    let t = tokenize("甲状腺切除", &vocab(), true).unwrap();
    let l = t.len();
    let mut m = Matrix::filled(l, l, 1.0);
    for j in 0..l {
        m.set(1, j, if j == 1 || j == 2 { 1.0 } else { 0.0 });
    }
    let mask = BinaryMask::new(m).unwrap();
    let out = encode_masked(&t, &enc, Some(&mask)).unwrap();
    assert!(common::max_diff(&common::encoder(&t, &enc, Some(&mask)), &out.hidden) < 1e-10);
    let ones = encode_masked(&t, &enc, Some(&BinaryMask::ones(l))).unwrap();
    assert_eq!(ones.hidden, encode(&t, &enc).unwrap().hidden);
}

#[test]
fn overlong_sequence_is_length_error() {
    let enc = encoder(1, 2);
    let t = TokenSequence::new(vec![CLS_ID; 17]);
    assert!(matches!(encode(&t, &enc), Err(Error::Length { len: 17, max: 16 })));
}

#[test]
fn padding_is_invisible_to_real_tokens() {
    let enc = encoder(2, 3);
    let t = tokenize("甲状腺切除术", &vocab(), true).unwrap();
    let padded = t.padded_to(13);
    assert_eq!(padded.ids[12], PAD_ID);
    let a = encode(&t, &enc).unwrap();
    let b = encode(&padded, &enc).unwrap();
    for i in 0..t.len() {
        for (x, y) in a.hidden.row(i).iter().zip(b.hidden.row(i)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let pa = mean_pool(&a).unwrap();
    let pb = mean_pool(&b).unwrap();
    assert!(common::l2(&pa, &pb) < 1e-12);
    assert!(common::l2(&cls_vector(&a).unwrap(), &cls_vector(&b).unwrap()) < 1e-12);
    assert!(common::max_diff(&common::encoder(&padded, &enc, None), &b.hidden) < 1e-10);
}

#[test]
fn mean_pool_and_cls_examples() {
    let v = vocab();
    let mut enc = encode(&tokenize("甲状", &v, false).unwrap(), &encoder(1, 4)).unwrap();
    enc.hidden = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert_eq!(mean_pool(&enc).unwrap(), vec![0.5, 0.5]);
    assert!(matches!(cls_vector(&enc), Err(Error::Contract(_))));

    let mut enc = encode(&tokenize("甲", &v, true).unwrap(), &encoder(1, 4)).unwrap();
    enc.hidden = Matrix::from_rows(&[vec![2.0, 4.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(cls_vector(&enc).unwrap(), vec![2.0, 4.0]);
    assert_ne!(cls_vector(&enc).unwrap(), mean_pool(&enc).unwrap());

    enc.hidden = Matrix::filled(3, 2, 0.25);
    assert_eq!(mean_pool(&enc).unwrap(), vec![0.25, 0.25]);
    enc.tokens.padding = vec![0; 3];
    assert!(matches!(mean_pool(&enc), Err(Error::EmptyInput(_))));
}

#[test]
fn model_files_round_trip() {
    let v = vocab();
    let model = MtcgModel::init(
        v,
        EncoderShape {
            layers: 1,
            d: 8,
            heads: 2,
            d_ff: 16,
            max_len: 16,
            ..Default::default()
        },
        &mut ChaCha8Rng::seed_from_u64(6),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path(), serde_json::json!({"run": 1})).unwrap();
    let loaded = MtcgModel::load(dir.path()).unwrap();
    assert_eq!(loaded, model);
    let meta = termnorm::encoder::persist::saved_metadata(dir.path()).unwrap();
    assert_eq!(meta["run"], 1);
    assert!(termnorm::kar::KarModel::load(dir.path()).is_err());
}
