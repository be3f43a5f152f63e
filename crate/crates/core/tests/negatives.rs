mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termnorm::corpus::{
    category_of, generate_synthetic, match_keywords, tfidf_fit, KeywordEntry, KeywordKind, KeywordVocab,
    KnowledgeBase, MentionRecord, SyntheticSpec, Terminology,
};
use termnorm::encoder::Vocabulary;
use termnorm::kernel::Matrix;
use termnorm::mtcg::{EncoderShape, MtcgModel};
use termnorm::negatives::{
    keyword_variants, mine_hard_negatives, sample_keyword_replace, sample_online, sample_random, sample_tfidf,
    sample_tree_coding, NegativeAssignment,
};

fn kb(items: &[(&str, &str)]) -> KnowledgeBase {
    KnowledgeBase::new(items.iter().map(|(c, t)| Terminology::new(*c, *t)).collect()).unwrap()
}

fn rec(mention: &str, codes: &[&str]) -> MentionRecord {
    MentionRecord::new(mention, codes.iter().map(|c| c.to_string()).collect())
}

fn vocab(items: &[(&str, KeywordKind)]) -> KeywordVocab {
    KeywordVocab::new(
        items
            .iter()
            .map(|(t, k)| KeywordEntry {
                term: t.to_string(),
                kind: *k,
            })
            .collect(),
    )
    .unwrap()
}

fn ten_term_kb() -> KnowledgeBase {
    let terms: Vec<Terminology> = (0..10).map(|i| Terminology::new(format!("0{i}.0000"), format!("术式{i}"))).collect();
    KnowledgeBase::new(terms).unwrap()
}

#[test]
fn random_with_one_legal_negative() {
    let kb = kb(&[("01.0000", "甲"), ("02.0000", "乙")]);
    let records = [rec("甲", &["01.0000"])];
    let a = sample_random(&kb, &records, 4, 3).unwrap();
    assert_eq!(a.rows[0].negatives, ["02.0000"]);
    assert!(a.rows[0].kb_limited);
    a.check(&records).unwrap();
}

#[test]
fn random_is_seeded() {
    let kb = ten_term_kb();
    let records: Vec<_> = (0..10).map(|i| rec("x", &[&format!("0{i}.0000")])).collect();
    assert_eq!(sample_random(&kb, &records, 3, 5).unwrap(), sample_random(&kb, &records, 3, 5).unwrap());
    assert_ne!(sample_random(&kb, &records, 3, 5).unwrap(), sample_random(&kb, &records, 3, 6).unwrap());
}

#[test]
fn random_is_uniform_over_legal_negatives() {
    let kb = ten_term_kb();
    let records = [rec("x", &["04.0000"])];
    let draws = 10_000u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for seed in 0..draws {
        let a = sample_random(&kb, &records, 1, seed).unwrap();
        *counts.entry(a.rows[0].negatives[0].clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 9);
    assert!(!counts.contains_key("04.0000"));
    let p = 1.0 / 9.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (code, n) in counts {
        assert!((n as f64 - mean).abs() <= 3.0 * sigma, "{code}: {n}");
    }
}

#[test]
fn tfidf_examples() {
    let kb = kb(&[
        ("01.0000", "甲状腺切除术"),
        ("02.0000", "肾上腺切除术"),
        ("03.0000", "胃部分切除术"),
        ("04.0000", "肝活检"),
    ]);
    let model = tfidf_fit(&kb).unwrap();
    let records = [rec("肾上腺切除术", &["01.0000"]), rec("ＸＹＺ", &["03.0000"])];
    let a = sample_tfidf(&model, &kb, &records, 2).unwrap();
    assert_eq!(a.rows[0].negatives[0], "02.0000");
    assert_eq!(a.rows[1].negatives, ["01.0000", "02.0000"]);
    assert!(!a.rows[1].fallback);
    a.check(&records).unwrap();
}

#[test]
fn tfidf_matches_dense_ranking() {
    let data = generate_synthetic(&SyntheticSpec {
        kb_size: 50,
        mention_count: 30,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let model = tfidf_fit(&data.kb).unwrap();
    let k_n = 5;
    let a = sample_tfidf(&model, &data.kb, &data.train, k_n).unwrap();
    for (row, r) in a.rows.iter().zip(&data.train) {
        let texts: Vec<&str> = data.kb.texts().collect();
        let sims = common::dense_tfidf_cosines(&texts, &r.mention);
        let mut order: Vec<usize> = (0..data.kb.len()).filter(|&i| !r.is_gold(&data.kb.term(i).code)).collect();
        order.sort_by(|&x, &y| {
            let (sx, sy) = (sims[x], sims[y]);
            if (sx - sy).abs() > 1e-9 {
                sy.total_cmp(&sx)
            } else {
                data.kb.term(x).code.cmp(&data.kb.term(y).code)
            }
        });
        let expected: Vec<&str> = order[..k_n].iter().map(|&i| data.kb.term(i).code.as_str()).collect();
        assert_eq!(row.negatives, expected, "{}", r.mention);
        for (i, s) in model.similarities(&r.mention).iter().enumerate() {
            assert!((s - sims[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn tree_coding_examples() {
    let kb = kb(&[
        ("01.3100", "脑膜切开术"),
        ("01.4101", "丘脑切开术"),
        ("01.2000", "颅骨切开术"),
        ("02.1100", "硬脑膜缝合术"),
        ("03.0000", "椎管探查术"),
        ("04.0000", "神经松解术"),
    ]);
    let records = [rec("脑膜切开", &["01.3100"]), rec("椎管探查", &["03.0000"])];
    for seed in 0..20 {
        let a = sample_tree_coding(&kb, &records, 2, seed).unwrap();
        let got: BTreeSet<&str> = a.rows[0].negatives.iter().map(String::as_str).collect();
        assert_eq!(got, BTreeSet::from(["01.2000", "01.4101"]));
        assert!(!a.rows[0].fallback);
        assert!(a.rows[1].fallback);
        assert_eq!(a.rows[1].negatives.len(), 2);
        a.check(&records).unwrap();
    }
}

#[test]
fn tree_coding_stays_in_gold_categories() {
    let data = generate_synthetic(&SyntheticSpec {
        kb_size: 80,
        mention_count: 60,
        multi_fraction: 0.2,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let k_n = 3;
    for seed in 0..100 {
        let a = sample_tree_coding(&data.kb, &data.train, k_n, seed).unwrap();
        a.check(&data.train).unwrap();
        for (row, r) in a.rows.iter().zip(&data.train) {
            let cats: HashSet<&str> = r.codes.iter().map(|c| category_of(c)).collect();
            let pool = data
                .kb
                .terms()
                .iter()
                .filter(|t| cats.contains(t.category()) && !r.is_gold(&t.code))
                .count();
            if pool >= k_n {
                assert!(!row.fallback);
                assert!(row.negatives.iter().all(|c| cats.contains(category_of(c))));
            } else {
                assert!(row.fallback);
            }
        }
    }
}

#[test]
fn keyword_replace_example() {
    let kb = kb(&[
        ("06.3901", "甲状腺病损切除术"),
        ("07.2101", "肾上腺病损切除术"),
        ("06.1901", "甲状腺病损检查术"),
        ("43.5000", "胃部分切除术"),
        ("50.1100", "肝活检"),
    ]);
    let v = vocab(&[
        ("甲状腺", KeywordKind::Site),
        ("肾上腺", KeywordKind::Site),
        ("切除", KeywordKind::Type),
        ("检查", KeywordKind::Type),
    ]);
    let variants: BTreeSet<String> = keyword_variants("甲状腺病损切除术", &v).into_iter().map(|x| x.0).collect();
    assert!(variants.contains("肾上腺病损切除术"));
    assert!(variants.contains("甲状腺病损检查术"));

    let records = [rec("甲状腺病损切除", &["06.3901"])];
    for seed in 0..10 {
        let a = sample_keyword_replace(&kb, &records, &v, 2, seed).unwrap();
        let got: BTreeSet<&str> = a.rows[0].negatives.iter().map(String::as_str).collect();
        assert_eq!(got, BTreeSet::from(["06.1901", "07.2101"]));
        assert!(!a.rows[0].fallback);
    }
    let a = sample_keyword_replace(&kb, &records, &KeywordVocab::default(), 2, 1).unwrap();
    assert!(a.rows[0].fallback);
    assert_eq!(a.rows[0].negatives.len(), 2);
    a.check(&records).unwrap();
}

#[test]
fn keyword_negatives_differ_in_one_span() {
    let data = generate_synthetic(&SyntheticSpec {
        kb_size: 80,
        mention_count: 60,
        seed: 13,
        ..Default::default()
    })
    .unwrap();
    let a = sample_keyword_replace(&data.kb, &data.train, &data.keywords, 1, 13).unwrap();
    let mut checked = 0;
    for (row, r) in a.rows.iter().zip(&data.train) {
        if row.fallback {
            continue;
        }
        for neg in &row.negatives {
            let neg_text = &data.kb.get(neg).unwrap().text;
            let ok = r.codes.iter().any(|g| {
                let gold: Vec<char> = data.kb.get(g).unwrap().text.chars().collect();
                match_keywords(&data.kb.get(g).unwrap().text, &data.keywords).iter().any(|s| {
                    let prefix: String = gold[..s.start].iter().collect();
                    let suffix: String = gold[s.end..].iter().collect();
                    let original: String = gold[s.start..s.end].iter().collect();
                    neg_text.starts_with(&prefix)
                        && neg_text.ends_with(&suffix)
                        && neg_text.chars().count() >= prefix.chars().count() + suffix.chars().count()
                        && {
                            let mid: String = neg_text
                                .chars()
                                .skip(prefix.chars().count())
                                .take(neg_text.chars().count() - prefix.chars().count() - suffix.chars().count())
                                .collect();
                            mid != original && data.keywords.terms(s.kind).any(|t| t == mid)
                        }
                })
            });
            assert!(ok, "{neg_text} is not a one-keyword variant of {:?}", r.codes);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn online_with_degenerate_embeddings_follows_code_order() {
    let kb = kb(&[("03.0000", "丙"), ("01.0000", "甲"), ("02.0000", "乙"), ("04.0000", "丁")]);
    let vocab = Vocabulary::from_texts(kb.texts());
    let shape = EncoderShape {
        layers: 1,
        d: 8,
        heads: 2,
        d_ff: 16,
        max_len: 16,
        ..Default::default()
    };
    let mut model = MtcgModel::init(vocab, shape, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let last = model.encoder.layers.last_mut().unwrap();
    last.norm2.gamma = Matrix::zeros(1, 8);
    last.norm2.beta = Matrix::zeros(1, 8);
    let records = [rec("乙", &["02.0000"]), rec("甲", &["01.0000", "04.0000"])];
    let a = sample_online(&model, &records, &kb, 2).unwrap();
    assert_eq!(a.rows[0].negatives, ["01.0000", "03.0000"]);
    assert_eq!(a.rows[1].negatives, ["02.0000", "03.0000"]);
}

#[test]
fn online_skips_nearest_gold() {
    let kb_emb = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
    let codes: Vec<String> = ["b", "c", "a", "d"].iter().map(|s| s.to_string()).collect();
    let mentions = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let records = [rec("m", &["b"])];
    let a = mine_hard_negatives(&mentions, &kb_emb, &codes, &records, 2).unwrap();
    assert_eq!(a.rows[0].negatives, ["c", "a"]);
    let a = mine_hard_negatives(&mentions, &kb_emb, &codes, &records, 5).unwrap();
    assert!(a.rows[0].kb_limited);
    assert_eq!(a.rows[0].negatives.len(), 3);
}

#[test]
fn assignment_file_round_trip() {
    let kb = ten_term_kb();
    let records: Vec<_> = (0..10).map(|i| rec("x", &[&format!("0{i}.0000")])).collect();
    let a = sample_random(&kb, &records, 3, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("neg.jsonl");
    a.save(&path).unwrap();
    assert_eq!(NegativeAssignment::load(&path, 3).unwrap(), a);
    assert!(sample_random(&kb, &records, 0, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn no_strategy_returns_a_gold(seed in 0u64..10_000, k_n in 1usize..6) {
        let data = generate_synthetic(&SyntheticSpec {
            kb_size: 30,
            mention_count: 40,
            multi_fraction: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let tfidf = tfidf_fit(&data.kb).unwrap();
        let all = [
            sample_random(&data.kb, &data.train, k_n, seed).unwrap(),
            sample_tfidf(&tfidf, &data.kb, &data.train, k_n).unwrap(),
            sample_tree_coding(&data.kb, &data.train, k_n, seed).unwrap(),
            sample_keyword_replace(&data.kb, &data.train, &data.keywords, k_n, seed).unwrap(),
        ];
        for a in &all {
            prop_assert!(a.check(&data.train).is_ok());
            for (row, r) in a.rows.iter().zip(&data.train) {
                let distinct: HashSet<&String> = row.negatives.iter().collect();
                prop_assert_eq!(distinct.len(), row.negatives.len());
                prop_assert!(row.negatives.iter().all(|c| data.kb.contains(c) && !r.is_gold(c)));
                prop_assert_eq!(row.negatives.len(), k_n.min(data.kb.len() - r.codes.len()));
            }
        }
    }
}
