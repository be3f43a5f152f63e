use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termnorm::corpus::{ImplicationLabel, KeywordVocab, KnowledgeBase, Terminology};
use termnorm::encoder::Vocabulary;
use termnorm::fusion::{
    candidate_scores, fuse, score_candidates, select, sort_scored, FusionConfig, FusionMode, Pipeline,
    ScoredCandidate,
};
use termnorm::kar::KarModel;
use termnorm::kernel::Matrix;
use termnorm::mtcg::{Candidate, EncoderShape, KbIndex, MtcgModel};
use termnorm::Error;

fn scored(code: &str, s: f64) -> ScoredCandidate {
    ScoredCandidate {
        code: code.to_string(),
        d: 0.0,
        sc: s,
        sr: s,
        s,
    }
}

#[test]
fn candidate_score_examples() {
    assert_eq!(candidate_scores(&[0.7; 4]).unwrap(), vec![0.75; 4]);
    let sc = candidate_scores(&[0.2, 0.3, 0.5]).unwrap();
    for (a, b) in sc.iter().zip([0.8, 0.7, 0.5]) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
    }
    assert_eq!(candidate_scores(&[0.0; 3]).unwrap(), vec![1.0; 3]);
    assert!(matches!(candidate_scores(&[0.1, -0.2]), Err(Error::Contract(_))));
    assert!(candidate_scores(&[f64::NAN]).is_err());
}

#[test]
fn fuse_examples() {
    assert_eq!(fuse(1.0, 1.0), 1.0);
    assert_eq!(fuse(0.0, 0.8), 0.4);
}

#[test]
fn selection_examples() {
    let list: Vec<ScoredCandidate> = [0.9, 0.85, 0.82, 0.81, 0.5, 0.3]
        .iter()
        .enumerate()
        .map(|(i, s)| scored(&format!("c{i}"), *s))
        .collect();
    let codes = |x, theta| select(&list, x, theta).codes;
    assert_eq!(codes(ImplicationLabel::ONE, 0.8), ["c0"]);
    assert_eq!(codes(ImplicationLabel::TWO, 0.0), ["c0", "c1"]);
    assert_eq!(codes(ImplicationLabel::TWO, 0.99), ["c0", "c1"]);
    assert_eq!(codes(ImplicationLabel::MANY, 0.8), ["c0", "c1", "c2", "c3"]);
    assert_eq!(codes(ImplicationLabel::MANY, 0.95), ["c0", "c1", "c2"]);
    assert_eq!(codes(ImplicationLabel::MANY, 0.4).len(), 5);

    let short = select(&list[..2], ImplicationLabel::MANY, 0.8);
    assert_eq!(short.codes, ["c0", "c1"]);
    assert!(short.short);
    assert!(!select(&list, ImplicationLabel::MANY, 0.8).short);
}

#[test]
fn sorting_breaks_ties_by_code() {
    let mut list = vec![scored("b", 0.5), scored("c", 0.9), scored("a", 0.5)];
    sort_scored(&mut list);
    let order: Vec<&str> = list.iter().map(|c| c.code.as_str()).collect();
    assert_eq!(order, ["c", "a", "b"]);
}

#[test]
fn scoring_modes() {
    let recalled: Vec<Candidate> = [("x", 0.1), ("y", 0.2), ("z", 0.7)]
        .iter()
        .map(|(c, d)| Candidate {
            code: c.to_string(),
            distance: *d,
        })
        .collect();
    let ranker = [0.1, 0.9, 0.95];
    let order = |mode| -> Vec<String> {
        score_candidates(&recalled, &ranker, mode).unwrap().into_iter().map(|c| c.code).collect()
    };
    assert_eq!(order(FusionMode::RecallOnly), ["x", "y", "z"]);
    assert_eq!(order(FusionMode::RankOnly), ["z", "y", "x"]);
    // sc = (0.9, 0.8, 0.3): fused (0.5, 0.85, 0.625)
    assert_eq!(order(FusionMode::Fused), ["y", "z", "x"]);
    let fused = score_candidates(&recalled, &ranker, FusionMode::Fused).unwrap();
    assert_abs_diff_eq!(fused[0].s, 0.85, epsilon = 1e-12);
    assert!(score_candidates(&recalled, &ranker[..2], FusionMode::Fused).is_err());
}

#[test]
fn config_validation() {
    FusionConfig::default().validate().unwrap();
    let mut c = FusionConfig::default();
    c.k_c = 2;
    assert!(matches!(c.validate(), Err(Error::Spec(_))));
    c.k_c = 3;
    c.theta = f64::NAN;
    assert!(c.validate().is_err());
}

struct Fixture {
    kb: KnowledgeBase,
    mtcg: MtcgModel,
    kar: KarModel,
    index: KbIndex,
}

fn fixture(class: usize) -> Fixture {
    let kb = KnowledgeBase::new(vec![
        Terminology::new("06.3901", "甲状腺病损切除术"),
        Terminology::new("07.2101", "肾上腺病损切除术"),
        Terminology::new("43.5000", "胃部分切除术"),
        Terminology::new("50.1100", "肝活检"),
        Terminology::new("45.2300", "结肠镜检查"),
    ])
    .unwrap();
    let vocab = Vocabulary::from_texts(kb.texts());
    let shape = EncoderShape {
        layers: 1,
        d: 16,
        heads: 2,
        d_ff: 32,
        max_len: 48,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mtcg = MtcgModel::init(vocab.clone(), shape, &mut rng).unwrap();
    let mut bias = vec![0.0; 3];
    bias[class] = 800.0;
    mtcg.head.b2 = Matrix::row_vector(bias);
    let mut kar = KarModel::init(vocab, KeywordVocab::default(), shape, &mut rng).unwrap();
    kar.head.w2 = Matrix::zeros(kar.head.w2.rows(), 1);
    kar.head.b2 = Matrix::zeros(1, 1);
    let index = KbIndex::build(&mtcg, &kb).unwrap();
    Fixture { kb, mtcg, kar, index }
}

fn pipeline(f: &Fixture, config: FusionConfig) -> Pipeline<'_> {
    Pipeline {
        mtcg: &f.mtcg,
        kar: &f.kar,
        kb: &f.kb,
        index: &f.index,
        config,
    }
}

#[test]
fn verbatim_mention_is_selected() {
    let f = fixture(0);
    for mode in [FusionMode::Fused, FusionMode::RecallOnly, FusionMode::RankOnly] {
        let p = pipeline(&f, FusionConfig { mode, ..Default::default() });
        let r = p.normalize(0, "肝活检").unwrap();
        assert_eq!(r.implication, ImplicationLabel::ONE);
        assert_eq!(r.candidates.len(), 5);
        if mode != FusionMode::RankOnly {
            assert_eq!(r.selected, ["50.1100"]);
            assert_eq!(r.candidates[0].d, 0.0);
        } else {
            assert_eq!(r.selected.len(), 1);
        }
    }
}

#[test]
fn many_class_with_low_scores_returns_three() {
    let f = fixture(2);
    let p = pipeline(
        &f,
        FusionConfig {
            k_c: 3,
            theta: 0.8,
            mode: FusionMode::Fused,
        },
    );
    let r = p.normalize(0, "甲状腺切除").unwrap();
    assert_eq!(r.implication, ImplicationLabel::MANY);
    assert_eq!(r.selected.len(), 3);
    assert!(r.selected.iter().all(|c| r.candidates.iter().any(|x| &x.code == c)));

    let p = pipeline(
        &f,
        FusionConfig {
            k_c: 5,
            theta: 0.0,
            mode: FusionMode::Fused,
        },
    );
    assert_eq!(p.normalize(0, "甲状腺切除").unwrap().selected.len(), 5);
}

#[test]
fn normalization_is_repeatable_and_checks_the_index() {
    let f = fixture(1);
    let p = pipeline(&f, FusionConfig::default());
    let mentions = ["甲状腺切除", "胃切除", "肠镜"];
    let a = p.normalize_all(&mentions).unwrap();
    let b = p.normalize_all(&mentions).unwrap();
    assert_eq!(a, b);
    for (i, r) in a.iter().enumerate() {
        assert_eq!(r.mention_id, i);
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r, &p.normalize(i, mentions[i]).unwrap());
    }

    let other = KnowledgeBase::new(vec![Terminology::new("01.0000", "肝活检")]).unwrap();
    let stale = Pipeline { kb: &other, ..p };
    assert!(matches!(stale.normalize(0, "肝"), Err(Error::Stale(_))));
}

proptest! {
    #[test]
    fn candidate_scores_sum_to_k_minus_one(d in prop::collection::vec(0.0f64..10.0, 3..20)) {
        prop_assume!(d.iter().sum::<f64>() > 1e-6);
        let sc = candidate_scores(&d).unwrap();
        prop_assert!((sc.iter().sum::<f64>() - (d.len() as f64 - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn averaging_and_summing_rank_alike(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..15)) {
        let by = |f: &dyn Fn(f64, f64) -> f64| {
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            idx.sort_by(|&a, &b| f(pairs[b].0, pairs[b].1).total_cmp(&f(pairs[a].0, pairs[a].1)).then(a.cmp(&b)));
            idx
        };
        prop_assert_eq!(by(&|a, b| fuse(a, b)), by(&|a, b| a + b));
    }

    #[test]
    fn selection_size_follows_class(s in prop::collection::vec(0.0f64..1.0, 3..12), theta in 0.0f64..1.0) {
        let mut list: Vec<ScoredCandidate> = s.iter().enumerate().map(|(i, v)| scored(&format!("{i:02}"), *v)).collect();
        sort_scored(&mut list);
        prop_assert_eq!(select(&list, ImplicationLabel::ONE, theta).codes.len(), 1);
        prop_assert_eq!(select(&list, ImplicationLabel::TWO, theta).codes.len(), 2);
        let many = select(&list, ImplicationLabel::MANY, theta).codes;
        let above = list.iter().skip(3).filter(|c| c.s > theta).count();
        prop_assert_eq!(many.len(), 3 + above);
        prop_assert!(many.iter().all(|c| list.iter().any(|x| &x.code == c)));
    }
}
