use crate::corpus::{match_keywords, KeywordKind, KeywordSpan, KeywordVocab};
use crate::encoder::vocab::{CLS_ID, PS_ID, PT_ID, SEP_ID};
use crate::encoder::{TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::kernel::{BinaryMask, Matrix};

/// Position of the site marker.
pub const PS_POS: usize = 1;
/// Position of the type marker.
pub const PT_POS: usize = 2;
const PREFIX: usize = 3;

/// `[CLS][PS][PT] mention [SEP] candidate [SEP]` with keyword spans in
/// token coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct KarInput {
    pub tokens: TokenSequence,
    pub spans: Vec<KeywordSpan>,
    pub mention_len: usize,
    pub candidate_len: usize,
}

impl KarInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn candidate_start(&self) -> usize {
        PREFIX + self.mention_len + 1
    }
}

pub fn build_input(mention: &str, candidate: &str, vocab: &Vocabulary, keywords: &KeywordVocab) -> Result<KarInput> {
    let mention = mention.trim();
    let candidate = candidate.trim();
    if mention.is_empty() {
        return Err(Error::EmptyInput("empty mention".into()));
    }
    if candidate.is_empty() {
        return Err(Error::EmptyInput("empty candidate".into()));
    }
    let m: Vec<usize> = mention.chars().map(|c| vocab.char_id(c)).collect();
    let c: Vec<usize> = candidate.chars().map(|ch| vocab.char_id(ch)).collect();
    let mut ids = vec![CLS_ID, PS_ID, PT_ID];
    ids.extend(&m);
    ids.push(SEP_ID);
    let second = ids.len();
    ids.extend(&c);
    ids.push(SEP_ID);

    let mut tokens = TokenSequence::new(ids);
    for s in &mut tokens.segments[second..] {
        *s = 1;
    }
    let mut spans: Vec<KeywordSpan> = match_keywords(mention, keywords)
        .into_iter()
        .map(|s| s.shifted(PREFIX))
        .chain(match_keywords(candidate, keywords).into_iter().map(|s| s.shifted(second)))
        .collect();
    spans.sort();
    Ok(KarInput {
        tokens,
        spans,
        mention_len: m.len(),
        candidate_len: c.len(),
    })
}

/// Visibility matrix: `[PS]` sees site spans and itself, `[PT]` sees type
/// spans and itself, every other row sees all non-pad columns. Pad rows see
/// only themselves.
pub fn build_mask(input: &KarInput) -> BinaryMask {
    let l = input.len();
    let pad = &input.tokens.padding;
    let mut m = Matrix::from_fn(l, l, |i, j| {
        if pad[i] == 0 {
            (i == j) as u8 as f64
        } else {
            pad[j] as f64
        }
    });
    for (row, kind) in [(PS_POS, KeywordKind::Site), (PT_POS, KeywordKind::Type)] {
        if row >= l {
            continue;
        }
        for j in 0..l {
            let visible = j == row || input.spans.iter().any(|s| s.kind == kind && s.contains(j));
            m.set(row, j, if visible && pad[j] == 1 { 1.0 } else { 0.0 });
        }
    }
    BinaryMask::new(m).expect("entries are 0 or 1")
}
