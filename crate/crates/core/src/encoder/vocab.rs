use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PS: &str = "[PS]";
pub const PT: &str = "[PT]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const PS_ID: usize = 4;
pub const PT_ID: usize = 5;

pub const RESERVED: [&str; 6] = [PAD, UNK, CLS, SEP, PS, PT];

/// Character vocabulary with the reserved tokens at ids 0..6.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    chars: HashMap<char, usize>,
}

impl Vocabulary {
    /// Reserved tokens followed by every distinct character of `texts`, in
    /// code point order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let chars: BTreeSet<char> = texts.into_iter().flat_map(str::chars).collect();
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(chars.into_iter().map(String::from))
            .collect();
        Self::from_tokens(tokens).expect("freshly built vocabulary is valid")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::Validation(format!(
                "vocabulary must start with the reserved tokens {RESERVED:?}"
            )));
        }
        let mut chars = HashMap::new();
        for (id, tok) in tokens.iter().enumerate().skip(RESERVED.len()) {
            if RESERVED.contains(&tok.as_str()) {
                return Err(Error::Validation(format!("reserved token {tok} repeated at line {}", id + 1)));
            }
            let mut it = tok.chars();
            let (Some(c), None) = (it.next(), it.next()) else {
                return Err(Error::Validation(format!(
                    "vocabulary entry {tok:?} at line {} is not a single character",
                    id + 1
                )));
            };
            if chars.insert(c, id).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary entry {tok:?} at line {}", id + 1)));
            }
        }
        Ok(Self { tokens, chars })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn char_id(&self, c: char) -> usize {
        self.chars.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text
            .strip_suffix('\n')
            .unwrap_or(&text)
            .split('\n')
            .map(String::from)
            .collect();
        Self::from_tokens(tokens).map_err(|e| match e {
            Error::Validation(message) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message,
            },
            other => other,
        })
    }
}

/// Token ids plus padding flags (1 = real token) and segment ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub padding: Vec<u8>,
    pub segments: Vec<u8>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        let n = ids.len();
        Self {
            ids,
            padding: vec![1; n],
            segments: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn has_padding(&self) -> bool {
        self.padding.iter().any(|&p| p == 0)
    }

    /// Positions holding real (non-pad) tokens.
    pub fn real_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.padding[i] == 1).collect()
    }

    /// Appends `[PAD]` tokens up to `len`.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.ids.len() < len {
            out.ids.push(PAD_ID);
            out.padding.push(0);
            out.segments.push(0);
        }
        out
    }
}

/// Character-level tokenization; `wrap` adds `[CLS]` … `[SEP]`.
pub fn tokenize(text: &str, vocab: &Vocabulary, wrap: bool) -> Result<TokenSequence> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("cannot tokenize empty text".into()));
    }
    let mut ids = Vec::with_capacity(text.chars().count() + 2);
    if wrap {
        ids.push(CLS_ID);
    }
    ids.extend(text.chars().map(|c| vocab.char_id(c)));
    if wrap {
        ids.push(SEP_ID);
    }
    Ok(TokenSequence::new(ids))
}
