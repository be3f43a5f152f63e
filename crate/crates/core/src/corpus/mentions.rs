use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kb::KnowledgeBase;
use crate::error::{Error, Result};

/// A mention with its gold terminology codes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub mention: String,
    pub codes: Vec<String>,
}

impl MentionRecord {
    pub fn new(mention: impl Into<String>, codes: Vec<String>) -> Self {
        Self {
            mention: mention.into(),
            codes,
        }
    }

    pub fn implication_number(&self) -> usize {
        self.codes.len()
    }

    pub fn is_gold(&self, code: &str) -> bool {
        self.codes.iter().any(|c| c == code)
    }
}

/// Implication class: 1, 2, or 3 for "three or more".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ImplicationLabel(u8);

impl ImplicationLabel {
    pub const ONE: Self = Self(1);
    pub const TWO: Self = Self(2);
    pub const MANY: Self = Self(3);

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            0 => Err(Error::Validation("implication number must be at least 1".into())),
            1 => Ok(Self::ONE),
            2 => Ok(Self::TWO),
            _ => Ok(Self::MANY),
        }
    }

    pub fn from_class_index(i: usize) -> Result<Self> {
        Self::try_from((i + 1) as u8)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based index into the 3-way softmax.
    pub fn class_index(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for ImplicationLabel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1..=3 => Ok(Self(v)),
            _ => Err(Error::Validation(format!("implication class {v} not in 1..=3"))),
        }
    }
}

impl From<ImplicationLabel> for u8 {
    fn from(l: ImplicationLabel) -> u8 {
        l.0
    }
}

/// Checks that every record has a non-empty mention and a non-empty,
/// duplicate-free gold list of KB codes.
pub fn validate_corpus(records: &[MentionRecord], kb: &KnowledgeBase) -> Result<()> {
    let mut problems = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if r.mention.trim().is_empty() {
            problems.push(format!("line {line}: empty mention"));
        }
        if r.codes.is_empty() {
            problems.push(format!("line {line}: empty codes list"));
        }
        let unique: BTreeSet<&str> = r.codes.iter().map(String::as_str).collect();
        if unique.len() != r.codes.len() {
            problems.push(format!("line {line}: repeated gold code"));
        }
        let unknown: Vec<&str> = r.codes.iter().map(String::as_str).filter(|c| !kb.contains(c)).collect();
        if !unknown.is_empty() {
            problems.push(format!("line {line}: unknown codes {}", unknown.join(", ")));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems.join("; ")))
    }
}

pub fn parse_corpus(text: &str, path: &Path) -> Result<Vec<MentionRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reads a JSON-lines corpus and validates it against `kb`.
pub fn load_corpus(path: &Path, kb: &KnowledgeBase) -> Result<Vec<MentionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_corpus(&text, path)?;
    validate_corpus(&records, kb)?;
    Ok(records)
}

pub fn corpus_to_jsonl(records: &[MentionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, records: &[MentionRecord]) -> Result<()> {
    fs::write(path, corpus_to_jsonl(records)?).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct MentionOnly {
    mention: String,
}

/// Mention strings from a JSON-lines file; other fields are ignored.
pub fn load_mentions(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let m: MentionOnly = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if m.mention.trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: "empty mention".into(),
            });
        }
        out.push(m.mention);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no mentions", path.display())));
    }
    Ok(out)
}
