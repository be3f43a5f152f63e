use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeywordKind {
    Site,
    Type,
}

impl KeywordKind {
    pub const ALL: [KeywordKind; 2] = [KeywordKind::Site, KeywordKind::Type];
}

impl fmt::Display for KeywordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeywordKind::Site => "site",
            KeywordKind::Type => "type",
        })
    }
}

impl FromStr for KeywordKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "site" => Ok(KeywordKind::Site),
            "type" => Ok(KeywordKind::Type),
            other => Err(Error::Validation(format!("unknown keyword kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub term: String,
    pub kind: KeywordKind,
}

/// Procedure site and procedure type keywords.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeywordVocab {
    entries: Vec<KeywordEntry>,
}

impl KeywordVocab {
    pub fn new(entries: Vec<KeywordEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.term.trim().is_empty() {
                return Err(Error::Validation("empty keyword term".into()));
            }
            if !seen.insert((e.term.as_str(), e.kind)) {
                return Err(Error::Validation(format!("duplicate keyword {} ({})", e.term, e.kind)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self, kind: KeywordKind) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |e| e.kind == kind).map(|e| e.term.as_str())
    }

    pub fn to_tsv(&self) -> String {
        self.entries.iter().map(|e| format!("{}\t{}\n", e.term, e.kind)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message,
            };
            let mut fields = line.split('\t');
            let (Some(term), Some(kind), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err("expected `term<TAB>site|type`".into()));
            };
            let kind = kind.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            entries.push(KeywordEntry {
                term: term.to_string(),
                kind,
            });
        }
        Self::new(entries).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Half-open span `[start, end)` of a matched keyword.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeywordSpan {
    pub start: usize,
    pub end: usize,
    pub kind: KeywordKind,
}

impl KeywordSpan {
    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn shifted(self, offset: usize) -> Self {
        Self {
            start: self.start + offset,
            end: self.end + offset,
            kind: self.kind,
        }
    }
}

/// Greedy left-to-right longest match, run separately for each kind, over
/// the characters of `text`. Spans are in character positions, sorted by
/// (start, end, kind).
pub fn match_keywords(text: &str, vocab: &KeywordVocab) -> Vec<KeywordSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    for kind in KeywordKind::ALL {
        let terms: Vec<Vec<char>> = vocab.terms(kind).map(|t| t.chars().collect()).collect();
        let mut i = 0;
        while i < chars.len() {
            let best = terms
                .iter()
                .filter(|t| chars[i..].starts_with(t))
                .map(Vec::len)
                .max()
                .unwrap_or(0);
            if best > 0 {
                spans.push(KeywordSpan {
                    start: i,
                    end: i + best,
                    kind,
                });
                i += best;
            } else {
                i += 1;
            }
        }
    }
    spans.sort();
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

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

    #[test]
    fn longest_match_wins() {
        let v = vocab(&[("甲状", KeywordKind::Site), ("甲状腺", KeywordKind::Site)]);
        let spans = match_keywords("甲状腺切除术", &v);
        assert_eq!(
            spans,
            [KeywordSpan {
                start: 0,
                end: 3,
                kind: KeywordKind::Site
            }]
        );
    }

    #[test]
    fn adjacent_site_and_type() {
        let v = vocab(&[("胆囊", KeywordKind::Site), ("切除", KeywordKind::Type)]);
        let spans = match_keywords("胆囊切除术", &v);
        assert_eq!(spans.len(), 2);
        assert_eq!((spans[0].start, spans[0].end, spans[0].kind), (0, 2, KeywordKind::Site));
        assert_eq!((spans[1].start, spans[1].end, spans[1].kind), (2, 4, KeywordKind::Type));
    }

    #[test]
    fn rejects_duplicates_but_allows_same_term_in_both_kinds() {
        let e = |t: &str, k| KeywordEntry {
            term: t.into(),
            kind: k,
        };
        assert!(KeywordVocab::new(vec![e("肝", KeywordKind::Site), e("肝", KeywordKind::Type)]).is_ok());
        assert!(KeywordVocab::new(vec![e("肝", KeywordKind::Site), e("肝", KeywordKind::Site)]).is_err());
        assert!(KeywordVocab::new(vec![e("", KeywordKind::Site)]).is_err());
    }
}
