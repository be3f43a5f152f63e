use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Terminology {
    pub code: String,
    pub text: String,
}

impl Terminology {
    pub fn new(code: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            text: text.into(),
        }
    }

    /// Category prefix: the part of the code before the first ".".
    pub fn category(&self) -> &str {
        category_of(&self.code)
    }
}

pub fn category_of(code: &str) -> &str {
    code.split('.').next().unwrap_or(code)
}

/// Category prefix → codes carrying it, in KB order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeCodeIndex {
    groups: BTreeMap<String, Vec<String>>,
}

impl TreeCodeIndex {
    pub fn build<'a>(codes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for code in codes {
            groups.entry(category_of(code).to_string()).or_default().push(code.to_string());
        }
        Self { groups }
    }

    pub fn codes(&self, prefix: &str) -> &[String] {
        self.groups.get(prefix).map_or(&[], Vec::as_slice)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    terms: Vec<Terminology>,
    index: HashMap<String, usize>,
    tree: TreeCodeIndex,
}

impl KnowledgeBase {
    pub fn new(terms: Vec<Terminology>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.code.trim().is_empty() || t.text.trim().is_empty() {
                return Err(Error::Validation(format!("terminology {} has an empty code or text", i + 1)));
            }
            if index.insert(t.code.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate code {}", t.code)));
            }
        }
        let tree = TreeCodeIndex::build(terms.iter().map(|t| t.code.as_str()));
        Ok(Self { terms, index, tree })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Terminology] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &Terminology {
        &self.terms[i]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn get(&self, code: &str) -> Option<&Terminology> {
        self.index_of(code).map(|i| &self.terms[i])
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    pub fn tree(&self) -> &TreeCodeIndex {
        &self.tree
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|t| t.text.as_str())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            out.push_str(&t.code);
            out.push('\t');
            out.push_str(&t.text);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the TSV serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut terms = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let mut fields = line.split('\t');
            let (Some(code), Some(body), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(line_no, "expected `code<TAB>text`".into()));
            };
            if code.is_empty() || body.trim().is_empty() {
                return Err(parse_err(line_no, "empty code or text".into()));
            }
            if let Some(first) = seen.insert(code.to_string(), line_no) {
                return Err(parse_err(line_no, format!("duplicate code {code} (first seen on line {first})")));
            }
            terms.push(Terminology::new(code, body));
        }
        Self::new(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_lines() {
        let kb = KnowledgeBase::parse_tsv("01.3100\t脑膜切开术\n01.4101\t丘脑病损切除术\n", Path::new("kb.tsv")).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.tree().codes("01"), ["01.3100", "01.4101"]);
    }

    #[test]
    fn duplicate_code_names_line() {
        let err = KnowledgeBase::parse_tsv("a.1\tx\nb.1\ty\na.1\tz\n", Path::new("kb.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_line_rejected() {
        let err = KnowledgeBase::parse_tsv("a.1\tx\nno-tab\n", Path::new("kb.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
