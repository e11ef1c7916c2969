use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id map with the four reserved ids first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct VocabBuild {
    pub vocab: Vocabulary,
    /// Fraction of token occurrences that map to a kept (non-unk) id.
    pub coverage: f64,
}

impl From<Vec<String>> for Vocabulary {
    /// Builds from the non-special tokens in id order.
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Vocabulary::empty();
        for t in tokens {
            v.push(t);
        }
        v
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens.into_iter().skip(SPECIALS.len()).collect()
    }
}

impl Vocabulary {
    fn empty() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for s in SPECIALS {
            v.ids.insert(s.to_string(), v.tokens.len());
            v.tokens.push(s.to_string());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Keeps the `max_size - 4` most frequent tokens (ties broken
    /// lexicographically); everything else maps to unk.
    pub fn build<'a, I>(stream: I, max_size: usize) -> Result<VocabBuild>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if max_size <= SPECIALS.len() {
            return Err(Error::Invalid(format!(
                "vocabulary cap {max_size} leaves no room beyond the {} specials",
                SPECIALS.len()
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut total = 0usize;
        for tok in stream {
            if SPECIALS.contains(&tok) {
                continue;
            }
            *counts.entry(tok).or_insert(0) += 1;
            total += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());
        let covered: usize = ranked.iter().map(|(_, c)| c).sum();

        let mut vocab = Vocabulary::empty();
        for (tok, _) in ranked {
            vocab.push(tok.to_string());
        }
        let coverage = if total == 0 {
            1.0
        } else {
            covered as f64 / total as f64
        };
        Ok(VocabBuild { vocab, coverage })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SPECIALS[UNK], String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// One token per line; line `n` holds id `n + 4`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for t in &self.tokens[SPECIALS.len()..] {
            text.push_str(t);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let v = Vocabulary::from(tokens.clone());
        if v.len() != tokens.len() + SPECIALS.len() {
            return Err(Error::Invalid(format!(
                "{}: duplicate or reserved tokens",
                path.display()
            )));
        }
        Ok(v)
    }

    /// Lowercase hex SHA-256 of the saved file contents.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.tokens[SPECIALS.len()..] {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_and_coverage() {
        let b = Vocabulary::build("a a b".split(' '), 5).unwrap();
        assert_eq!(b.vocab.len(), 5);
        assert_eq!(b.vocab.id("a"), 4);
        assert_eq!(b.vocab.id("b"), UNK);
        assert!((b.coverage - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_cap_covers_everything() {
        let b = Vocabulary::build("x y z y".split(' '), 100).unwrap();
        assert_eq!(b.vocab.len(), 7);
        assert_eq!(b.coverage, 1.0);
        // frequency first, then lexicographic
        assert_eq!(b.vocab.token(4), "y");
        assert_eq!(b.vocab.token(5), "x");
    }

    #[test]
    fn cap_must_leave_room() {
        assert!(Vocabulary::build(["a"], 4).is_err());
    }

    #[test]
    fn specials_are_fixed() {
        let v = Vocabulary::build(["<s>", "a"], 10).unwrap().vocab;
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<unk>"), UNK);
        assert_eq!(v.id("<s>"), BOS);
        assert_eq!(v.id("</s>"), EOS);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocabulary::build("c b a b".split(' '), 10).unwrap().vocab;
        v.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\na\nc\n");
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
    }

    #[test]
    fn encode_decode_up_to_unk() {
        let v = Vocabulary::build("a b".split(' '), 5).unwrap().vocab;
        let ids = v.encode(&["a", "b", "zz"]);
        assert!(ids.iter().all(|&i| i < v.len()));
        let back = v.decode(&ids);
        assert_eq!(back[2], "<unk>");
    }
}
