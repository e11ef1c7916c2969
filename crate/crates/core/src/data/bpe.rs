//! Byte-pair encoding: greedy merge learning and segmentation with `@@`
//! continuation markers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";

pub type Merge = (String, String);

/// Learns up to `num_merges` merges from a word stream. Each round merges
/// the most frequent adjacent symbol pair; ties go to the lexicographically
/// smallest pair. Stops early when no pair is left.
pub fn learn_bpe<'a, I>(words: I, num_merges: usize) -> Vec<Merge>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for w in words {
        if !w.is_empty() {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    let mut vocab: Vec<(Vec<String>, usize)> = freq
        .into_iter()
        .map(|(w, c)| (w.chars().map(String::from).collect(), c))
        .collect();

    let mut merges = Vec::with_capacity(num_merges);
    while merges.len() < num_merges {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (symbols, c) in &vocab {
            for pair in symbols.windows(2) {
                *counts.entry((&pair[0], &pair[1])).or_insert(0) += c;
            }
        }
        let best = counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((left, right), _)) = best else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        for (symbols, _) in &mut vocab {
            merge_in_place(symbols, &left, &right);
        }
        merges.push((left, right));
    }
    merges
}

fn merge_in_place(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
        }
        i += 1;
    }
}

/// Learned merges with their priorities.
#[derive(Clone, Debug, Default)]
pub struct Bpe {
    merges: Vec<Merge>,
    ranks: HashMap<Merge, usize>,
}

impl Bpe {
    pub fn new(merges: Vec<Merge>) -> Self {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, m) in merges.iter().enumerate() {
            ranks.entry(m.clone()).or_insert(i);
        }
        Bpe { merges, ranks }
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Segments one word, applying merges in learned order.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_in_place(&mut symbols, l, r);
        }
        let last = symbols.len().saturating_sub(1);
        for s in &mut symbols[..last] {
            s.push_str(CONTINUATION);
        }
        symbols
    }

    /// Segments a whitespace-tokenized line.
    pub fn apply_line(&self, line: &str) -> Vec<String> {
        let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
        let mut out = Vec::new();
        for w in line.split_whitespace() {
            let seg = cache.entry(w).or_insert_with(|| self.segment(w));
            out.extend(seg.iter().cloned());
        }
        out
    }

    /// One merge per line, two space-separated symbols.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut merges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with("#version") {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(Error::Invalid(format!(
                        "{}:{}: expected two symbols",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
        Ok(Bpe::new(merges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for (l, r) in &self.merges {
            text.push_str(l);
            text.push(' ');
            text.push_str(r);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn apply_bpe(merges: &[Merge], word: &str) -> Vec<String> {
    Bpe::new(merges.to_vec()).segment(word)
}

/// Joins subword units back into words by removing `"@@ "`.
pub fn join_subwords<S: AsRef<str>>(tokens: &[S]) -> String {
    let joined = tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ");
    let stripped = joined.replace("@@ ", "");
    stripped
        .strip_suffix(CONTINUATION)
        .map(str::to_string)
        .unwrap_or(stripped)
}

/// Number of words a segmented sequence came from.
pub fn word_count<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens
        .iter()
        .filter(|t| !t.as_ref().ends_with(CONTINUATION))
        .count()
}
