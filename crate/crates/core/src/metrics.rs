//! Corpus BLEU on tokenized, cased text with an optional breakdown by
//! source length.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: &str = "1-10,11-20,21-30,31+";

/// Additive n-gram statistics; reports are computed from their sums.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    /// Adds one sentence pair, clipping each n-gram count by the reference.
    pub fn add<S: AsRef<str>, T: AsRef<str>>(&mut self, hyp: &[S], reference: &[T]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=self.matches.len() {
            let refs = ngram_counts(reference, n);
            for (gram, c) in ngram_counts(hyp, n) {
                self.matches[n - 1] += c.min(refs.get(&gram).copied().unwrap_or(0));
            }
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn report(&self) -> BleuReport {
        let precisions: Vec<f64> = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
            .collect();
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if c < r {
            (1.0 - r / c).exp()
        } else {
            1.0
        };
        let bleu = if precisions.iter().all(|&p| p > 0.0) {
            let mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
            100.0 * brevity_penalty * mean.exp()
        } else {
            0.0
        };
        BleuReport {
            bleu,
            precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// 0 to 100.
    pub bleu: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        let ratio = if self.ref_len == 0 {
            0.0
        } else {
            self.hyp_len as f64 / self.ref_len as f64
        };
        write!(
            f,
            "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            p.join("/"),
            self.brevity_penalty,
            ratio,
            self.hyp_len,
            self.ref_len
        )
    }
}

fn check_lines(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Invalid(format!(
            "{hyps} candidate lines but {refs} reference lines"
        )));
    }
    Ok(())
}

pub fn bleu_stats<S: AsRef<[String]>, T: AsRef<[String]>>(
    candidates: &[S],
    references: &[T],
    max_n: usize,
) -> Result<BleuStats> {
    check_lines(candidates.len(), references.len())?;
    if max_n == 0 {
        return Err(Error::Invalid("max n-gram order must be at least 1".into()));
    }
    let mut stats = BleuStats::new(max_n);
    for (c, r) in candidates.iter().zip(references) {
        stats.add(c.as_ref(), r.as_ref());
    }
    Ok(stats)
}

/// Corpus BLEU: clipped n-gram precisions pooled over all sentences, their
/// geometric mean, and the brevity penalty `exp(1 - r/c)` when `c < r`.
/// No smoothing, so any zero precision gives 0.
pub fn bleu<S: AsRef<[String]>, T: AsRef<[String]>>(
    candidates: &[S],
    references: &[T],
    max_n: usize,
) -> Result<BleuReport> {
    Ok(bleu_stats(candidates, references, max_n)?.report())
}

/// Inclusive source-length range; `hi = None` is open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bucket {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl Bucket {
    pub fn contains(&self, len: usize) -> bool {
        len >= self.lo && self.hi.map_or(true, |h| len <= h)
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "{}-{}", self.lo, h),
            None => write!(f, "{}+", self.lo),
        }
    }
}

/// Buckets that cover every positive length exactly once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Buckets(Vec<Bucket>);

impl Buckets {
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        let mut next = 1;
        for (i, b) in buckets.iter().enumerate() {
            if b.lo != next {
                let what = if b.lo < next { "overlap" } else { "gap" };
                return Err(Error::Config(format!("length buckets {what} at {b}")));
            }
            match b.hi {
                Some(h) if h < b.lo => return Err(Error::Config(format!("empty length bucket {b}"))),
                Some(h) => next = h + 1,
                None if i + 1 != buckets.len() => {
                    return Err(Error::Config(format!("open bucket {b} must come last")))
                }
                None => return Ok(Buckets(buckets)),
            }
        }
        Err(Error::Config(format!(
            "length buckets leave lengths from {next} uncovered"
        )))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bucket> {
        self.0.iter()
    }

    pub fn index_of(&self, len: usize) -> Option<usize> {
        self.0.iter().position(|b| b.contains(len))
    }
}

impl Default for Buckets {
    fn default() -> Self {
        DEFAULT_BUCKETS.parse().expect("default buckets are valid")
    }
}

impl FromStr for Buckets {
    type Err = Error;

    /// Parses `"1-10,11-20,21+"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |p: &str| Error::Config(format!("bad length bucket '{p}'"));
        let num = |p: &str, x: &str| x.trim().parse::<usize>().map_err(|_| bad(p));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            let b = if let Some(lo) = part.strip_suffix('+') {
                Bucket { lo: num(part, lo)?, hi: None }
            } else {
                let (lo, hi) = part.split_once('-').ok_or_else(|| bad(part))?;
                Bucket { lo: num(part, lo)?, hi: Some(num(part, hi)?) }
            };
            out.push(b);
        }
        Buckets::new(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketReport {
    pub bucket: Bucket,
    pub sentences: usize,
    /// `None` for an empty bucket.
    pub report: Option<BleuReport>,
}

/// BLEU per source-length bucket, each scored independently.
pub fn bucketed_bleu<S: AsRef<[String]>, T: AsRef<[String]>>(
    candidates: &[S],
    references: &[T],
    source_lengths: &[usize],
    buckets: &Buckets,
    max_n: usize,
) -> Result<Vec<BucketReport>> {
    check_lines(candidates.len(), references.len())?;
    if source_lengths.len() != candidates.len() {
        return Err(Error::Invalid(format!(
            "{} source lengths for {} sentences",
            source_lengths.len(),
            candidates.len()
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); buckets.0.len()];
    for (i, &len) in source_lengths.iter().enumerate() {
        let b = buckets
            .index_of(len)
            .ok_or_else(|| Error::Invalid(format!("sentence {} has empty source", i + 1)))?;
        members[b].push(i);
    }
    buckets
        .iter()
        .zip(members)
        .map(|(&bucket, idx)| {
            let report = if idx.is_empty() {
                None
            } else {
                let c: Vec<&[String]> = idx.iter().map(|&i| candidates[i].as_ref()).collect();
                let r: Vec<&[String]> = idx.iter().map(|&i| references[i].as_ref()).collect();
                Some(bleu(&c, &r, max_n)?)
            };
            Ok(BucketReport { bucket, sentences: idx.len(), report })
        })
        .collect()
}
