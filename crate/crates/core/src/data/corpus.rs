use std::path::Path;

use crate::amr::{read_amr_file, AmrGraph};
use crate::error::{Error, Result};

/// One training pair; tokens are BPE units.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelExample {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub amr: Option<AmrGraph>,
}

impl ParallelExample {
    pub fn new(src: Vec<String>, tgt: Vec<String>, amr: Option<AmrGraph>) -> Result<Self> {
        if src.is_empty() {
            return Err(Error::Empty("source sentence"));
        }
        if tgt.is_empty() {
            return Err(Error::Empty("target sentence"));
        }
        Ok(ParallelExample { src, tgt, amr })
    }
}

/// Whitespace-tokenized lines of a text file.
pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_tokenized<S: AsRef<str>>(path: &Path, lines: &[Vec<S>]) -> Result<()> {
    let mut text = String::new();
    for line in lines {
        let words: Vec<&str> = line.iter().map(AsRef::as_ref).collect();
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads aligned source/target files and, optionally, the AMR file aligned
/// by block index. Every line must be non-empty.
pub fn load_parallel(src: &Path, tgt: &Path, amr: Option<&Path>) -> Result<Vec<ParallelExample>> {
    let s = read_tokenized(src)?;
    let t = read_tokenized(tgt)?;
    if s.len() != t.len() {
        return Err(Error::Invalid(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    let graphs = match amr {
        Some(p) => {
            let g = read_amr_file(p)?;
            if g.len() != s.len() {
                return Err(Error::Invalid(format!(
                    "{} has {} graphs for {} sentence pairs",
                    p.display(),
                    g.len(),
                    s.len()
                )));
            }
            g.into_iter().map(Some).collect()
        }
        None => vec![None; s.len()],
    };
    s.into_iter()
        .zip(t)
        .zip(graphs)
        .enumerate()
        .map(|(i, ((src, tgt), amr))| {
            ParallelExample::new(src, tgt, amr)
                .map_err(|e| Error::Invalid(format!("pair {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_side_is_rejected() {
        assert!(ParallelExample::new(vec![], vec!["a".into()], None).is_err());
        assert!(ParallelExample::new(vec!["a".into()], vec![], None).is_err());
    }

    #[test]
    fn load_checks_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        std::fs::write(p("s"), "a b\nc\n").unwrap();
        std::fs::write(p("t"), "x\ny z\n").unwrap();
        std::fs::write(p("g"), "(a / a)\n(c / c :mod (d / d))\n").unwrap();
        let ex = load_parallel(&p("s"), &p("t"), Some(&p("g"))).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].tgt, ["y", "z"]);
        assert_eq!(ex[1].amr.as_ref().unwrap().node_count(), 2);

        std::fs::write(p("g"), "(a / a)\n").unwrap();
        assert!(load_parallel(&p("s"), &p("t"), Some(&p("g"))).is_err());
        std::fs::write(p("t"), "x\n").unwrap();
        assert!(load_parallel(&p("s"), &p("t"), None).is_err());
    }
}
