//! Writes the bundled toy corpus: `cargo run --example make_sample -- DIR`.

use std::path::PathBuf;

use amrnmt::amr::write_amr_file;
use amrnmt::data::{synthetic_corpus, write_tokenized, SyntheticOptions};

fn main() -> amrnmt::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/sample".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");
    let pairs = synthetic_corpus(600, 2026, SyntheticOptions::default())?;
    for (name, range) in [("train", 0..500), ("dev", 500..550), ("test", 550..600)] {
        let part = &pairs[range];
        let src: Vec<_> = part.iter().map(|p| p.src.clone()).collect();
        let tgt: Vec<_> = part.iter().map(|p| p.tgt.clone()).collect();
        let amr: Vec<_> = part.iter().filter_map(|p| p.amr.clone()).collect();
        write_tokenized(&dir.join(format!("{name}.en")), &src)?;
        write_tokenized(&dir.join(format!("{name}.de")), &tgt)?;
        write_amr_file(&dir.join(format!("{name}.amr")), &amr)?;
    }
    Ok(())
}
