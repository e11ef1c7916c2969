#![allow(dead_code)]

use amrnmt::data::{
    encode_examples, graph_tokens, synthetic_corpus, EncodeOptions, EncodedExample, ParallelExample,
    SyntheticOptions, Vocabs, Vocabulary,
};
use amrnmt::model::{Candidate, Mode, ModelConfig};

pub struct Toy {
    pub pairs: Vec<ParallelExample>,
    pub src: Vocabulary,
    pub tgt: Vocabulary,
    pub graph: Option<Vocabulary>,
    pub encoded: Vec<EncodedExample>,
}

pub fn vocab<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocabulary {
    Vocabulary::build(tokens, 100_000).unwrap().vocab
}

pub fn toy(n: usize, seed: u64, opts: SyntheticOptions, mode: Mode) -> Toy {
    let pairs = synthetic_corpus(n, seed, opts).unwrap();
    let src = vocab(pairs.iter().flat_map(|p| p.src.iter().map(String::as_str)));
    let tgt = vocab(pairs.iter().flat_map(|p| p.tgt.iter().map(String::as_str)));
    let graph = if mode == Mode::Seq2seq {
        None
    } else {
        let toks = graph_tokens(&pairs, mode.view()).unwrap();
        Some(vocab(toks.iter().map(String::as_str)))
    };
    let vocabs = Vocabs { src: &src, tgt: &tgt, graph: graph.as_ref() };
    let opts = EncodeOptions { max_len: 0, max_neighbors: 6, view: mode.view() };
    let (encoded, _) = encode_examples(&pairs, &vocabs, &opts).unwrap();
    Toy { pairs, src, tgt, graph, encoded }
}

pub fn config(t: &Toy, mode: Mode, embed: usize, hidden: usize, steps: usize) -> ModelConfig {
    ModelConfig {
        mode,
        embed,
        hidden,
        graph_hidden: hidden,
        steps,
        dropout: 0.0,
        grn_candidate: Candidate::Sigmoid,
        feed_graph_context: true,
        src_vocab: t.src.len(),
        tgt_vocab: t.tgt.len(),
        graph_vocab: t.graph.as_ref().map_or(0, Vocabulary::len),
    }
}
