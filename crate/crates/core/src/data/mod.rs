//! Tokenization, vocabularies, corpus loading and batching.

mod batch;
pub mod bpe;
mod corpus;
mod synthetic;
mod vocab;

pub use batch::{
    encode_examples, encode_source, graph_tokens, make_batches, sequential_batches, Batch, EncodeOptions, EncodedExample,
    GraphInput, GraphView, Padded, Vocabs,
};
pub use bpe::{apply_bpe, join_subwords, learn_bpe, word_count, Bpe, Merge};
pub use corpus::{load_parallel, read_tokenized, write_tokenized, ParallelExample};
pub use synthetic::{synthetic_corpus, SyntheticOptions};
pub use vocab::{VocabBuild, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};
