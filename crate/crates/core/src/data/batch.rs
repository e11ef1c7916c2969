use rand::seq::SliceRandom;

use super::bpe::word_count;
use super::corpus::ParallelExample;
use super::vocab::{Vocabulary, BOS, EOS, PAD};
use crate::amr::{adjacency, chain_graph, linearize, Adjacency, AmrGraph, CHAIN_LABEL};
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;

/// Which second input, if any, accompanies the source sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphView {
    None,
    /// The parsed AMR graph.
    Amr,
    /// A `:next` chain over the source tokens.
    SourceChain,
    /// Linearized AMR tokens, consumed as a sequence.
    Linearized,
}

/// Id-encoded graph for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub node_ids: Vec<usize>,
    pub edge_label_ids: Vec<usize>,
    /// Source node of each edge, parallel to `edge_label_ids`.
    pub edge_src: Vec<usize>,
    pub adjacency: Adjacency,
}

impl GraphInput {
    pub fn new(g: &AmrGraph, vocab: &Vocabulary, max_neighbors: usize) -> Result<Self> {
        Ok(GraphInput {
            node_ids: g.nodes.iter().map(|n| vocab.id(&n.label)).collect(),
            edge_label_ids: g.edges.iter().map(|e| vocab.id(&e.label)).collect(),
            edge_src: g.edges.iter().map(|e| e.src).collect(),
            adjacency: adjacency(g, max_neighbors)?,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }
}

/// One example after id lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    pub graph: Option<GraphInput>,
    pub lin: Option<Vec<usize>>,
}

pub struct Vocabs<'a> {
    pub src: &'a Vocabulary,
    pub tgt: &'a Vocabulary,
    /// Node and edge labels (or chain tokens for [`GraphView::SourceChain`]).
    pub graph: Option<&'a Vocabulary>,
}

#[derive(Clone, Debug)]
pub struct EncodeOptions {
    /// Maximum words per side before BPE; 0 disables the filter.
    pub max_len: usize,
    pub max_neighbors: usize,
    pub view: GraphView,
}

/// Drops over-long pairs and maps everything to ids. Returns the kept
/// examples together with their indices in `examples`.
pub fn encode_examples(
    examples: &[ParallelExample],
    vocabs: &Vocabs<'_>,
    opts: &EncodeOptions,
) -> Result<(Vec<EncodedExample>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut kept = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        if opts.max_len > 0
            && (word_count(&ex.src) > opts.max_len || word_count(&ex.tgt) > opts.max_len)
        {
            continue;
        }
        let mut enc = encode_source(&ex.src, ex.amr.as_ref(), vocabs, opts).map_err(|e| match e {
            Error::Invalid(m) if m == NO_AMR => Error::Invalid(format!("pair {} has no AMR graph", i + 1)),
            e => e,
        })?;
        enc.tgt = vocabs.tgt.encode(&ex.tgt);
        out.push(enc);
        kept.push(i);
    }
    if out.is_empty() && !examples.is_empty() {
        log::warn!("length filter removed all {} pairs", examples.len());
    }
    Ok((out, kept))
}

const NO_AMR: &str = "missing AMR graph";

/// Encodes one source sentence (and its graph input under `opts.view`)
/// with an empty target, as used at translation time.
pub fn encode_source<S: AsRef<str>>(
    src: &[S],
    amr: Option<&AmrGraph>,
    vocabs: &Vocabs<'_>,
    opts: &EncodeOptions,
) -> Result<EncodedExample> {
    if src.is_empty() {
        return Err(Error::Empty("source sentence"));
    }
    let graph_vocab = || {
        vocabs
            .graph
            .ok_or_else(|| Error::Config("graph vocabulary required".into()))
    };
    let amr = || amr.ok_or_else(|| Error::Invalid(NO_AMR.into()));
    let (graph, lin) = match opts.view {
        GraphView::None => (None, None),
        GraphView::Amr => (
            Some(GraphInput::new(amr()?, graph_vocab()?, opts.max_neighbors)?),
            None,
        ),
        GraphView::SourceChain => (
            Some(GraphInput::new(&chain_graph(src)?, graph_vocab()?, opts.max_neighbors)?),
            None,
        ),
        GraphView::Linearized => (None, Some(graph_vocab()?.encode(&linearize(amr()?)))),
    };
    Ok(EncodedExample {
        src: vocabs.src.encode(src),
        tgt: Vec::new(),
        graph,
        lin,
    })
}

/// The token stream a graph-side vocabulary is built from under `view`:
/// node and edge labels, linearized tokens (brackets included) or source
/// tokens plus the chain label.
pub fn graph_tokens(examples: &[ParallelExample], view: GraphView) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let amr = || {
            ex.amr
                .as_ref()
                .ok_or_else(|| Error::Invalid(format!("pair {} has no AMR graph", i + 1)))
        };
        match view {
            GraphView::None => {}
            GraphView::Amr => {
                let g = amr()?;
                out.extend(g.labels().map(str::to_string));
                out.extend(g.edge_labels().map(str::to_string));
            }
            GraphView::Linearized => out.extend(linearize(amr()?)),
            GraphView::SourceChain => {
                out.extend(ex.src.iter().cloned());
                if ex.src.len() > 1 {
                    out.push(CHAIN_LABEL.to_string());
                }
            }
        }
    }
    Ok(out)
}

/// Row-major id matrix padded with `PAD`.
#[derive(Clone, Debug, PartialEq)]
pub struct Padded {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
}

impl Padded {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Self {
        let rows = seqs.len();
        let cols = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        let mut ids = vec![PAD; rows * cols];
        let mut mask = vec![false; rows * cols];
        let mut lengths = Vec::with_capacity(rows);
        for (r, s) in seqs.iter().enumerate() {
            let s = s.as_ref();
            ids[r * cols..r * cols + s.len()].copy_from_slice(s);
            mask[r * cols..r * cols + s.len()].fill(true);
            lengths.push(s.len());
        }
        Padded {
            rows,
            cols,
            ids,
            mask,
            lengths,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> usize {
        self.ids[r * self.cols + c]
    }

    /// Column `c` as one id per row.
    pub fn column(&self, c: usize) -> Vec<usize> {
        (0..self.rows).map(|r| self.at(r, c)).collect()
    }

    pub fn column_mask(&self, c: usize) -> Vec<bool> {
        (0..self.rows).map(|r| self.mask[r * self.cols + c]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Batch {
    /// Positions of the examples in the encoded list.
    pub index: Vec<usize>,
    pub src: Padded,
    /// `<s> y_1 .. y_n </s>` per row.
    pub tgt: Padded,
    pub graphs: Vec<GraphInput>,
    pub lin: Option<Padded>,
}

impl Batch {
    pub fn from_examples(examples: &[EncodedExample], index: Vec<usize>) -> Result<Self> {
        if index.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let pick = |i: &usize| &examples[*i];
        let src: Vec<&[usize]> = index.iter().map(|i| pick(i).src.as_slice()).collect();
        let tgt: Vec<Vec<usize>> = index
            .iter()
            .map(|i| {
                let mut t = Vec::with_capacity(pick(i).tgt.len() + 2);
                t.push(BOS);
                t.extend_from_slice(&pick(i).tgt);
                t.push(EOS);
                t
            })
            .collect();
        let graphs: Vec<GraphInput> = index.iter().filter_map(|i| pick(i).graph.clone()).collect();
        if !graphs.is_empty() && graphs.len() != index.len() {
            return Err(Error::Invalid("batch mixes examples with and without graphs".into()));
        }
        let lin: Vec<&[usize]> = index.iter().filter_map(|i| pick(i).lin.as_deref()).collect();
        let lin = match lin.len() {
            0 => None,
            n if n == index.len() => Some(Padded::new(&lin)),
            _ => return Err(Error::Invalid("batch mixes linearized and plain examples".into())),
        };
        Ok(Batch {
            src: Padded::new(&src),
            tgt: Padded::new(&tgt),
            graphs,
            lin,
            index,
        })
    }

    pub fn size(&self) -> usize {
        self.index.len()
    }

    /// Number of predicted target tokens (including `</s>`).
    pub fn target_tokens(&self) -> usize {
        self.tgt.lengths.iter().map(|l| l - 1).sum()
    }
}

/// How many shuffled examples are sorted together when bucketing.
const POOL_BATCHES: usize = 32;

/// Per-epoch batch order. With bucketing, shuffled pools are sorted by
/// source length before being cut, and the batches are then shuffled.
pub fn make_batches(
    examples: &[EncodedExample],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    bucketing: bool,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let mut rng = seeded_rng(seed, &[0x5348_5546, epoch]);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    if bucketing {
        for pool in order.chunks_mut(batch_size * POOL_BATCHES) {
            pool.sort_by_key(|&i| examples[i].src.len());
            groups.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
        }
        groups.shuffle(&mut rng);
    } else {
        groups.extend(order.chunks(batch_size).map(<[usize]>::to_vec));
    }
    groups
        .into_iter()
        .map(|g| Batch::from_examples(examples, g))
        .collect()
}

/// Batches in corpus order, for decoding and evaluation.
pub fn sequential_batches(examples: &[EncodedExample], batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let order: Vec<usize> = (0..examples.len()).collect();
    order
        .chunks(batch_size)
        .map(|g| Batch::from_examples(examples, g.to_vec()))
        .collect()
}
