//! The four system configurations: parameter layout, teacher-forced
//! forward pass and beam-search translation.

mod params;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use params::{ModelParams, ParamVars, INIT_SCALE};

use crate::data::{Batch, EncodedExample, GraphView};
use crate::decoder::{
    beam_decode, decode_step, init_state, AttentionVars, BeamOptions, DecoderState, DecoderVars,
    Dropout, Hypothesis, Memories, PreparedMemory, StepOutput, StepScorer,
};
use crate::encoders::{bilstm_encode, graph_memory, grn_encode, GraphBatch, GrnVars, LstmState, LstmVars};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Unary, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "seq2seq")]
    Seq2seq,
    #[serde(rename = "dual2seq")]
    Dual2seq,
    #[serde(rename = "dual2seq-linamr")]
    Dual2seqLinAmr,
    #[serde(rename = "dual2seq-self")]
    Dual2seqSelf,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Seq2seq,
        Mode::Dual2seq,
        Mode::Dual2seqLinAmr,
        Mode::Dual2seqSelf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Seq2seq => "seq2seq",
            Mode::Dual2seq => "dual2seq",
            Mode::Dual2seqLinAmr => "dual2seq-linamr",
            Mode::Dual2seqSelf => "dual2seq-self",
        }
    }

    pub fn view(self) -> GraphView {
        match self {
            Mode::Seq2seq => GraphView::None,
            Mode::Dual2seq => GraphView::Amr,
            Mode::Dual2seqLinAmr => GraphView::Linearized,
            Mode::Dual2seqSelf => GraphView::SourceChain,
        }
    }

    /// Whether the mode reads an AMR file.
    pub fn needs_amr(self) -> bool {
        matches!(self, Mode::Dual2seq | Mode::Dual2seqLinAmr)
    }

    pub fn is_dual(self) -> bool {
        self != Mode::Seq2seq
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

/// Activation of the graph encoder's candidate gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    Sigmoid,
    Tanh,
}

impl Candidate {
    pub fn unary(self) -> Unary {
        match self {
            Candidate::Sigmoid => Unary::Sigmoid,
            Candidate::Tanh => Unary::Tanh,
        }
    }
}

impl FromStr for Candidate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Candidate::Sigmoid),
            "tanh" => Ok(Candidate::Tanh),
            _ => Err(Error::Config(format!("unknown candidate activation '{s}'"))),
        }
    }
}

/// Architecture hyperparameters; everything needed to rebuild the
/// parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub embed: usize,
    /// Per-direction encoder width, decoder width and attention width.
    pub hidden: usize,
    pub graph_hidden: usize,
    /// Graph state transitions.
    pub steps: usize,
    pub dropout: f64,
    pub grn_candidate: Candidate,
    pub feed_graph_context: bool,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Zero for seq2seq.
    pub graph_vocab: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("graph-hidden", self.graph_hidden),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must be in [0, 1)", self.dropout)));
        }
        if self.src_vocab <= 4 || self.tgt_vocab <= 4 {
            return Err(Error::Config("vocabularies must hold more than the 4 specials".into()));
        }
        if self.mode.is_dual() && self.graph_vocab <= 4 {
            return Err(Error::Config(format!("mode {} needs a graph vocabulary", self.mode)));
        }
        if matches!(self.mode, Mode::Dual2seq | Mode::Dual2seqSelf) && self.steps == 0 {
            return Err(Error::Config("graph transition steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Width of the second attention memory (0 without one).
    pub fn graph_memory_dim(&self) -> usize {
        match self.mode {
            Mode::Seq2seq => 0,
            Mode::Dual2seq | Mode::Dual2seqSelf => self.graph_hidden,
            Mode::Dual2seqLinAmr => 2 * self.hidden,
        }
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(ModelParams::init(self, 0)?.count())
    }
}

/// Bound encoder and decoder outputs for one batch.
pub struct Encoded {
    pub memories: Memories,
    pub boundary: Var,
}

fn lstm_vars(v: &ParamVars, prefix: &str) -> Result<LstmVars> {
    Ok(LstmVars {
        wx: v.get(&format!("{prefix}.wx"))?,
        wh: v.get(&format!("{prefix}.wh"))?,
        b: v.get(&format!("{prefix}.b"))?,
    })
}

fn attention_vars(v: &ParamVars, prefix: &str) -> Result<AttentionVars> {
    Ok(AttentionVars {
        mem_w: v.get(&format!("{prefix}.mem.w"))?,
        query_w: v.get(&format!("{prefix}.query.w"))?,
        b: v.get(&format!("{prefix}.b"))?,
        v: v.get(&format!("{prefix}.v"))?,
    })
}

fn maybe_drop(g: &mut Graph, x: Var, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(r) => g.dropout(x, p, &mut **r),
        None => Ok(x),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Model { config, params })
    }

    pub fn grn_vars(&self, v: &ParamVars) -> Result<GrnVars> {
        Ok(GrnVars {
            node_emb: v.get("grn.node_emb")?,
            edge_emb: v.get("grn.edge_emb")?,
            edge_w: v.get("grn.edge.w")?,
            edge_b: v.get("grn.edge.b")?,
            w_in: v.get("grn.w_in")?,
            w_out: v.get("grn.w_out")?,
            u_in: v.get("grn.u_in")?,
            u_out: v.get("grn.u_out")?,
            b: v.get("grn.b")?,
            candidate: self.config.grn_candidate.unary(),
        })
    }

    pub fn decoder_vars(&self, g: &mut Graph, v: &ParamVars) -> Result<DecoderVars> {
        let h = self.config.hidden;
        let gm = self.config.graph_memory_dim();
        let out = v.get("out.w")?;
        let rows = |a: usize, b: usize| (a..b).collect::<Vec<_>>();
        let out_s = g.gather_rows(out, &rows(0, h))?;
        let out_z = g.gather_rows(out, &rows(h, 3 * h))?;
        let out_g = if gm > 0 {
            Some(g.gather_rows(out, &rows(3 * h, 3 * h + gm))?)
        } else {
            None
        };
        Ok(DecoderVars {
            tgt_emb: v.get("tgt.emb")?,
            init_w: v.get("dec.init.w")?,
            init_b: v.get("dec.init.b")?,
            lstm: lstm_vars(v, "dec.lstm")?,
            seq_att: attention_vars(v, "att")?,
            graph_att: if gm > 0 { Some(attention_vars(v, "gatt")?) } else { None },
            out_s,
            out_z,
            out_g,
            out_b: v.get("out.b")?,
            feed_graph_context: self.config.feed_graph_context,
        })
    }

    /// Runs the encoders and prepares both attention memories. Dropout is
    /// applied to the memory rows when `rng` is given.
    pub fn encode(
        &self,
        g: &mut Graph,
        v: &ParamVars,
        batch: &Batch,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Encoded> {
        let p = self.config.dropout;
        let enc = bilstm_encode(
            g,
            v.get("src.emb")?,
            &lstm_vars(v, "enc.fwd")?,
            &lstm_vars(v, "enc.bwd")?,
            &batch.src,
        )?;
        let rows = maybe_drop(g, enc.memory, p, &mut rng)?;
        let seq = PreparedMemory::new(g, &attention_vars(v, "att")?, rows, enc.len, enc.mask)?;

        let graph = match self.config.mode {
            Mode::Seq2seq => None,
            Mode::Dual2seq | Mode::Dual2seqSelf => {
                if batch.graphs.len() != batch.size() {
                    return Err(Error::Invalid(format!(
                        "mode {} needs a graph for every example",
                        self.config.mode
                    )));
                }
                let gb = GraphBatch::new(&batch.graphs)?;
                let state = grn_encode(g, &self.grn_vars(v)?, &gb, self.config.steps)?;
                let a = maybe_drop(g, state.a, p, &mut rng)?;
                let rows = graph_memory(g, &gb, a)?;
                Some(PreparedMemory::new(g, &attention_vars(v, "gatt")?, rows, gb.max_nodes, gb.mask)?)
            }
            Mode::Dual2seqLinAmr => {
                let lin = batch.lin.as_ref().ok_or_else(|| {
                    Error::Invalid("mode dual2seq-linamr needs linearized AMR input".into())
                })?;
                let out = bilstm_encode(
                    g,
                    v.get("lin.emb")?,
                    &lstm_vars(v, "lin.fwd")?,
                    &lstm_vars(v, "lin.bwd")?,
                    lin,
                )?;
                let rows = maybe_drop(g, out.memory, p, &mut rng)?;
                Some(PreparedMemory::new(g, &attention_vars(v, "gatt")?, rows, out.len, out.mask)?)
            }
        };
        Ok(Encoded {
            memories: Memories { seq, graph },
            boundary: enc.boundary,
        })
    }

    /// Teacher-forced output distributions, one `B x V` matrix per target
    /// position after `<s>`.
    pub fn forward(
        &self,
        g: &mut Graph,
        v: &ParamVars,
        batch: &Batch,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<StepOutput>> {
        let enc = self.encode(g, v, batch, rng.as_deref_mut())?;
        let dec = self.decoder_vars(g, v)?;
        let mut state = init_state(g, &dec, enc.boundary, &enc.memories)?;
        let mut outputs = Vec::with_capacity(batch.tgt.cols.saturating_sub(1));
        for m in 0..batch.tgt.cols.saturating_sub(1) {
            let prev = batch.tgt.column(m);
            let dropout = rng.as_deref_mut().map(|r| Dropout {
                p: self.config.dropout,
                rng: r,
            });
            let (next, out) = decode_step(g, &dec, &enc.memories, &state, &prev, dropout)?;
            state = next;
            outputs.push(out);
        }
        Ok(outputs)
    }

    /// Beam search for every example, one at a time.
    pub fn translate(&self, examples: &[EncodedExample], opts: BeamOptions) -> Result<Vec<Hypothesis>> {
        (0..examples.len())
            .map(|i| {
                let batch = Batch::from_examples(examples, vec![i])?;
                let mut scorer = BeamScorer::new(self, &batch)?;
                beam_decode(&mut scorer, opts)
            })
            .collect()
    }
}

/// Per-hypothesis decoder state as plain vectors.
#[derive(Clone, Debug)]
pub struct BeamState {
    h: Vec<f64>,
    c: Vec<f64>,
    zeta: Vec<f64>,
    graph_zeta: Option<Vec<f64>>,
}

/// Scores next tokens for one sentence with frozen parameters.
pub struct BeamScorer {
    g: Graph,
    dec: DecoderVars,
    memories: Memories,
    boundary: Var,
    tiled: Option<(usize, Memories)>,
}

impl BeamScorer {
    pub fn new(model: &Model, batch: &Batch) -> Result<Self> {
        if batch.size() != 1 {
            return Err(Error::Invalid("beam search decodes one sentence at a time".into()));
        }
        let mut g = Graph::new();
        let v = model.params.bind_frozen(&mut g);
        let enc = model.encode(&mut g, &v, batch, None)?;
        let dec = model.decoder_vars(&mut g, &v)?;
        Ok(BeamScorer {
            g,
            dec,
            memories: enc.memories,
            boundary: enc.boundary,
            tiled: None,
        })
    }

    fn memories_for(&mut self, k: usize) -> Result<Memories> {
        if let Some((n, m)) = &self.tiled {
            if *n == k {
                return Ok(m.clone());
            }
        }
        let m = self.memories.tile(&mut self.g, k)?;
        self.tiled = Some((k, m.clone()));
        Ok(m)
    }
}

fn stack(g: &mut Graph, rows: &[&[f64]]) -> Var {
    g.constant(Tensor::from_rows(rows))
}

impl StepScorer for BeamScorer {
    type State = BeamState;

    fn initial(&mut self) -> Result<BeamState> {
        let s = init_state(&mut self.g, &self.dec, self.boundary, &self.memories)?;
        let row = |g: &Graph, v: Var| g.value(v).data().to_vec();
        Ok(BeamState {
            h: row(&self.g, s.s.h),
            c: row(&self.g, s.s.c),
            zeta: row(&self.g, s.zeta),
            graph_zeta: s.graph_zeta.map(|v| row(&self.g, v)),
        })
    }

    fn step(&mut self, states: &[BeamState], prev: &[usize]) -> Result<Vec<(Vec<f64>, BeamState)>> {
        let k = states.len();
        let mem = self.memories_for(k)?;
        let g = &mut self.g;
        let h = stack(g, &states.iter().map(|s| s.h.as_slice()).collect::<Vec<_>>());
        let c = stack(g, &states.iter().map(|s| s.c.as_slice()).collect::<Vec<_>>());
        let zeta = stack(g, &states.iter().map(|s| s.zeta.as_slice()).collect::<Vec<_>>());
        let graph_zeta = match states[0].graph_zeta {
            Some(_) => {
                let rows: Vec<&[f64]> = states
                    .iter()
                    .map(|s| s.graph_zeta.as_deref().unwrap_or(&[]))
                    .collect();
                Some(stack(g, &rows))
            }
            None => None,
        };
        let state = DecoderState {
            s: LstmState { h, c },
            zeta,
            graph_zeta,
        };
        let (next, out) = decode_step(g, &self.dec, &mem, &state, prev, None)?;
        let probs = g.value(out.probs);
        let val = |v: Var| g.value(v);
        Ok((0..k)
            .map(|r| {
                let lp = probs.row(r).iter().map(|p| p.ln()).collect();
                let st = BeamState {
                    h: val(next.s.h).row(r).to_vec(),
                    c: val(next.s.c).row(r).to_vec(),
                    zeta: val(next.zeta).row(r).to_vec(),
                    graph_zeta: next.graph_zeta.map(|v| val(v).row(r).to_vec()),
                };
                (lp, st)
            })
            .collect())
    }
}
