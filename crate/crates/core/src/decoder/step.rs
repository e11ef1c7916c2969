use rand_chacha::ChaCha8Rng;

use super::attention::{attend, AttentionVars, PreparedMemory};
use crate::encoders::{LstmState, LstmVars};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Decoder parameters bound into a graph. The output projection is held as
/// row blocks of one matrix so the graph-context block can be dropped
/// without touching the others.
#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub tgt_emb: Var,
    pub init_w: Var,
    pub init_b: Var,
    /// Input is `[e_y; zeta]`, or `[e_y; zeta; graph zeta]` when the graph
    /// context is fed back.
    pub lstm: LstmVars,
    pub seq_att: AttentionVars,
    pub graph_att: Option<AttentionVars>,
    /// Rows of the output matrix for `s`, `zeta` and the graph context.
    pub out_s: Var,
    pub out_z: Var,
    pub out_g: Option<Var>,
    pub out_b: Var,
    pub feed_graph_context: bool,
}

#[derive(Clone, Debug)]
pub struct Memories {
    pub seq: PreparedMemory,
    pub graph: Option<PreparedMemory>,
}

impl Memories {
    pub fn tile(&self, g: &mut Graph, k: usize) -> Result<Self> {
        Ok(Memories {
            seq: self.seq.tile(g, k)?,
            graph: self.graph.as_ref().map(|m| m.tile(g, k)).transpose()?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub s: LstmState,
    pub zeta: Var,
    pub graph_zeta: Option<Var>,
}

fn check_modes(p: &DecoderVars, mem: &Memories) -> Result<()> {
    if p.graph_att.is_some() != mem.graph.is_some() || p.out_g.is_some() != mem.graph.is_some() {
        return Err(Error::Invalid(
            "decoder and memories disagree on whether a graph memory is present".into(),
        ));
    }
    Ok(())
}

/// `s_0 = W_1 [h<-_first; h->_last] + b_1`, zero cell and zero contexts.
pub fn init_state(g: &mut Graph, p: &DecoderVars, boundary: Var, mem: &Memories) -> Result<DecoderState> {
    check_modes(p, mem)?;
    let rows = g.shape(boundary)[0];
    let sw = g.matmul(boundary, p.init_w)?;
    let h = g.add_row(sw, p.init_b)?;
    let c = g.constant(Tensor::zeros(g.shape(h)));
    let zeta = g.constant(Tensor::zeros(&[rows, g.shape(mem.seq.rows)[1]]));
    let graph_zeta = mem
        .graph
        .as_ref()
        .map(|m| {
            let d = g.shape(m.rows)[1];
            g.constant(Tensor::zeros(&[rows, d]))
        });
    Ok(DecoderState {
        s: LstmState { h, c },
        zeta,
        graph_zeta,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub scores: Var,
    pub alpha: Var,
    pub graph_scores: Option<Var>,
    pub graph_alpha: Option<Var>,
    pub probs: Var,
}

/// Values of one decoder step, copied out of the graph.
#[derive(Clone, Debug)]
pub struct DecoderStepTrace {
    pub s: Tensor,
    pub scores: Tensor,
    pub alpha: Tensor,
    pub zeta: Tensor,
    pub graph_scores: Option<Tensor>,
    pub graph_alpha: Option<Tensor>,
    pub graph_zeta: Option<Tensor>,
    pub probs: Tensor,
}

impl DecoderStepTrace {
    pub fn new(g: &Graph, state: &DecoderState, out: &StepOutput) -> Self {
        let val = |v: Var| g.value(v).clone();
        DecoderStepTrace {
            s: val(state.s.h),
            scores: val(out.scores),
            alpha: val(out.alpha),
            zeta: val(state.zeta),
            graph_scores: out.graph_scores.map(val),
            graph_alpha: out.graph_alpha.map(val),
            graph_zeta: state.graph_zeta.map(val),
            probs: val(out.probs),
        }
    }
}

/// Dropout probability and the stream its masks are drawn from.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn drop(g: &mut Graph, x: Var, dropout: &mut Option<Dropout<'_>>) -> Result<Var> {
    match dropout {
        Some(d) => g.dropout(x, d.p, d.rng),
        None => Ok(x),
    }
}

/// Feeds `prev` (one token id per row) and returns the new state and the
/// output distribution.
pub fn decode_step(
    g: &mut Graph,
    p: &DecoderVars,
    mem: &Memories,
    state: &DecoderState,
    prev: &[usize],
    mut dropout: Option<Dropout<'_>>,
) -> Result<(DecoderState, StepOutput)> {
    check_modes(p, mem)?;
    let emb = g.gather_rows(p.tgt_emb, prev)?;
    let mut input = vec![emb, state.zeta];
    if p.feed_graph_context {
        if let Some(gz) = state.graph_zeta {
            input.push(gz);
        }
    }
    let x = g.concat(&input, 1)?;
    let xw = p.lstm.project(g, x)?;
    let s = p.lstm.step(g, xw, state.s)?;

    let seq = attend(g, &p.seq_att, &mem.seq, s.h)?;
    let graph = match (&p.graph_att, &mem.graph) {
        (Some(ga), Some(gm)) => Some(attend(g, ga, gm, s.h)?),
        _ => None,
    };

    let s_out = drop(g, s.h, &mut dropout)?;
    let z_out = drop(g, seq.context, &mut dropout)?;
    let a = g.matmul(s_out, p.out_s)?;
    let b = g.matmul(z_out, p.out_z)?;
    let mut logits = g.add(a, b)?;
    if let (Some(att), Some(w)) = (&graph, p.out_g) {
        let gz = drop(g, att.context, &mut dropout)?;
        let c = g.matmul(gz, w)?;
        logits = g.add(logits, c)?;
    }
    let logits = g.add_row(logits, p.out_b)?;
    let probs = g.softmax_rows(logits, None)?;
    Ok((
        DecoderState {
            s,
            zeta: seq.context,
            graph_zeta: graph.map(|a| a.context),
        },
        StepOutput {
            scores: seq.scores,
            alpha: seq.alpha,
            graph_scores: graph.map(|a| a.scores),
            graph_alpha: graph.map(|a| a.alpha),
            probs,
        },
    ))
}
