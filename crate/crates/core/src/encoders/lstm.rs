use std::rc::Rc;

use crate::data::Padded;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Gate order in the fused weights: input, forget, output, candidate.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    /// `d_in x 4h`
    pub wx: Var,
    /// `h x 4h`
    pub wh: Var,
    /// `4h`
    pub b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, rows: usize, hidden: usize) -> Self {
        LstmState {
            h: g.constant(Tensor::zeros(&[rows, hidden])),
            c: g.constant(Tensor::zeros(&[rows, hidden])),
        }
    }
}

impl LstmVars {
    pub fn hidden(&self, g: &Graph) -> usize {
        g.shape(self.wh)[0]
    }

    /// `x . wx + b` for a block of inputs.
    pub fn project(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xw = g.matmul(x, self.wx)?;
        g.add_row(xw, self.b)
    }

    /// One step given the projected input `xw` (bias included).
    pub fn step(&self, g: &mut Graph, xw: Var, state: LstmState) -> Result<LstmState> {
        let h = self.hidden(g);
        let hw = g.matmul(state.h, self.wh)?;
        let gates = g.add(xw, hw)?;
        let i = g.slice_cols(gates, 0, h)?;
        let f = g.slice_cols(gates, h, 2 * h)?;
        let o = g.slice_cols(gates, 2 * h, 3 * h)?;
        let u = g.slice_cols(gates, 3 * h, 4 * h)?;
        let (i, f, o, u) = (g.sigmoid(i), g.sigmoid(f), g.sigmoid(o), g.tanh(u));
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, u)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Keeps the old state on rows whose `keep` entry is 0.
fn blend(g: &mut Graph, new: LstmState, old: LstmState, keep: &Rc<[f64]>) -> Result<LstmState> {
    if keep.iter().all(|&k| k == 1.0) {
        return Ok(new);
    }
    Ok(LstmState {
        h: g.row_blend(new.h, old.h, keep.clone())?,
        c: g.row_blend(new.c, old.c, keep.clone())?,
    })
}

pub struct BiLstmOutput {
    /// `(B*L) x 2h`, row `b*L + t` is `[h<-_t; h->_t]` of example `b`.
    pub memory: Var,
    /// `B x 2h`: final backward state (at the first token) and final
    /// forward state (at the last real token).
    pub boundary: Var,
    pub len: usize,
    pub mask: Vec<bool>,
}

/// Runs both directions over padded ids. Padding never enters a state:
/// the forward pass carries its state through trailing pads and the
/// backward pass starts from zero at each row's last real token.
pub fn bilstm_encode(
    g: &mut Graph,
    emb: Var,
    fwd: &LstmVars,
    bwd: &LstmVars,
    ids: &Padded,
) -> Result<BiLstmOutput> {
    let (b, l) = (ids.rows, ids.cols);
    if b == 0 || l == 0 || ids.lengths.contains(&0) {
        return Err(Error::Empty("encoder input sequence"));
    }
    let hidden = fwd.hidden(g);
    let time_major: Vec<usize> = (0..l).flat_map(|t| ids.column(t)).collect();
    let x = g.gather_rows(emb, &time_major)?;
    let xf = fwd.project(g, x)?;
    let xb = bwd.project(g, x)?;
    let keep: Vec<Rc<[f64]>> = (0..l)
        .map(|t| {
            ids.column_mask(t)
                .into_iter()
                .map(|m| if m { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let rows = |t: usize| (t * b..(t + 1) * b).collect::<Vec<_>>();

    let mut state = LstmState::zeros(g, b, hidden);
    let mut fwd_h = Vec::with_capacity(l);
    for t in 0..l {
        let xw = g.gather_rows(xf, &rows(t))?;
        let new = fwd.step(g, xw, state)?;
        state = blend(g, new, state, &keep[t])?;
        fwd_h.push(state.h);
    }
    let last = state.h;

    let mut state = LstmState::zeros(g, b, hidden);
    let mut bwd_h = vec![state.h; l];
    for t in (0..l).rev() {
        let xw = g.gather_rows(xb, &rows(t))?;
        let new = bwd.step(g, xw, state)?;
        state = blend(g, new, state, &keep[t])?;
        bwd_h[t] = state.h;
    }
    let first = state.h;

    let fwd_all = g.concat(&fwd_h, 0)?;
    let bwd_all = g.concat(&bwd_h, 0)?;
    let both = g.concat(&[bwd_all, fwd_all], 1)?;
    let batch_major: Vec<usize> = (0..b).flat_map(|r| (0..l).map(move |t| t * b + r)).collect();
    let memory = g.gather_rows(both, &batch_major)?;
    let boundary = g.concat(&[first, last], 1)?;
    Ok(BiLstmOutput {
        memory,
        boundary,
        len: l,
        mask: ids.mask.clone(),
    })
}
