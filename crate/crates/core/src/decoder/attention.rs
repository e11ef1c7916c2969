use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};

/// `e_i = v^T tanh(W_h h_i + W_s s + b)`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// `d_mem x a`
    pub mem_w: Var,
    /// `d_query x a`
    pub query_w: Var,
    pub b: Var,
    /// `a x 1`
    pub v: Var,
}

/// Attention memory for `batch` rows of `len` slots each, with the
/// query-independent projection computed once.
#[derive(Clone, Debug)]
pub struct PreparedMemory {
    /// `(batch*len) x d_mem`
    pub rows: Var,
    /// `(batch*len) x a`, `W_h h_i + b`
    pub proj: Var,
    pub batch: usize,
    pub len: usize,
    /// `batch x len`
    pub mask: Vec<bool>,
}

impl PreparedMemory {
    pub fn new(g: &mut Graph, p: &AttentionVars, rows: Var, len: usize, mask: Vec<bool>) -> Result<Self> {
        let n = g.shape(rows)[0];
        if len == 0 || n % len != 0 || mask.len() != n {
            return Err(Error::shape("attention memory", g.shape(rows), &[len, mask.len()]));
        }
        let hw = g.matmul(rows, p.mem_w)?;
        let proj = g.add_row(hw, p.b)?;
        Ok(PreparedMemory {
            rows,
            proj,
            batch: n / len,
            len,
            mask,
        })
    }

    /// The same memory repeated for `k` rows per original row, used to give
    /// every beam hypothesis its own copy.
    pub fn tile(&self, g: &mut Graph, k: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..self.batch)
            .flat_map(|b| (0..k).flat_map(move |_| b * self.len..(b + 1) * self.len))
            .collect();
        Ok(PreparedMemory {
            rows: g.gather_rows(self.rows, &idx)?,
            proj: g.gather_rows(self.proj, &idx)?,
            batch: self.batch * k,
            len: self.len,
            mask: idx.iter().map(|&i| self.mask[i]).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// Raw scores, `batch x len`.
    pub scores: Var,
    /// Masked softmax of the scores.
    pub alpha: Var,
    /// `batch x d_mem`
    pub context: Var,
}

pub fn attend(g: &mut Graph, p: &AttentionVars, mem: &PreparedMemory, query: Var) -> Result<Attention> {
    if g.shape(query)[0] != mem.batch {
        return Err(Error::shape("attend", g.shape(query), &[mem.batch, mem.len]));
    }
    let q = g.matmul(query, p.query_w)?;
    let q = g.repeat_rows(q, mem.len)?;
    let pre = g.add(mem.proj, q)?;
    let act = g.tanh(pre);
    let e = g.matmul(act, p.v)?;
    let scores = g.reshape(e, &[mem.batch, mem.len])?;
    let alpha = g.softmax_rows(scores, Some(&mem.mask))?;
    let context = g.group_weighted_sum(alpha, mem.rows)?;
    Ok(Attention {
        scores,
        alpha,
        context,
    })
}
