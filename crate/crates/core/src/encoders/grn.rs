use std::rc::Rc;

use crate::data::GraphInput;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Unary, Var};

/// Graph encoder parameters. Gate blocks in the fused matrices are ordered
/// input, output, forget, candidate.
#[derive(Clone, Copy, Debug)]
pub struct GrnVars {
    pub node_emb: Var,
    pub edge_emb: Var,
    /// `W4`, `(d_l + d_e) x d_x`
    pub edge_w: Var,
    pub edge_b: Var,
    /// `d_x x 4g`, applied to summed incoming edge inputs.
    pub w_in: Var,
    pub w_out: Var,
    /// `g x 4g`, applied to summed incoming neighbor states.
    pub u_in: Var,
    pub u_out: Var,
    pub b: Var,
    pub candidate: Unary,
}

impl GrnVars {
    pub fn state_dim(&self, g: &Graph) -> usize {
        g.shape(self.u_in)[0]
    }
}

/// Several graphs flattened into one node list with per-example offsets.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub node_ids: Vec<usize>,
    pub edge_label_ids: Vec<usize>,
    pub edge_src: Vec<usize>,
    /// `(node, edge)`: kept incoming / outgoing edges of each node.
    pub in_edges: Rc<[(usize, usize)]>,
    pub out_edges: Rc<[(usize, usize)]>,
    /// `(node, neighbor)` for the same kept edges.
    pub in_nbrs: Rc<[(usize, usize)]>,
    pub out_nbrs: Rc<[(usize, usize)]>,
    /// `(b * max_nodes + position, node)`, the attention-memory layout.
    pub slots: Rc<[(usize, usize)]>,
    pub graphs: usize,
    pub max_nodes: usize,
    /// `graphs x max_nodes`
    pub mask: Vec<bool>,
}

impl GraphBatch {
    pub fn new(inputs: &[GraphInput]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("graph batch"));
        }
        let max_nodes = inputs.iter().map(GraphInput::node_count).max().unwrap_or(0);
        if inputs.iter().any(|x| x.node_count() == 0) {
            return Err(Error::Empty("graph with no nodes"));
        }
        let mut out = GraphBatch {
            node_ids: Vec::new(),
            edge_label_ids: Vec::new(),
            edge_src: Vec::new(),
            in_edges: Rc::from([]),
            out_edges: Rc::from([]),
            in_nbrs: Rc::from([]),
            out_nbrs: Rc::from([]),
            slots: Rc::from([]),
            graphs: inputs.len(),
            max_nodes,
            mask: vec![false; inputs.len() * max_nodes],
        };
        let (mut in_e, mut out_e, mut in_n, mut out_n, mut slots) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (b, x) in inputs.iter().enumerate() {
            let (nodes, edges) = (out.node_ids.len(), out.edge_label_ids.len());
            out.node_ids.extend_from_slice(&x.node_ids);
            out.edge_label_ids.extend_from_slice(&x.edge_label_ids);
            out.edge_src.extend(x.edge_src.iter().map(|s| s + nodes));
            for j in 0..x.node_count() {
                for nb in &x.adjacency.incoming[j] {
                    in_e.push((nodes + j, edges + nb.edge));
                    in_n.push((nodes + j, nodes + nb.node));
                }
                for nb in &x.adjacency.outgoing[j] {
                    out_e.push((nodes + j, edges + nb.edge));
                    out_n.push((nodes + j, nodes + nb.node));
                }
                slots.push((b * max_nodes + j, nodes + j));
                out.mask[b * max_nodes + j] = true;
            }
        }
        out.in_edges = in_e.into();
        out.out_edges = out_e.into();
        out.in_nbrs = in_n.into();
        out.out_nbrs = out_n.into();
        out.slots = slots.into();
        Ok(out)
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_label_ids.len()
    }
}

/// `W4 [e_l; e_{v_i}] + b4` for every edge `(i, j, l)`; `E x d_x`.
pub fn edge_repr(g: &mut Graph, p: &GrnVars, batch: &GraphBatch) -> Result<Var> {
    let labels = g.gather_rows(p.edge_emb, &batch.edge_label_ids)?;
    let sources: Vec<usize> = batch.edge_src.iter().map(|&s| batch.node_ids[s]).collect();
    let nodes = g.gather_rows(p.node_emb, &sources)?;
    let x = g.concat(&[labels, nodes], 1)?;
    let xw = g.matmul(x, p.edge_w)?;
    g.add_row(xw, p.edge_b)
}

/// Step-invariant inputs of the transition.
#[derive(Clone, Copy, Debug)]
pub struct EdgeInputs {
    /// Summed incoming / outgoing edge representations, `N x d_x`.
    pub phi_in: Var,
    pub phi_out: Var,
    /// `phi_in W_in + phi_out W_out + b`, `N x 4g`.
    pub projected: Var,
}

pub fn edge_inputs(g: &mut Graph, p: &GrnVars, batch: &GraphBatch) -> Result<EdgeInputs> {
    let x = edge_repr(g, p, batch)?;
    let n = batch.node_count();
    let phi_in = g.scatter_add_rows(x, batch.in_edges.clone(), n)?;
    let phi_out = g.scatter_add_rows(x, batch.out_edges.clone(), n)?;
    let a = g.matmul(phi_in, p.w_in)?;
    let b = g.matmul(phi_out, p.w_out)?;
    let ab = g.add(a, b)?;
    let projected = g.add_row(ab, p.b)?;
    Ok(EdgeInputs {
        phi_in,
        phi_out,
        projected,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct GraphState {
    /// Node states, `N x g`.
    pub a: Var,
    pub c: Var,
    pub step: usize,
}

impl GraphState {
    pub fn zeros(g: &mut Graph, nodes: usize, dim: usize) -> Self {
        GraphState {
            a: g.constant(Tensor::zeros(&[nodes, dim])),
            c: g.constant(Tensor::zeros(&[nodes, dim])),
            step: 0,
        }
    }
}

/// One synchronous transition: every node reads only the previous
/// snapshot of its neighbors.
pub fn grn_step(
    g: &mut Graph,
    p: &GrnVars,
    batch: &GraphBatch,
    inputs: &EdgeInputs,
    state: GraphState,
) -> Result<GraphState> {
    let d = p.state_dim(g);
    let n = batch.node_count();
    let psi_in = g.scatter_add_rows(state.a, batch.in_nbrs.clone(), n)?;
    let psi_out = g.scatter_add_rows(state.a, batch.out_nbrs.clone(), n)?;
    let hi = g.matmul(psi_in, p.u_in)?;
    let ho = g.matmul(psi_out, p.u_out)?;
    let h = g.add(hi, ho)?;
    let gates = g.add(inputs.projected, h)?;
    let i = g.slice_cols(gates, 0, d)?;
    let o = g.slice_cols(gates, d, 2 * d)?;
    let f = g.slice_cols(gates, 2 * d, 3 * d)?;
    let u = g.slice_cols(gates, 3 * d, 4 * d)?;
    let (i, o, f) = (g.sigmoid(i), g.sigmoid(o), g.sigmoid(f));
    let u = g.unary(p.candidate, u);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, u)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let a = g.mul(o, tc)?;
    Ok(GraphState {
        a,
        c,
        step: state.step + 1,
    })
}

/// `steps` transitions from the all-zero state.
pub fn grn_encode(g: &mut Graph, p: &GrnVars, batch: &GraphBatch, steps: usize) -> Result<GraphState> {
    if steps == 0 {
        return Err(Error::Invalid("graph encoder needs at least one transition step".into()));
    }
    let inputs = edge_inputs(g, p, batch)?;
    let mut state = GraphState::zeros(g, batch.node_count(), p.state_dim(g));
    for _ in 0..steps {
        state = grn_step(g, p, batch, &inputs, state)?;
    }
    Ok(state)
}

/// Node states laid out as `(graphs * max_nodes) x g` attention memory.
pub fn graph_memory(g: &mut Graph, batch: &GraphBatch, states: Var) -> Result<Var> {
    g.scatter_add_rows(states, batch.slots.clone(), batch.graphs * batch.max_nodes)
}
