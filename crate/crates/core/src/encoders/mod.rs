//! Sequential (BiLSTM) and graph (GRN) encoders.

mod grn;
mod lstm;

pub use grn::{
    edge_inputs, edge_repr, graph_memory, grn_encode, grn_step, EdgeInputs, GraphBatch,
    GraphState, GrnVars,
};
pub use lstm::{bilstm_encode, BiLstmOutput, LstmState, LstmVars};
