//! AMR graphs: PENMAN I/O, linearization, chain graphs and capped
//! neighbor lists.

mod adjacency;
mod graph;
mod linear;
mod penman;

use std::path::Path;

pub use adjacency::{adjacency, Adjacency, CapReport, Neighbor};
pub use graph::{AmrEdge, AmrGraph, AmrNode, NodeKind};
pub use linear::{delinearize, linearize};
pub use penman::{
    parse_penman, parse_penman_file, parse_penman_with, serialize, ParseError, ParseOptions,
};

use crate::error::{Error, Result};

pub const CHAIN_LABEL: &str = ":next";

/// A path graph over `tokens`: node `i` links to node `i + 1` by `:next`.
pub fn chain_graph<S: AsRef<str>>(tokens: &[S]) -> Result<AmrGraph> {
    if tokens.is_empty() {
        return Err(Error::Empty("chain graph tokens"));
    }
    let nodes = tokens
        .iter()
        .map(|t| AmrNode {
            label: t.as_ref().to_string(),
            kind: NodeKind::Concept,
            variable: None,
        })
        .collect();
    let edges = (1..tokens.len())
        .map(|i| AmrEdge {
            src: i - 1,
            tgt: i,
            label: CHAIN_LABEL.to_string(),
        })
        .collect();
    AmrGraph::new(nodes, edges, 0)
}

pub fn read_amr_file(path: &Path) -> Result<Vec<AmrGraph>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_penman_file(&text, ParseOptions::default())?)
}

/// Writes one canonical single-line graph per line.
pub fn write_amr_file(path: &Path, graphs: &[AmrGraph]) -> Result<()> {
    let mut text = String::new();
    for g in graphs {
        text.push_str(&serialize(g));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
