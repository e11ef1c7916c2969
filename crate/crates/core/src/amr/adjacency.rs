use serde::{Deserialize, Serialize};

use super::graph::AmrGraph;
use crate::error::{Error, Result};

/// One entry of a node's neighbor list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    /// The node at the other end of the edge.
    pub node: usize,
    /// Index into the graph's edge list (carries the label).
    pub edge: usize,
}

/// Capped incoming/outgoing neighbor lists per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub incoming: Vec<Vec<Neighbor>>,
    pub outgoing: Vec<Vec<Neighbor>>,
    pub report: CapReport,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapReport {
    pub dropped_edges: usize,
    pub capped_nodes: usize,
}

impl Adjacency {
    pub fn node_count(&self) -> usize {
        self.incoming.len()
    }

    pub fn degree(&self, j: usize) -> usize {
        self.incoming[j].len() + self.outgoing[j].len()
    }
}

/// Builds neighbor lists in edge order and caps each node at
/// `max_neighbors`, keeping the earliest incoming edges first and then the
/// earliest outgoing ones.
pub fn adjacency(g: &AmrGraph, max_neighbors: usize) -> Result<Adjacency> {
    if max_neighbors == 0 {
        return Err(Error::Invalid("max_neighbors must be at least 1".into()));
    }
    let n = g.nodes.len();
    let mut incoming = vec![Vec::new(); n];
    let mut outgoing = vec![Vec::new(); n];
    for (idx, e) in g.edges.iter().enumerate() {
        incoming[e.tgt].push(Neighbor { node: e.src, edge: idx });
        outgoing[e.src].push(Neighbor { node: e.tgt, edge: idx });
    }
    let mut report = CapReport::default();
    for j in 0..n {
        let total = incoming[j].len() + outgoing[j].len();
        if total <= max_neighbors {
            continue;
        }
        report.capped_nodes += 1;
        report.dropped_edges += total - max_neighbors;
        incoming[j].truncate(max_neighbors);
        let room = max_neighbors - incoming[j].len();
        outgoing[j].truncate(room);
    }
    Ok(Adjacency {
        incoming,
        outgoing,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::{chain_graph, parse_penman};

    #[test]
    fn star_keeps_first_six() {
        // hub with 3 incoming (via reentrancy) and 5 outgoing edges
        let g = parse_penman(
            "(r / root :a (h / hub :o1 (a / a) :o2 (b / b) :o3 (c / c) :o4 (d / d) :o5 (e / e)) :b h :c h)",
        )
        .unwrap();
        let hub = 1;
        let adj = adjacency(&g, 6).unwrap();
        assert_eq!(adj.degree(hub), 6);
        let kept_in: Vec<_> = adj.incoming[hub].iter().map(|n| n.edge).collect();
        let kept_out: Vec<_> = adj.outgoing[hub].iter().map(|n| n.edge).collect();
        // edges in file order: :a(0) :o1..:o5 (1..=5) :b(6) :c(7)
        assert_eq!(kept_in, [0, 6, 7]);
        assert_eq!(kept_out, [1, 2, 3]);
        assert_eq!(adj.report.dropped_edges, 2);
        assert_eq!(adj.report.capped_nodes, 1);
    }

    #[test]
    fn chain_interior_is_untouched() {
        let g = chain_graph(&["a", "b", "c"]).unwrap();
        let adj = adjacency(&g, 6).unwrap();
        assert_eq!(adj.incoming[1], [Neighbor { node: 0, edge: 0 }]);
        assert_eq!(adj.outgoing[1], [Neighbor { node: 2, edge: 1 }]);
        assert_eq!(adj.report.dropped_edges, 0);
    }

    #[test]
    fn cap_one_prefers_incoming() {
        let g = chain_graph(&["a", "b", "c"]).unwrap();
        let adj = adjacency(&g, 1).unwrap();
        assert_eq!(adj.incoming[1], [Neighbor { node: 0, edge: 0 }]);
        assert!(adj.outgoing[1].is_empty());
        // the first node only has an outgoing edge, which survives
        assert_eq!(adj.outgoing[0].len(), 1);
    }

    #[test]
    fn zero_cap_is_rejected() {
        let g = chain_graph(&["a"]).unwrap();
        assert!(adjacency(&g, 0).is_err());
    }
}
