use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Concept,
    StringConstant,
    NumericConstant,
    /// Bare non-numeric constant such as `-` or `imperative`.
    SymbolConstant,
}

impl NodeKind {
    pub fn is_constant(self) -> bool {
        !matches!(self, NodeKind::Concept)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmrNode {
    pub label: String,
    pub kind: NodeKind,
    /// PENMAN variable for concepts; `None` for constants.
    pub variable: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmrEdge {
    pub src: usize,
    pub tgt: usize,
    pub label: String,
}

/// Rooted, directed, labeled graph. Node order is first-mention order;
/// a reentrant node appears once and is the target of several edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrGraph {
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
    pub root: usize,
}

impl AmrGraph {
    pub fn new(nodes: Vec<AmrNode>, edges: Vec<AmrEdge>, root: usize) -> Result<Self> {
        let g = AmrGraph { nodes, edges, root };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Empty("AMR graph"));
        }
        if self.root >= n {
            return Err(Error::IndexOutOfRange {
                what: "AMR root",
                index: self.root,
                size: n,
            });
        }
        for e in &self.edges {
            if e.src >= n || e.tgt >= n {
                return Err(Error::IndexOutOfRange {
                    what: "AMR edge endpoint",
                    index: e.src.max(e.tgt),
                    size: n,
                });
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.label.as_str())
    }

    pub fn edge_labels(&self) -> impl Iterator<Item = &str> {
        self.edges.iter().map(|e| e.label.as_str())
    }

    /// Outgoing edge indices per node, in edge order.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.src].push(i);
        }
        out
    }

    /// Number of edges targeting each node.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.tgt] += 1;
        }
        deg
    }

    /// Undirected hop distance between every pair of nodes
    /// (`usize::MAX` when disconnected).
    pub fn undirected_distances(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut nbrs = vec![Vec::new(); n];
        for e in &self.edges {
            nbrs[e.src].push(e.tgt);
            nbrs[e.tgt].push(e.src);
        }
        (0..n)
            .map(|start| {
                let mut dist = vec![usize::MAX; n];
                dist[start] = 0;
                let mut queue = std::collections::VecDeque::from([start]);
                while let Some(u) = queue.pop_front() {
                    for &v in &nbrs[u] {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect()
    }

    /// Order-insensitive structural comparison: same node sequence (label,
    /// kind, variable) and the same multiset of edges.
    pub fn same_structure(&self, other: &AmrGraph) -> bool {
        fn edge_bag(g: &AmrGraph) -> BTreeMap<(usize, usize, &str), usize> {
            let mut bag = BTreeMap::new();
            for e in &g.edges {
                *bag.entry((e.src, e.tgt, e.label.as_str())).or_insert(0) += 1;
            }
            bag
        }
        self.nodes == other.nodes && self.root == other.root && edge_bag(self) == edge_bag(other)
    }
}
