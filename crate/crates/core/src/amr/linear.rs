use super::graph::{AmrEdge, AmrGraph, AmrNode, NodeKind};
use crate::error::{Error, Result};

pub const OPEN: &str = "(";
pub const CLOSE: &str = ")";

/// Depth-first token sequence without variables. Nodes with children are
/// bracketed; leaves and reentrant revisits emit only their label.
pub fn linearize(g: &AmrGraph) -> Vec<String> {
    let children = g.out_edges();
    let mut visited = vec![false; g.nodes.len()];
    let mut out = Vec::new();
    // explicit stack: (node, next child cursor)
    let mut stack: Vec<(usize, usize)> = Vec::new();

    let mut enter = |i: usize, out: &mut Vec<String>, stack: &mut Vec<(usize, usize)>| {
        if visited[i] || children[i].is_empty() {
            visited[i] = true;
            out.push(g.nodes[i].label.clone());
        } else {
            visited[i] = true;
            out.push(OPEN.to_string());
            out.push(g.nodes[i].label.clone());
            stack.push((i, 0));
        }
    };

    enter(g.root, &mut out, &mut stack);
    while let Some(top) = stack.last_mut() {
        let (node, cursor) = *top;
        if cursor == children[node].len() {
            out.push(CLOSE.to_string());
            stack.pop();
            continue;
        }
        top.1 += 1;
        let edge = &g.edges[children[node][cursor]];
        out.push(edge.label.clone());
        enter(edge.tgt, &mut out, &mut stack);
    }
    out
}

/// Rebuilds a tree from [`linearize`] output. Every label occurrence
/// becomes its own node, so reentrancies come back unfolded.
pub fn delinearize<S: AsRef<str>>(tokens: &[S]) -> Result<AmrGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut pos = 0;

    fn item<S: AsRef<str>>(
        tokens: &[S],
        pos: &mut usize,
        nodes: &mut Vec<AmrNode>,
        edges: &mut Vec<AmrEdge>,
    ) -> Result<usize> {
        let tok = tokens
            .get(*pos)
            .ok_or(Error::Empty("linearized AMR"))?
            .as_ref();
        *pos += 1;
        let bracketed = tok == OPEN;
        let label = if bracketed {
            let l = tokens
                .get(*pos)
                .ok_or_else(|| Error::Invalid("missing label after '('".into()))?;
            *pos += 1;
            l.as_ref()
        } else {
            tok
        };
        if label == OPEN || label == CLOSE || label.starts_with(':') {
            return Err(Error::Invalid(format!("unexpected token '{label}'")));
        }
        let kind = if label.parse::<f64>().is_ok() {
            NodeKind::NumericConstant
        } else {
            NodeKind::Concept
        };
        nodes.push(AmrNode {
            label: label.to_string(),
            kind,
            variable: None,
        });
        let idx = nodes.len() - 1;
        if bracketed {
            loop {
                let t = tokens
                    .get(*pos)
                    .ok_or_else(|| Error::Invalid("missing ')'".into()))?
                    .as_ref();
                *pos += 1;
                if t == CLOSE {
                    break;
                }
                if !t.starts_with(':') {
                    return Err(Error::Invalid(format!("expected role, found '{t}'")));
                }
                let role = t.to_string();
                let child = item(tokens, pos, nodes, edges)?;
                edges.push(AmrEdge {
                    src: idx,
                    tgt: child,
                    label: role,
                });
            }
        }
        Ok(idx)
    }

    let root = item(tokens, &mut pos, &mut nodes, &mut edges)?;
    if pos != tokens.len() {
        return Err(Error::Invalid("trailing tokens after linearized AMR".into()));
    }
    AmrGraph::new(nodes, edges, root)
}
