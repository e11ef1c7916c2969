//! PENMAN reader and canonical writer.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::graph::{AmrEdge, AmrGraph, AmrNode, NodeKind};

/// Bare constants that are legal AMR values and never variables.
const KNOWN_SYMBOLS: &[&str] = &["-", "+", "imperative", "expressive", "interrogative"];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        ParseError {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Reject bare symbols that are neither defined variables, numbers, nor
    /// well-known AMR constants.
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Slash,
    Role(&'a str),
    Quoted(String),
    Symbol(&'a str),
}

#[derive(Clone, Debug)]
struct Token<'a> {
    tok: Tok<'a>,
    offset: usize,
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | '/')
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut line_start = true;
    while i < text.len() {
        let c = text[i..].chars().next().expect("in bounds");
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if c == '#' && line_start {
            while i < text.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        line_start = false;
        let start = i;
        match c {
            '(' => {
                tokens.push(Token { tok: Tok::Open, offset: start });
                i += 1;
            }
            ')' => {
                tokens.push(Token { tok: Tok::Close, offset: start });
                i += 1;
            }
            '/' => {
                tokens.push(Token { tok: Tok::Slash, offset: start });
                i += 1;
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                let mut closed = false;
                while i < text.len() {
                    let ch = text[i..].chars().next().expect("in bounds");
                    i += ch.len_utf8();
                    match ch {
                        '\\' if i < text.len() => {
                            let esc = text[i..].chars().next().expect("in bounds");
                            i += esc.len_utf8();
                            s.push(esc);
                        }
                        '"' => {
                            closed = true;
                            break;
                        }
                        _ => s.push(ch),
                    }
                }
                if !closed {
                    return Err(ParseError::new(start, "unterminated string"));
                }
                tokens.push(Token { tok: Tok::Quoted(s), offset: start });
            }
            _ => {
                while i < text.len() {
                    let ch = text[i..].chars().next().expect("in bounds");
                    if is_delim(ch) {
                        break;
                    }
                    i += ch.len_utf8();
                }
                let word = &text[start..i];
                let tok = if word.starts_with(':') {
                    if word.len() == 1 {
                        return Err(ParseError::new(start, "empty role"));
                    }
                    Tok::Role(word)
                } else {
                    Tok::Symbol(word)
                };
                tokens.push(Token { tok, offset: start });
            }
        }
    }
    Ok(tokens)
}

fn is_numeric(s: &str) -> bool {
    let mut chars = s.chars();
    let first_ok = match chars.next() {
        Some(c) if c.is_ascii_digit() => true,
        Some('-' | '+' | '.') => chars.next().is_some_and(|c| c.is_ascii_digit() || c == '.'),
        _ => false,
    };
    first_ok && s.parse::<f64>().is_ok()
}

struct Parser<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    end_offset: usize,
    defined: HashSet<&'a str>,
    strict: bool,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    var_index: HashMap<String, usize>,
    expanded: HashSet<usize>,
}

impl<'t, 'a> Parser<'t, 'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end_offset, |t| t.offset)
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn node_for_var(&mut self, var: &str) -> usize {
        if let Some(&idx) = self.var_index.get(var) {
            return idx;
        }
        self.nodes.push(AmrNode {
            label: String::new(),
            kind: NodeKind::Concept,
            variable: Some(var.to_string()),
        });
        let idx = self.nodes.len() - 1;
        self.var_index.insert(var.to_string(), idx);
        idx
    }

    /// Parses `( var / concept :role target ... )`, returning the node index.
    fn node(&mut self) -> Result<usize, ParseError> {
        let open = self.next().ok_or_else(|| ParseError::new(self.end_offset, "expected '('"))?;
        if open.tok != Tok::Open {
            return Err(ParseError::new(open.offset, "expected '('"));
        }
        let var_tok = self
            .next()
            .ok_or_else(|| ParseError::new(self.end_offset, "expected variable"))?;
        let var = match var_tok.tok {
            Tok::Symbol(s) => s,
            _ => return Err(ParseError::new(var_tok.offset, "expected variable")),
        };
        match self.peek() {
            Some(Token { tok: Tok::Slash, .. }) => {
                self.pos += 1;
            }
            _ => {
                return Err(ParseError::new(
                    self.offset(),
                    format!("missing '/' after variable '{var}'"),
                ))
            }
        }
        let concept_tok = self
            .next()
            .ok_or_else(|| ParseError::new(self.end_offset, "expected concept"))?;
        let concept = match concept_tok.tok {
            Tok::Symbol(s) => s.to_string(),
            Tok::Quoted(s) => s,
            _ => return Err(ParseError::new(concept_tok.offset, "expected concept")),
        };
        let idx = self.node_for_var(var);
        if !self.expanded.insert(idx) {
            return Err(ParseError::new(
                var_tok.offset,
                format!("variable '{var}' defined twice"),
            ));
        }
        self.nodes[idx].label = concept;

        loop {
            let tok = self
                .next()
                .ok_or_else(|| ParseError::new(self.end_offset, "unbalanced parentheses: missing ')'"))?;
            match tok.tok {
                Tok::Close => return Ok(idx),
                Tok::Role(role) => {
                    // reserve the slot so edges keep role order in the text
                    let slot = self.edges.len();
                    self.edges.push(AmrEdge {
                        src: idx,
                        tgt: usize::MAX,
                        label: role.to_string(),
                    });
                    self.edges[slot].tgt = self.target()?;
                }
                _ => return Err(ParseError::new(tok.offset, "expected role or ')'")),
            }
        }
    }

    fn target(&mut self) -> Result<usize, ParseError> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| ParseError::new(self.end_offset, "missing role target"))?;
        match tok.tok {
            Tok::Open => self.node(),
            Tok::Quoted(s) => {
                self.pos += 1;
                self.nodes.push(AmrNode {
                    label: s,
                    kind: NodeKind::StringConstant,
                    variable: None,
                });
                Ok(self.nodes.len() - 1)
            }
            Tok::Symbol(s) => {
                self.pos += 1;
                if self.defined.contains(s) {
                    return Ok(self.node_for_var(s));
                }
                let kind = if is_numeric(s) {
                    NodeKind::NumericConstant
                } else if self.strict && !KNOWN_SYMBOLS.contains(&s) {
                    return Err(ParseError::new(
                        tok.offset,
                        format!("reference to undefined variable '{s}'"),
                    ));
                } else {
                    NodeKind::SymbolConstant
                };
                self.nodes.push(AmrNode {
                    label: s.to_string(),
                    kind,
                    variable: None,
                });
                Ok(self.nodes.len() - 1)
            }
            _ => Err(ParseError::new(tok.offset, "missing role target")),
        }
    }
}

/// Splits a token stream into top-level parenthesized spans.
fn top_level_spans(tokens: &[Token<'_>], text_len: usize) -> Result<Vec<(usize, usize)>, ParseError> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        match t.tok {
            Tok::Open => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            Tok::Close => {
                if depth == 0 {
                    return Err(ParseError::new(t.offset, "unbalanced parentheses: unexpected ')'"));
                }
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ if depth == 0 => {
                return Err(ParseError::new(t.offset, "expected '(' at top level"));
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ParseError::new(text_len, "unbalanced parentheses: missing ')'"));
    }
    Ok(spans)
}

fn parse_span(
    tokens: &[Token<'_>],
    end_offset: usize,
    opts: ParseOptions,
) -> Result<AmrGraph, ParseError> {
    let defined = tokens
        .windows(3)
        .filter_map(|w| match (&w[0].tok, &w[1].tok, &w[2].tok) {
            (Tok::Open, Tok::Symbol(v), Tok::Slash) => Some(*v),
            _ => None,
        })
        .collect();
    let mut p = Parser {
        tokens,
        pos: 0,
        end_offset,
        defined,
        strict: opts.strict,
        nodes: Vec::new(),
        edges: Vec::new(),
        var_index: HashMap::new(),
        expanded: HashSet::new(),
    };
    let root = p.node()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::new(t.offset, "trailing tokens after graph"));
    }
    Ok(AmrGraph {
        nodes: p.nodes,
        edges: p.edges,
        root,
    })
}

/// Parses exactly one PENMAN graph.
pub fn parse_penman(text: &str) -> Result<AmrGraph, ParseError> {
    parse_penman_with(text, ParseOptions::default())
}

pub fn parse_penman_with(text: &str, opts: ParseOptions) -> Result<AmrGraph, ParseError> {
    let tokens = tokenize(text)?;
    let spans = top_level_spans(&tokens, text.len())?;
    match spans.as_slice() {
        [] => Err(ParseError::new(0, "no graph found")),
        [(s, e)] => parse_span(&tokens[*s..*e], text.len(), opts),
        [_, (s, _), ..] => Err(ParseError::new(tokens[*s].offset, "more than one graph")),
    }
}

/// Parses every graph in a file. Accepts blank-line separated multi-line
/// blocks, one graph per line, and `#` comment lines.
pub fn parse_penman_file(text: &str, opts: ParseOptions) -> Result<Vec<AmrGraph>, ParseError> {
    let tokens = tokenize(text)?;
    top_level_spans(&tokens, text.len())?
        .into_iter()
        .map(|(s, e)| {
            let end = tokens.get(e).map_or(text.len(), |t| t.offset);
            parse_span(&tokens[s..e], end, opts)
        })
        .collect()
}

fn needs_quotes(label: &str) -> bool {
    label.is_empty() || label.chars().any(is_delim) || label.starts_with(':')
}

fn write_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// Canonical single-line PENMAN. Each node is expanded at its first
/// depth-first visit; later visits print the variable.
pub fn serialize(g: &AmrGraph) -> String {
    let taken: HashSet<&str> = g.nodes.iter().filter_map(|n| n.variable.as_deref()).collect();
    let mut fresh = 0usize;
    let vars: Vec<String> = g
        .nodes
        .iter()
        .map(|n| match &n.variable {
            Some(v) => v.clone(),
            None => loop {
                let cand = format!("x{fresh}");
                fresh += 1;
                if !taken.contains(cand.as_str()) {
                    break cand;
                }
            },
        })
        .collect();
    let children = g.out_edges();
    let mut visited = vec![false; g.nodes.len()];
    let mut out = String::new();

    fn write(
        i: usize,
        g: &AmrGraph,
        vars: &[String],
        children: &[Vec<usize>],
        visited: &mut [bool],
        out: &mut String,
    ) {
        let node = &g.nodes[i];
        match node.kind {
            NodeKind::StringConstant => return write_quoted(out, &node.label),
            NodeKind::NumericConstant | NodeKind::SymbolConstant => {
                if needs_quotes(&node.label) {
                    write_quoted(out, &node.label);
                } else {
                    out.push_str(&node.label);
                }
                return;
            }
            NodeKind::Concept => {}
        }
        if visited[i] {
            out.push_str(&vars[i]);
            return;
        }
        visited[i] = true;
        out.push('(');
        out.push_str(&vars[i]);
        out.push_str(" / ");
        if needs_quotes(&node.label) {
            write_quoted(out, &node.label);
        } else {
            out.push_str(&node.label);
        }
        for &e in &children[i] {
            let edge = &g.edges[e];
            out.push(' ');
            out.push_str(&edge.label);
            out.push(' ');
            write(edge.tgt, g, vars, children, visited, out);
        }
        out.push(')');
    }

    write(g.root, g, &vars, &children, &mut visited, &mut out);
    out
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}
