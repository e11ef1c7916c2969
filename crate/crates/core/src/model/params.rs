use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Gradients, Graph, Tensor, Var};

/// Uniform init range for weights and embeddings.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Uniform,
    Zero,
    /// Zero except block `block` of `blocks`, which is set to 1.
    ForgetBias { block: usize, blocks: usize },
}

/// Name -> tensor map; iteration order is the name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

fn lstm_specs(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, input: usize, hidden: usize) {
    out.push((format!("{prefix}.wx"), vec![input, 4 * hidden], Init::Uniform));
    out.push((format!("{prefix}.wh"), vec![hidden, 4 * hidden], Init::Uniform));
    out.push((
        format!("{prefix}.b"),
        vec![4 * hidden],
        Init::ForgetBias { block: 1, blocks: 4 },
    ));
}

fn attention_specs(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, mem: usize, query: usize, dim: usize) {
    out.push((format!("{prefix}.mem.w"), vec![mem, dim], Init::Uniform));
    out.push((format!("{prefix}.query.w"), vec![query, dim], Init::Uniform));
    out.push((format!("{prefix}.b"), vec![dim], Init::Zero));
    out.push((format!("{prefix}.v"), vec![dim, 1], Init::Uniform));
}

/// Every parameter of a configuration with its shape, in creation order.
fn specs(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (e, h, gd) = (c.embed, c.hidden, c.graph_hidden);
    let mut s = Vec::new();
    s.push(("src.emb".to_string(), vec![c.src_vocab, e], Init::Uniform));
    lstm_specs(&mut s, "enc.fwd", e, h);
    lstm_specs(&mut s, "enc.bwd", e, h);
    match c.mode {
        Mode::Seq2seq => {}
        Mode::Dual2seq | Mode::Dual2seqSelf => {
            s.push(("grn.node_emb".into(), vec![c.graph_vocab, e], Init::Uniform));
            s.push(("grn.edge_emb".into(), vec![c.graph_vocab, e], Init::Uniform));
            s.push(("grn.edge.w".into(), vec![2 * e, e], Init::Uniform));
            s.push(("grn.edge.b".into(), vec![e], Init::Zero));
            s.push(("grn.w_in".into(), vec![e, 4 * gd], Init::Uniform));
            s.push(("grn.w_out".into(), vec![e, 4 * gd], Init::Uniform));
            s.push(("grn.u_in".into(), vec![gd, 4 * gd], Init::Uniform));
            s.push(("grn.u_out".into(), vec![gd, 4 * gd], Init::Uniform));
            s.push((
                "grn.b".into(),
                vec![4 * gd],
                Init::ForgetBias { block: 2, blocks: 4 },
            ));
        }
        Mode::Dual2seqLinAmr => {
            s.push(("lin.emb".into(), vec![c.graph_vocab, e], Init::Uniform));
            lstm_specs(&mut s, "lin.fwd", e, h);
            lstm_specs(&mut s, "lin.bwd", e, h);
        }
    }
    let gm = c.graph_memory_dim();
    s.push(("tgt.emb".into(), vec![c.tgt_vocab, e], Init::Uniform));
    s.push(("dec.init.w".into(), vec![2 * h, h], Init::Uniform));
    s.push(("dec.init.b".into(), vec![h], Init::Zero));
    let fed = if c.feed_graph_context { gm } else { 0 };
    lstm_specs(&mut s, "dec.lstm", e + 2 * h + fed, h);
    attention_specs(&mut s, "att", 2 * h, h, h);
    if gm > 0 {
        attention_specs(&mut s, "gatt", gm, h, h);
    }
    s.push(("out.w".into(), vec![h + 2 * h + gm, c.tgt_vocab], Init::Uniform));
    s.push(("out.b".into(), vec![c.tgt_vocab], Init::Zero));
    s
}

impl ModelParams {
    /// Fresh parameters: uniform in `[-INIT_SCALE, INIT_SCALE)` for weights,
    /// zero biases, forget-gate biases at 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed, &[0x494e_4954]);
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in specs(config) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = match init {
                Init::Uniform => (0..n).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect(),
                Init::Zero => vec![0.0; n],
                Init::ForgetBias { block, blocks } => {
                    let w = n / blocks;
                    (0..n).map(|i| if i / w == block { 1.0 } else { 0.0 }).collect()
                }
            };
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(ModelParams { tensors })
    }

    /// Checks that names and shapes are exactly those of `config`.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let want = specs(config);
        if want.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                want.len(),
                self.tensors.len()
            )));
        }
        for (name, shape, _) in want {
            match self.tensors.get(&name) {
                None => return Err(Error::Config(format!("missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::Config(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        ModelParams { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.tensors.insert(name.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Binds every parameter as a trainable leaf.
    pub fn bind(&self, g: &mut Graph) -> ParamVars {
        self.bind_with(g, true)
    }

    /// Binds every parameter as a constant (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> ParamVars {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph, train: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let v = if train { g.param(t.clone()) } else { g.constant(t.clone()) };
                (k.clone(), v)
            })
            .collect();
        ParamVars { vars }
    }
}

/// Parameters bound into one graph.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Pairs names with already-bound variables.
    pub fn from_named<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Var)>) -> Self {
        ParamVars {
            vars: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("model has no parameter {name}")))
    }

    /// Gradient of every bound parameter, by name.
    pub fn gradients(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| (k.clone(), grads.take(v)))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}
