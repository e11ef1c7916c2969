//! Python bindings: PENMAN I/O, BPE, BLEU and checkpoint decoding.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use amrnmt::amr::{self, AmrGraph, NodeKind};
use amrnmt::data::{encode_source, join_subwords, learn_bpe as learn, Bpe as CoreBpe, EncodeOptions, Vocabs};
use amrnmt::decoder::BeamOptions;
use amrnmt::model::Model;
use amrnmt::training::Checkpoint;
use amrnmt::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "AmrGraph", module = "pyamrnmt")]
struct PyAmrGraph {
    inner: AmrGraph,
}

#[pymethods]
impl PyAmrGraph {
    /// `(label, kind, variable)` per node, kind one of
    /// `concept`, `string`, `number`, `symbol`.
    fn nodes(&self) -> Vec<(String, &'static str, Option<String>)> {
        self.inner
            .nodes
            .iter()
            .map(|n| {
                let kind = match n.kind {
                    NodeKind::Concept => "concept",
                    NodeKind::StringConstant => "string",
                    NodeKind::NumericConstant => "number",
                    NodeKind::SymbolConstant => "symbol",
                };
                (n.label.clone(), kind, n.variable.clone())
            })
            .collect()
    }

    /// `(source, target, label)` per edge, by node index.
    fn edges(&self) -> Vec<(usize, usize, String)> {
        self.inner.edges.iter().map(|e| (e.src, e.tgt, e.label.clone())).collect()
    }

    #[getter]
    fn root(&self) -> usize {
        self.inner.root
    }

    fn serialize(&self) -> String {
        amr::serialize(&self.inner)
    }

    fn linearize(&self) -> Vec<String> {
        amr::linearize(&self.inner)
    }

    fn same_structure(&self, other: &PyAmrGraph) -> bool {
        self.inner.same_structure(&other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn __repr__(&self) -> String {
        format!("AmrGraph({})", amr::serialize(&self.inner))
    }
}

#[pyfunction]
fn parse_penman(text: &str) -> PyResult<PyAmrGraph> {
    amr::parse_penman(text)
        .map(|inner| PyAmrGraph { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn chain_graph(tokens: Vec<String>) -> PyResult<PyAmrGraph> {
    amr::chain_graph(&tokens).map(|inner| PyAmrGraph { inner }).map_err(py_err)
}

#[pyclass(name = "Bpe", module = "pyamrnmt")]
struct PyBpe {
    inner: CoreBpe,
}

#[pymethods]
impl PyBpe {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CoreBpe::load(&path).map(|inner| PyBpe { inner }).map_err(py_err)
    }

    fn merges(&self) -> Vec<(String, String)> {
        self.inner.merges().to_vec()
    }

    fn segment(&self, word: &str) -> Vec<String> {
        self.inner.segment(word)
    }

    fn apply(&self, line: &str) -> Vec<String> {
        self.inner.apply_line(line)
    }
}

/// Learns merges from whitespace-tokenized lines.
#[pyfunction]
fn learn_bpe(lines: Vec<String>, num_merges: usize) -> PyBpe {
    let merges = learn(lines.iter().flat_map(|l| l.split_whitespace()), num_merges);
    PyBpe { inner: CoreBpe::new(merges) }
}

#[pyfunction]
fn undo_bpe(tokens: Vec<String>) -> String {
    join_subwords(&tokens)
}

/// Corpus BLEU (0 to 100) over whitespace-tokenized lines.
#[pyfunction]
#[pyo3(signature = (candidates, references, max_n = 4))]
fn bleu(candidates: Vec<String>, references: Vec<String>, max_n: usize) -> PyResult<(f64, String)> {
    let split = |v: &[String]| -> Vec<Vec<String>> {
        v.iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect()
    };
    let r = amrnmt::metrics::bleu(&split(&candidates), &split(&references), max_n).map_err(py_err)?;
    Ok((r.bleu, r.to_string()))
}

#[pyclass(name = "Translator", module = "pyamrnmt")]
struct PyTranslator {
    checkpoint: Checkpoint,
    model: Model,
}

#[pymethods]
impl PyTranslator {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        let checkpoint = Checkpoint::load(&path).map_err(py_err)?;
        let model = checkpoint.model().map_err(py_err)?;
        Ok(PyTranslator { checkpoint, model })
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.checkpoint.mode.as_str()
    }

    /// Translates one BPE-segmented source line; `amr` is PENMAN text and
    /// is required exactly when the checkpoint's mode reads AMR graphs.
    #[pyo3(signature = (source, amr = None, beam_size = 5, max_len = 100, normalize = true))]
    fn translate(
        &self,
        source: &str,
        amr: Option<&str>,
        beam_size: usize,
        max_len: usize,
        normalize: bool,
    ) -> PyResult<String> {
        let ck = &self.checkpoint;
        if amr.is_some() != ck.mode.needs_amr() {
            let want = if ck.mode.needs_amr() { "requires" } else { "does not read" };
            return Err(PyValueError::new_err(format!("mode {} {want} an AMR graph", ck.mode)));
        }
        let graph = amr
            .map(amr::parse_penman)
            .transpose()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let tokens: Vec<&str> = source.split_whitespace().collect();
        let vocabs = Vocabs { src: &ck.vocabs.src, tgt: &ck.vocabs.tgt, graph: ck.vocabs.graph.as_ref() };
        let opts = EncodeOptions { max_len: 0, max_neighbors: ck.training.max_neighbors, view: ck.mode.view() };
        let ex = encode_source(&tokens, graph.as_ref(), &vocabs, &opts).map_err(py_err)?;
        let beam = BeamOptions { beam_size, max_len, normalize };
        let hyp = self.model.translate(std::slice::from_ref(&ex), beam).map_err(py_err)?.remove(0);
        Ok(join_subwords(&ck.vocabs.tgt.decode(hyp.output())))
    }

    fn parameter_count(&self) -> usize {
        self.model.params.count()
    }
}

#[pymodule]
fn pyamrnmt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAmrGraph>()?;
    m.add_class::<PyBpe>()?;
    m.add_class::<PyTranslator>()?;
    m.add_function(wrap_pyfunction!(parse_penman, m)?)?;
    m.add_function(wrap_pyfunction!(chain_graph, m)?)?;
    m.add_function(wrap_pyfunction!(learn_bpe, m)?)?;
    m.add_function(wrap_pyfunction!(undo_bpe, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    Ok(())
}
