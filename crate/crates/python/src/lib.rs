//! Python bindings: load or train a model, score and decode spans, evaluate.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use typespan::app::{self, load_checkpoint, load_dataset, load_run_config, save_checkpoint, synth_dataset, Lineage, RunConfig, SynthSpec};
use typespan::decoder::{self, DecodeConfig, DecodeMode, EntityMention};
use typespan::tokenizer::split_words as split;
use typespan::trainer::{self, TrainingExample};

create_exception!(typespan, TypespanError, PyValueError);

fn err(e: typespan::Error) -> PyErr {
    TypespanError::new_err(e.to_string())
}

type Mention = (usize, usize, String, f64);
type Gold = (usize, usize, String);

fn decode_config(threshold: f64, mode: &str, multi_label: bool) -> PyResult<DecodeConfig> {
    let mode: DecodeMode = mode.parse().map_err(err)?;
    let cfg = DecodeConfig { mode, threshold, multi_label };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn mentions_out(ms: Vec<EntityMention>) -> Vec<Mention> {
    ms.into_iter().map(|m| (m.start, m.end, m.label, m.score)).collect()
}

/// A sentence given either as raw text or as pre-split words.
#[derive(FromPyObject)]
enum Words {
    Text(String),
    Split(Vec<String>),
}

impl Words {
    fn into_vec(self) -> Vec<String> {
        match self {
            Words::Text(t) => split(&t),
            Words::Split(w) => w,
        }
    }
}

/// Span-by-type probabilities for one sentence.
#[pyclass(module = "typespan", frozen)]
struct ScoreTable(typespan::ScoreTable);

#[pymethods]
impl ScoreTable {
    #[getter]
    fn num_words(&self) -> usize {
        self.0.num_words
    }

    #[getter]
    fn types(&self) -> Vec<String> {
        self.0.types.clone()
    }

    /// Inclusive `(start, end)` word offsets, one per row.
    #[getter]
    fn spans(&self) -> Vec<(usize, usize)> {
        self.0.spans.iter().map(|s| (s.start, s.end)).collect()
    }

    /// Row-major probabilities, one row per span and one column per type.
    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs.clone()
    }

    #[pyo3(signature = (threshold=0.5, mode="flat", multi_label=false))]
    fn decode(&self, threshold: f64, mode: &str, multi_label: bool) -> PyResult<Vec<Mention>> {
        let cfg = decode_config(threshold, mode, multi_label)?;
        Ok(mentions_out(decoder::decode(&self.0, &cfg).map_err(err)?.mentions))
    }

    fn __repr__(&self) -> String {
        format!("ScoreTable(num_words={}, spans={}, types={:?})", self.0.num_words, self.0.spans.len(), self.0.types)
    }
}

/// A trained recognizer.
#[pyclass(module = "typespan", frozen)]
struct Model {
    inner: typespan::Model,
    lineage: Lineage,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, lineage) = load_checkpoint(&path).map_err(err)?;
        Ok(Self { inner, lineage })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        let (inner, lineage) = app::from_bytes(data).map_err(err)?;
        Ok(Self { inner, lineage })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner, &self.lineage).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = app::to_bytes(&self.inner, &self.lineage).map_err(err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    #[getter]
    fn max_types(&self) -> usize {
        self.inner.config.max_types
    }

    #[getter]
    fn max_width(&self) -> usize {
        self.inner.config.heads.max_width
    }

    #[getter]
    fn steps(&self) -> usize {
        self.lineage.steps
    }

    fn score_table(&self, py: Python<'_>, words: Words, types: Vec<String>) -> PyResult<ScoreTable> {
        let words = words.into_vec();
        let table = py.detach(|| self.inner.score_table(&words, &types)).map_err(err)?;
        Ok(ScoreTable(table))
    }

    /// Mentions as `(start, end, type, score)` with inclusive word offsets.
    #[pyo3(signature = (words, types, threshold=0.5, mode="flat", multi_label=false))]
    fn predict(
        &self,
        py: Python<'_>,
        words: Words,
        types: Vec<String>,
        threshold: f64,
        mode: &str,
        multi_label: bool,
    ) -> PyResult<Vec<Mention>> {
        let cfg = decode_config(threshold, mode, multi_label)?;
        let words = words.into_vec();
        let ms = py.detach(|| self.inner.predict(&words, &types, &cfg)).map_err(err)?;
        Ok(mentions_out(ms))
    }
}

/// Trains from a run config file (or defaults). Returns the model and the
/// per-step mean losses.
#[pyfunction]
#[pyo3(signature = (config=None, steps=None, seed=None))]
fn train(py: Python<'_>, config: Option<PathBuf>, steps: Option<usize>, seed: Option<u64>) -> PyResult<(Model, Vec<f64>)> {
    let mut run = match &config {
        Some(p) => load_run_config(p).map_err(err)?,
        None => RunConfig::default(),
    };
    run.training.steps = steps.unwrap_or(run.training.steps);
    run.seed = seed.unwrap_or(run.seed);
    let result = py
        .detach(|| {
            let (train, dev) = match &run.train {
                Some(p) => (load_dataset(p)?, run.dev.as_deref().map(load_dataset).transpose()?.unwrap_or_default()),
                None => synth_dataset(&run.synth, run.seed)?,
            };
            trainer::fit(&train, &dev, &run.training, run.seed)
        })
        .map_err(err)?;
    let losses = result.trace.iter().map(|r| r.loss).collect();
    let lineage = Lineage { seed: run.seed, steps: run.training.steps };
    Ok((Model { inner: result.model, lineage }, losses))
}

/// Synthetic `(train, dev)` sentences as `(words, [(start, end, type)])`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn synth_data(seed: u64) -> PyResult<(Vec<(Vec<String>, Vec<Gold>)>, Vec<(Vec<String>, Vec<Gold>)>)> {
    let (train, dev) = synth_dataset(&SynthSpec::default(), seed).map_err(err)?;
    let conv = |xs: Vec<TrainingExample>| {
        xs.into_iter()
            .map(|x| (x.words, x.gold.into_iter().map(|m| (m.start, m.end, m.label)).collect()))
            .collect()
    };
    Ok((conv(train), conv(dev)))
}

#[pyfunction]
fn split_words(text: &str) -> Vec<String> {
    split(text)
}

/// Exact-match precision, recall and F1 over aligned sentences.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, pred: Vec<Vec<Gold>>, gold: Vec<Vec<Gold>>) -> PyResult<Bound<'py, PyDict>> {
    let conv = |xs: Vec<Vec<Gold>>| -> Vec<Vec<EntityMention>> {
        xs.into_iter().map(|s| s.into_iter().map(|(a, b, l)| EntityMention::new(a, b, l, 1.0)).collect()).collect()
    };
    let report = typespan::score(&conv(pred), &conv(gold)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("precision", report.precision)?;
    d.set_item("recall", report.recall)?;
    d.set_item("f1", report.f1)?;
    d.set_item("tp", report.tp)?;
    d.set_item("fp", report.fp)?;
    d.set_item("fn", report.fn_)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "typespan")]
fn typespan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<ScoreTable>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(synth_data, m)?)?;
    m.add_function(wrap_pyfunction!(split_words, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("TypespanError", m.py().get_type::<TypespanError>())?;
    Ok(())
}
