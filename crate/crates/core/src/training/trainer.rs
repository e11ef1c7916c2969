use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, clip_global_norm, AdamState};
use super::loss::{output_probs, sequence_loss};
use crate::data::{make_batches, sequential_batches, Batch, EncodedExample};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::numerics::{seeded_rng, Graph, Tensor};

/// Optimization and data-side hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip: Option<f64>,
    pub bucketing: bool,
    pub max_len: usize,
    pub max_neighbors: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0005,
            batch_size: 128,
            epochs: 30,
            seed: 1,
            clip: Some(5.0),
            bucketing: true,
            max_len: 50,
            max_neighbors: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u64,
    /// Token-weighted mean of the batch losses.
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub seconds: f64,
}

impl EpochStats {
    /// `epoch  train_loss  dev_loss  seconds`, tab separated.
    pub fn tsv(&self) -> String {
        let dev = self.dev_loss.map_or("nan".to_string(), |d| format!("{d:.6}"));
        format!("{}\t{:.6}\t{}\t{:.2}", self.epoch, self.train_loss, dev, self.seconds)
    }
}

/// Owns the model and optimizer state. Batch order and dropout masks are
/// functions of `(seed, epoch, batch index)` only, so a resumed run
/// continues exactly like an uninterrupted one.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamState,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u64,
    pub best_dev_loss: Option<f64>,
    pub best_params: Option<ModelParams>,
}

const DROPOUT_STREAM: u64 = 0x4452_4f50;

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        Trainer {
            optimizer: AdamState::new(config.lr),
            model,
            config,
            epoch: 0,
            best_dev_loss: None,
            best_params: None,
        }
    }

    /// Loss and parameter gradients for one batch.
    pub fn gradients(&self, batch: &Batch, stream: Option<(u64, u64)>) -> Result<(f64, BTreeMap<String, Tensor>)> {
        let mut g = Graph::new();
        let vars = self.model.params.bind(&mut g);
        let mut rng = stream.map(|(e, b)| seeded_rng(self.config.seed, &[DROPOUT_STREAM, e, b]));
        let outputs = self.model.forward(&mut g, &vars, batch, rng.as_mut())?;
        let loss = sequence_loss(&mut g, &output_probs(&outputs), &batch.tgt)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Invalid(format!("non-finite training loss {value}")));
        }
        let mut grads = g.backward(loss)?;
        Ok((value, vars.gradients(&mut grads)))
    }

    /// One optimizer update; returns the batch loss before the update.
    pub fn train_step(&mut self, batch: &Batch, epoch: u64, index: u64) -> Result<f64> {
        let stream = (self.model.config.dropout > 0.0).then_some((epoch, index));
        let (loss, mut grads) = self.gradients(batch, stream)?;
        if let Some(max) = self.config.clip {
            clip_global_norm(&mut grads, max);
        }
        adam_step(&mut self.model.params, &grads, &mut self.optimizer)?;
        Ok(loss)
    }

    /// Mean per-token loss without dropout.
    pub fn evaluate(&self, examples: &[EncodedExample]) -> Result<f64> {
        evaluate(&self.model, examples, self.config.batch_size)
    }

    /// Runs the next epoch and, when `dev` is non-empty, evaluates on it
    /// and remembers the best parameters.
    pub fn run_epoch(&mut self, train: &[EncodedExample], dev: &[EncodedExample]) -> Result<EpochStats> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let batches = make_batches(train, self.config.batch_size, self.config.seed, epoch, self.config.bucketing)?;
        if batches.is_empty() {
            return Err(Error::Empty("training set after filtering"));
        }
        let (mut total, mut tokens) = (0.0, 0usize);
        for (i, b) in batches.iter().enumerate() {
            let loss = self.train_step(b, epoch, i as u64)?;
            total += loss * b.target_tokens() as f64;
            tokens += b.target_tokens();
        }
        self.epoch = epoch;
        let dev_loss = if dev.is_empty() {
            None
        } else {
            Some(self.evaluate(dev)?)
        };
        if let Some(d) = dev_loss {
            if self.best_dev_loss.map_or(true, |b| d < b) {
                self.best_dev_loss = Some(d);
                self.best_params = Some(self.model.params.clone());
            }
        }
        Ok(EpochStats {
            epoch,
            train_loss: total / tokens as f64,
            dev_loss,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// The best model by dev loss, or the current one if none was scored.
    pub fn best_model(&self) -> Model {
        match &self.best_params {
            Some(p) => Model {
                config: self.model.config.clone(),
                params: p.clone(),
            },
            None => self.model.clone(),
        }
    }
}

/// Token-weighted mean loss over `examples` with frozen parameters.
pub fn evaluate(model: &Model, examples: &[EncodedExample], batch_size: usize) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for b in sequential_batches(examples, batch_size)? {
        let mut g = Graph::new();
        let vars = model.params.bind_frozen(&mut g);
        let outputs = model.forward(&mut g, &vars, &b, None)?;
        let loss = sequence_loss(&mut g, &output_probs(&outputs), &b.tgt)?;
        total += g.value(loss).item() * b.target_tokens() as f64;
        tokens += b.target_tokens();
    }
    if tokens == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(total / tokens as f64)
}
