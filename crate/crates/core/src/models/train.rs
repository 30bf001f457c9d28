use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::SeedStreams;
use crate::tensor::{Adam, AdamConfig, Graph, NoamSchedule};

use super::model::{batch_loss, Example, Model};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub token_loss: f64,
    pub parse_loss: Option<f64>,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Model plus optimizer state. Dropout masks for step `n` come from the
/// `dropout` stream indexed by `n`, so a resumed run replays exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub schedule: NoamSchedule,
}

impl Trainer {
    pub fn new(model: Model, schedule: NoamSchedule, adam: AdamConfig) -> Self {
        let adam = Adam::new(&model.params, adam);
        Self { model, adam, schedule }
    }

    pub fn resume(model: Model, schedule: NoamSchedule, adam: Adam) -> Result<Self> {
        if adam.m.len() != model.params.len() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        Ok(Self { model, adam, schedule })
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    pub fn step(&mut self, batch: &[Example]) -> Result<StepReport> {
        let step = self.adam.step + 1;
        let lr = self.schedule.rate(step);
        let streams = SeedStreams::new(self.model.config.seed);
        let (loss, token, parse, grads) = {
            let mut g = Graph::training(&self.model.params, streams.indexed("dropout", step));
            let l = batch_loss(&self.model.arch, &self.model.config, &mut g, batch)?;
            let loss = g.value(l.total).item() as f64;
            let token = g.value(l.token).item() as f64;
            let parse = l.parse.map(|p| g.value(p).item() as f64);
            if !loss.is_finite() {
                let first = batch.first().map_or(0, |e| e.line);
                return Err(Error::Numerical(format!(
                    "loss is {loss} at step {step} (token {token}, parse {parse:?}, lr {lr:.3e}, batch from line {first})"
                )));
            }
            let grads = g.backward(l.total)?;
            (loss, token, parse, grads)
        };
        let grad_norm = self.adam.update(&mut self.model.params, &grads, lr)?;
        Ok(StepReport {
            step,
            loss,
            token_loss: token,
            parse_loss: parse,
            lr,
            grad_norm,
        })
    }

    /// Evaluation-mode loss, no update.
    pub fn loss(&self, batch: &[Example]) -> Result<f64> {
        let mut g = Graph::new(&self.model.params);
        let l = batch_loss(&self.model.arch, &self.model.config, &mut g, batch)?;
        Ok(g.value(l.total).item() as f64)
    }
}

/// Shuffles example indices with the `shuffle` stream for `epoch` and
/// groups them into batches of at most `batch_tokens` source plus target
/// tokens (always at least one example per batch).
pub fn epoch_batches(examples: &[Example], batch_tokens: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut SeedStreams::new(seed).indexed("shuffle", epoch));
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    for i in order {
        let n = examples[i].src.len() + examples[i].tgt.len() + examples[i].chunks.len() + 2;
        if !current.is_empty() && tokens + n > batch_tokens {
            batches.push(std::mem::take(&mut current));
            tokens = 0;
        }
        current.push(i);
        tokens += n;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}
