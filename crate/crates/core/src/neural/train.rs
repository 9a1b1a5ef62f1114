use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::module::{accumulate, zeros_like, Module};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::eval::metrics::selection_score;
use crate::forest::argmax;
use crate::seed;

/// Optimization and recurrent-architecture settings. Defaults are the best
/// published values for the recurrent model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::recurrent()
    }
}

impl TrainConfig {
    pub fn recurrent() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 16,
            lstm_layers: 2,
            dropout: 0.1,
            hidden_dim: 128,
            patience: 10,
            max_epochs: 100,
            seed: 0,
        }
    }

    /// Contextual encoder preset; `hidden_dim` is the model width.
    pub fn contextual() -> Self {
        TrainConfig {
            learning_rate: 3e-6,
            batch_size: 8,
            lstm_layers: 0,
            dropout: 0.1,
            hidden_dim: 128,
            patience: 10,
            max_epochs: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and hidden_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) || !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "invalid dropout {} or learning rate {}",
                self.dropout, self.learning_rate
            )));
        }
        Ok(())
    }

    /// `layers` is omitted when zero (the contextual family has no LSTM).
    pub fn describe(&self) -> String {
        let layers = if self.lstm_layers > 0 {
            format!(" layers={}", self.lstm_layers)
        } else {
            String::new()
        };
        format!(
            "lr={:e} batch={}{layers} dropout={} hidden={}",
            self.learning_rate, self.batch_size, self.dropout, self.hidden_dim
        )
    }
}

/// A model that can be fitted by [`train`]. `Params` holds the trainable
/// tensors and doubles as the gradient buffer type.
pub trait Trainable: Sync {
    type Input: Sync;
    type Params: Module + Clone + Send + Sync;

    fn trainable(&self) -> &Self::Params;
    fn trainable_mut(&mut self) -> &mut Self::Params;

    /// Loss on one example; parameter gradients are added into `grads`.
    /// `rng` drives dropout.
    fn loss_and_grad(
        &self,
        input: &Self::Input,
        gold: usize,
        rng: &mut ChaCha8Rng,
        grads: &mut Self::Params,
    ) -> Result<f64>;

    /// Inference-mode logits.
    fn logits(&self, input: &Self::Input) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
}

/// Examples per gradient chunk. The batch is cut into fixed chunks whose
/// gradients are summed in chunk order, so results do not depend on the
/// number of worker threads.
const GRAD_CHUNKS: usize = 4;

const TAG_SHUFFLE: u64 = 0x5348_5546;
const TAG_DROPOUT: u64 = 0x4452_4f50;

fn batch_gradient<M: Trainable>(
    model: &M,
    batch: &[usize],
    data: &[(M::Input, usize)],
    config: &TrainConfig,
    epoch: usize,
    buffers: &mut [M::Params],
) -> Result<f64> {
    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let losses: Vec<Result<f64>> = buffers
        .par_iter_mut()
        .zip(batch.par_chunks(chunk))
        .map(|(buf, idx)| {
            buf.zero_();
            let mut total = 0.0;
            for &i in idx {
                let mut rng = seed::rng_at(config.seed, &[TAG_DROPOUT, epoch as u64, i as u64]);
                let (input, gold) = &data[i];
                total += model.loss_and_grad(input, *gold, &mut rng, buf)?;
            }
            Ok(total)
        })
        .collect();
    let used = batch.len().div_ceil(chunk);
    let mut loss = 0.0;
    for l in losses {
        loss += l?;
    }
    let (head, tail) = buffers.split_at_mut(1);
    for b in &tail[..used - 1] {
        accumulate(&mut head[0], b);
    }
    let n = batch.len() as f64;
    for (_, t) in head[0].params_mut() {
        t.scale(1.0 / n);
    }
    Ok(loss / n)
}

/// Predicted label indices for every input.
pub fn predict_all<M: Trainable>(model: &M, inputs: &[(M::Input, usize)]) -> Result<Vec<usize>> {
    inputs
        .par_iter()
        .map(|(x, _)| model.logits(x).map(|l| argmax(&l)))
        .collect()
}

/// Mini-batch Adam training with early stopping on the validation score
/// (mean of micro and macro F1). The parameters of the best epoch are kept.
/// Training stops once `patience` consecutive epochs fail to improve the
/// score, or after `max_epochs`.
pub fn train<M: Trainable>(
    model: &mut M,
    train_set: &[(M::Input, usize)],
    val_set: &[(M::Input, usize)],
    n_labels: usize,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty".into()));
    }
    let mut adam = Adam::new(config.learning_rate);
    let mut buffers: Vec<M::Params> = (0..GRAD_CHUNKS).map(|_| zeros_like(model.trainable())).collect();
    let golds: Vec<usize> = val_set.iter().map(|(_, y)| *y).collect();
    let mut best = model.trainable().clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_score: f64::NEG_INFINITY,
    };
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng_at(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let loss = batch_gradient(model, batch, train_set, config, epoch, &mut buffers)?;
            if !loss.is_finite() || !buffers[0].params().iter().all(|(_, t)| t.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(model.trainable_mut(), &buffers[0]);
        }
        let preds = predict_all(model, val_set)?;
        let (micro, macro_, score) = selection_score(&preds, &golds, n_labels)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_micro_f1: micro,
            val_macro_f1: macro_,
            val_score: score,
        });
        if score > history.best_score {
            history.best_score = score;
            history.best_epoch = epoch;
            best = model.trainable().clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }
    *model.trainable_mut() = best;
    Ok(history)
}

/// Learning-rate/batch/layers/dropout grid for the recurrent model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentGrid {
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub lstm_layers: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for RecurrentGrid {
    fn default() -> Self {
        RecurrentGrid {
            learning_rate: vec![1e-4, 5e-4, 1e-5],
            batch_size: vec![16, 32],
            lstm_layers: vec![1, 2],
            dropout: vec![0.0, 0.1],
        }
    }
}

impl RecurrentGrid {
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rate {
            for &batch_size in &self.batch_size {
                for &lstm_layers in &self.lstm_layers {
                    for &dropout in &self.dropout {
                        out.push(TrainConfig {
                            learning_rate,
                            batch_size,
                            lstm_layers,
                            dropout,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Learning-rate grid for the contextual model; batch size is fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualGrid {
    pub learning_rate: Vec<f64>,
    pub batch_size: usize,
}

impl Default for ContextualGrid {
    fn default() -> Self {
        ContextualGrid {
            learning_rate: vec![3e-5, 3e-6, 3e-7],
            batch_size: 8,
        }
    }
}

impl ContextualGrid {
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        self.learning_rate
            .iter()
            .map(|&learning_rate| TrainConfig {
                learning_rate,
                batch_size: self.batch_size,
                ..base.clone()
            })
            .collect()
    }
}
