//! Cross-entropy objectives, AdamW, and the training step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{decays, ModelError, Params, TransformerModel};
use super::ops::log_sum_exp;
use super::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Generator training settings: 5 epochs, batch 4, AdamW at 5e-5.
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 4,
            learning_rate: 5e-5,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Classifier training settings: as the generator but 3 epochs.
    pub fn classifier() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(TrainError::InvalidConfig("learning_rate must lie in (0, 1)".into()));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(TrainError::InvalidConfig("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch has no target positions")]
    NoTargets,
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    /// Next-token prediction over the sequence (targets = inputs shifted
    /// left).
    NextToken(&'a [u32]),
    /// Whole-sequence class label.
    Labeled { tokens: &'a [u32], label: usize },
}

fn trim_padding(tokens: &[u32], pad: Option<u32>) -> &[u32] {
    match pad {
        Some(p) => {
            let end = tokens.iter().rposition(|&t| t != p).map_or(0, |i| i + 1);
            &tokens[..end]
        }
        None => tokens,
    }
}

struct Partial {
    loss_sum: f64,
    targets: usize,
    grads: Option<Params>,
}

/// Per-sample loss sum and (optionally) unnormalized gradients. Trailing
/// padding is dropped and PAD targets are excluded from the loss.
fn sample_loss(model: &TransformerModel, sample: &Sample<'_>, pad: Option<u32>, with_grad: bool) -> Result<Partial, ModelError> {
    let empty = Partial {
        loss_sum: 0.0,
        targets: 0,
        grads: None,
    };
    match *sample {
        Sample::NextToken(tokens) => {
            let tokens = trim_padding(tokens, pad);
            if tokens.len() < 2 {
                return Ok(empty);
            }
            let input = &tokens[..tokens.len() - 1];
            let (logits, trace) = model.forward_traced(input)?;
            let mut dlogits = Tensor2::zeros(logits.rows(), logits.cols());
            let mut loss_sum = 0.0;
            let mut targets = 0;
            for t in 0..input.len() {
                let target = tokens[t + 1];
                if Some(target) == pad {
                    continue;
                }
                let row = logits.row(t);
                let lse = log_sum_exp(row);
                loss_sum += lse - row[target as usize];
                targets += 1;
                if with_grad {
                    let d = dlogits.row_mut(t);
                    for (dv, &z) in d.iter_mut().zip(row) {
                        *dv = (z - lse).exp();
                    }
                    d[target as usize] -= 1.0;
                }
            }
            let grads = with_grad.then(|| {
                let mut g = Params::zeros(&model.config);
                model.backward(&trace, &dlogits, &mut g);
                g
            });
            Ok(Partial {
                loss_sum,
                targets,
                grads,
            })
        }
        Sample::Labeled { tokens, label } => {
            let tokens = trim_padding(tokens, pad);
            let (logits, trace) = model.forward_traced(tokens)?;
            let row = logits.row(0);
            let lse = log_sum_exp(row);
            let loss_sum = lse - row[label];
            let grads = with_grad.then(|| {
                let mut d = Tensor2::zeros(1, row.len());
                for (dv, &z) in d.data_mut().iter_mut().zip(row) {
                    *dv = (z - lse).exp();
                }
                d.data_mut()[label] -= 1.0;
                let mut g = Params::zeros(&model.config);
                model.backward(&trace, &d, &mut g);
                g
            });
            Ok(Partial {
                loss_sum,
                targets: 1,
                grads,
            })
        }
    }
}

/// Mean cross-entropy over all target positions in the batch.
pub fn batch_loss(model: &TransformerModel, batch: &[Sample<'_>], pad: Option<u32>) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut n = 0;
    for s in batch {
        let p = sample_loss(model, s, pad, false)?;
        sum += p.loss_sum;
        n += p.targets;
    }
    if n == 0 {
        return Err(TrainError::NoTargets);
    }
    Ok(sum / n as f64)
}

/// Mean cross-entropy and its gradient. Per-sample work runs in parallel;
/// the reduction is sequential in batch order, so results do not depend on
/// thread scheduling.
pub fn loss_and_grad(model: &TransformerModel, batch: &[Sample<'_>], pad: Option<u32>) -> Result<(f64, Params), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let partials: Vec<Partial> = batch
        .par_iter()
        .map(|s| sample_loss(model, s, pad, true))
        .collect::<Result<_, _>>()?;
    let mut total = Params::zeros(&model.config);
    let mut sum = 0.0;
    let mut n = 0;
    for p in &partials {
        sum += p.loss_sum;
        n += p.targets;
        if let Some(g) = &p.grads {
            total.add_assign(g);
        }
    }
    if n == 0 {
        return Err(TrainError::NoTargets);
    }
    total.scale(1.0 / n as f64);
    Ok((sum / n as f64, total))
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Params,
    v: Params,
}

impl AdamW {
    pub fn new(like: &TransformerModel) -> AdamW {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Params::zeros(&like.config),
            v: Params::zeros(&like.config),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut Params, grads: &Params, lr: f64, weight_decay: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        let grads: Vec<&Tensor2> = grads.named().into_iter().map(|(_, t)| t).collect();
        let iter = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
            .zip(&names);
        for ((((p, m), v), g), name) in iter {
            let decay = if decays(name) { weight_decay } else { 0.0 };
            for (((pi, mi), vi), &gi) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * decay * *pi;
                *pi -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Owns a model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: TransformerModel,
    pub config: TrainConfig,
    pub pad: Option<u32>,
    optimizer: AdamW,
}

impl Trainer {
    pub fn new(model: TransformerModel, config: TrainConfig, pad: Option<u32>) -> Result<Trainer, TrainError> {
        config.validate()?;
        let optimizer = AdamW::new(&model);
        Ok(Trainer {
            model,
            config,
            pad,
            optimizer,
        })
    }

    /// One AdamW update. Returns the batch loss measured before the update.
    pub fn train_step(&mut self, batch: &[Sample<'_>]) -> Result<f64, TrainError> {
        let (loss, grads) = loss_and_grad(&self.model, batch, self.pad)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                loss,
                step: self.optimizer.steps() + 1,
            });
        }
        self.optimizer
            .update(&mut self.model.params, &grads, self.config.learning_rate, self.config.weight_decay);
        Ok(loss)
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.steps()
    }

    pub fn into_model(self) -> TransformerModel {
        self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_config(vocab: usize) -> ModelConfig {
        ModelConfig {
            n_embd: 16,
            n_layer: 2,
            n_head: 2,
            n_positions: 16,
            ..ModelConfig::desk_generator(vocab)
        }
    }

    #[test]
    fn memorizes_repeated_sequence() {
        let model = TransformerModel::new(toy_config(6), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(model, cfg, Some(2)).unwrap();
        let seq = [3u32, 4, 5];
        let batch = [Sample::NextToken(&seq)];
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            loss = trainer.train_step(&batch).unwrap();
        }
        assert!(loss < 0.05, "loss {loss}");
    }

    #[test]
    fn untrained_loss_is_near_log_vocab() {
        let vocab = 50;
        let model = TransformerModel::new(toy_config(vocab), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seqs: Vec<Vec<u32>> = (0..8)
            .map(|_| (0..16).map(|_| rng.random_range(3..vocab as u32)).collect())
            .collect();
        let batch: Vec<Sample> = seqs.iter().map(|s| Sample::NextToken(s)).collect();
        let loss = batch_loss(&model, &batch, None).unwrap();
        let expect = (vocab as f64).ln();
        assert!((loss - expect).abs() < 0.05 * expect, "loss {loss} vs {expect}");
    }

    #[test]
    fn padding_is_ignored() {
        let model = TransformerModel::new(toy_config(8), 2).unwrap();
        let a = [0u32, 5, 6, 1];
        let b = [0u32, 5, 6, 1, 2, 2, 2];
        let la = batch_loss(&model, &[Sample::NextToken(&a)], Some(2)).unwrap();
        let lb = batch_loss(&model, &[Sample::NextToken(&b)], Some(2)).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn train_step_is_deterministic() {
        let run = || {
            let model = TransformerModel::new(toy_config(8), 9).unwrap();
            let mut t = Trainer::new(model, TrainConfig::default(), None).unwrap();
            let seqs = [vec![0u32, 3, 4, 5, 1], vec![0, 6, 7, 1]];
            let batch: Vec<Sample> = seqs.iter().map(|s| Sample::NextToken(s)).collect();
            for _ in 0..3 {
                t.train_step(&batch).unwrap();
            }
            t.into_model()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_config_and_batches() {
        let bad = TrainConfig {
            learning_rate: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let model = TransformerModel::new(toy_config(8), 9).unwrap();
        assert_eq!(loss_and_grad(&model, &[], None).unwrap_err(), TrainError::EmptyBatch);
        let single = [0u32];
        assert_eq!(
            loss_and_grad(&model, &[Sample::NextToken(&single)], None).unwrap_err(),
            TrainError::NoTargets
        );
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        // With bias correction the first step is lr * sign(g) (up to eps).
        let cfg = ModelConfig {
            n_embd: 2,
            n_layer: 1,
            n_head: 1,
            n_positions: 2,
            ..ModelConfig::desk_generator(3)
        };
        let model = TransformerModel::new(cfg, 1).unwrap();
        let mut params = model.params.clone();
        let mut grads = Params::zeros(&model.config);
        grads.token_embedding.data_mut()[0] = 0.3;
        grads.token_embedding.data_mut()[1] = -2.0;
        let mut opt = AdamW::new(&model);
        opt.update(&mut params, &grads, 0.01, 0.0);
        let before = model.params.token_embedding.data();
        let after = params.token_embedding.data();
        assert!((before[0] - after[0] - 0.01).abs() < 1e-9);
        assert!((after[1] - before[1] - 0.01).abs() < 1e-9);
        assert_eq!(before[2], after[2]);
    }
}
