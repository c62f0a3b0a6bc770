use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::params::accumulate;
use super::{LossAndGrads, Seq2Seq, TrainConfig};
use crate::corpus::TrainingSample;
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, derived_rng, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the model before any update.
    pub epoch: usize,
    /// Token-averaged training loss with dropout active; absent for epoch 0.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
}

/// Token-averaged loss over `samples` in evaluation mode.
pub fn mean_loss(model: &Seq2Seq, samples: &[&TrainingSample]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| model.loss(&s.input_tokens, &s.target_tokens))
        .collect::<Result<_>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0usize), |(a, b), (l, k)| (a + l, b + k));
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn batch_gradient(
    model: &Seq2Seq,
    batch: &[&TrainingSample],
    seed: u64,
) -> Result<(f64, usize, Vec<Array2<f64>>)> {
    let use_dropout = model.config.dropout > 0.0;
    let parts: Vec<LossAndGrads> = batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng(derive_seed(seed, &[&i.to_string()]));
            let r: Option<&mut dyn rand::RngCore> = if use_dropout { Some(&mut r) } else { None };
            model.loss_and_grads(&s.input_tokens, &s.target_tokens, r, true)
        })
        .collect::<Result<_>>()?;
    let mut grads = model.params.zeros_like();
    let mut loss = 0.0;
    let mut tokens = 0;
    // summed in batch order so the result does not depend on thread scheduling
    for (l, n, g) in parts {
        loss += l;
        tokens += n;
        accumulate(&mut grads, &g.expect("gradients requested"));
    }
    Ok((loss, tokens, grads))
}

/// Mini-batch AdamW training with early stopping on validation loss. On return
/// the model holds the parameters of the best trained epoch; the starting
/// point is only recorded as epoch 0 of the curve.
pub fn train(
    model: &mut Seq2Seq,
    train: &[&TrainingSample],
    val: &[&TrainingSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must both be nonempty".into()));
    }
    let mut opt = AdamW::new(&model.params.names, &model.params.values, cfg.learning_rate, cfg.weight_decay);
    let initial = mean_loss(model, val)?;
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0, detail: format!("initial validation loss {initial}") });
    }
    let mut curve = vec![EpochStats { epoch: 0, train_loss: None, val_loss: initial }];
    let mut best: Option<(usize, f64, super::ParamStore, u64)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        if let (Some(t), Some(b)) = (cfg.stop_below, &best) {
            if b.1 < t {
                break;
            }
        }
        epochs_run = epoch;
        order.shuffle(&mut derived_rng(cfg.seed, &["epoch", &epoch.to_string()]));
        let mut loss_sum = 0.0;
        let mut token_sum = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| train[i]).collect();
            let seed = derive_seed(cfg.seed, &["dropout", &epoch.to_string(), &b.to_string()]);
            let (loss, tokens, mut grads) = batch_gradient(model, &batch, seed)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, detail: format!("batch {b} loss {loss}") });
            }
            if tokens == 0 {
                continue;
            }
            let scale = 1.0 / tokens as f64;
            for g in &mut grads {
                *g *= scale;
            }
            opt.step(&mut model.params.values, &grads);
            model.step += 1;
            loss_sum += loss;
            token_sum += tokens;
        }
        let train_loss = if token_sum == 0 { 0.0 } else { loss_sum / token_sum as f64 };
        let val_loss = mean_loss(model, val)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Divergence { epoch, detail: format!("train loss {train_loss}, validation loss {val_loss}") });
        }
        log::info!("epoch {epoch}: train loss {train_loss:.4}, validation loss {val_loss:.4}");
        curve.push(EpochStats { epoch, train_loss: Some(train_loss), val_loss });
        if best.as_ref().is_none_or(|b| val_loss < b.1) {
            best = Some((epoch, val_loss, model.params.clone(), model.step));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_loss, params, step) = best.expect("at least one epoch runs");
    model.params = params;
    model.step = step;
    Ok(TrainOutcome { curve, best_epoch, best_val_loss, epochs_run })
}
