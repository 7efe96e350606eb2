//! Supervised training: binary cross-entropy, backpropagation through time,
//! Adam with global-norm clipping and finite-difference gradient checks.

mod adam;
mod backward;
mod gradcheck;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Label, WindowedDataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{Gradients, LstmClassifier};
use crate::tensor::Matrix2D;

pub use adam::{Adam, ADAM_EPS};
pub use backward::{backward, backward_from_logit, bce_loss, BinaryCrossEntropy, Objective, BCE_EPS};
pub use gradcheck::{
    compare_gradients, grad_check, relative_error, GradCheckReport, ParamCheck, DEFAULT_DELTA, DEFAULT_TOLERANCE, REL_ERROR_FLOOR,
};

/// Windows per parallel work unit when accumulating a batch gradient. The
/// reduction order depends only on this constant, never on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            grad_clip_norm: 5.0,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0) {
            return Err(Error::config(format!("Adam betas must lie in (0, 1), got ({b1}, {b2})")));
        }
        if self.grad_clip_norm.is_nan() || self.grad_clip_norm <= 0.0 {
            return Err(Error::config(format!(
                "gradient clip norm must be > 0, got {}",
                self.grad_clip_norm
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-window training loss over the epoch.
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (highest test accuracy, earliest
    /// on ties). `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,loss,train_acc,test_acc,seconds";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6}",
                e.epoch, e.loss, e.train_acc, e.test_acc, e.seconds
            );
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|b| self.epochs.get(b - 1))
    }

    /// True when both logs agree on everything except wall-clock time.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.train_acc == b.train_acc
                    && a.test_acc == b.test_acc
            })
    }
}

/// Mean loss and mean gradient over a batch of windows.
///
/// `indices` are positions in the training set and are passed on to the
/// objective. Windows are processed in parallel, but the partial sums are
/// combined in a fixed order so the result is bit-for-bit reproducible.
pub fn batch_gradients<O: Objective + ?Sized>(
    model: &LstmClassifier,
    windows: &[Matrix2D],
    labels: &[Label],
    indices: &[usize],
    objective: &O,
) -> Result<(f64, Gradients)> {
    if indices.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let partials = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| -> Result<(f64, Gradients)> {
            let mut loss = 0.0;
            let mut acc: Option<Gradients> = None;
            for &ix in chunk {
                let (_, trace) = model.forward(&windows[ix])?;
                let (l, dz) = objective.loss_and_grad(ix, trace.logit, labels[ix]);
                let g = backward_from_logit(model, &trace, dz)?;
                loss += l;
                match acc.as_mut() {
                    Some(a) => a.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            Ok((loss, acc.expect("chunk is nonempty")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut parts = partials.into_iter();
    let (mut loss, mut grads) = parts.next().expect("at least one chunk");
    for (l, g) in parts {
        loss += l;
        grads.add_assign(&g);
    }
    let n = indices.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

fn check_compatible(model: &LstmClassifier, ds: &WindowedDataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::config(format!("{what} set is empty")));
    }
    if ds.sensor_set != model.sensor_set {
        return Err(Error::config(format!(
            "{what} set carries sensors {} but the model expects {}",
            ds.sensor_set, model.sensor_set
        )));
    }
    Ok(())
}

/// Trains `model` with binary cross-entropy and returns the snapshot with
/// the best test accuracy together with the per-epoch log.
pub fn train(
    model: &LstmClassifier,
    train_ds: &WindowedDataset,
    test_ds: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(LstmClassifier, TrainLog)> {
    fit(model, train_ds, test_ds, cfg, &BinaryCrossEntropy)
}

/// Training loop shared by plain training and distillation.
pub fn fit<O: Objective + ?Sized>(
    model: &LstmClassifier,
    train_ds: &WindowedDataset,
    test_ds: &WindowedDataset,
    cfg: &TrainConfig,
    objective: &O,
) -> Result<(LstmClassifier, TrainLog)> {
    cfg.validate()?;
    check_compatible(model, train_ds, "training")?;
    check_compatible(model, test_ds, "test")?;

    let mut current = model.clone();
    current.normalization = train_ds.normalization.clone();
    let mut best = current.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut log = TrainLog::default();
    let mut adam = Adam::new(&current.topology, cfg.learning_rate, cfg.adam_betas.0, cfg.adam_betas.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (batch_ix, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, mut grads) =
                batch_gradients(&current, &train_ds.windows, &train_ds.labels, batch, objective)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_ix + 1,
                    loss,
                });
            }
            loss_sum += loss * batch.len() as f64;
            clip_global_norm(&mut grads, cfg.grad_clip_norm);
            adam.update(&mut current.params, &grads);
        }
        let train_acc = evaluate(&current, train_ds)?.accuracy;
        let test_acc = evaluate(&current, test_ds)?.accuracy;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / train_ds.len() as f64,
            train_acc,
            test_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: loss {:.5} train {:.4} test {:.4}",
            record.loss,
            train_acc,
            test_acc
        );
        log.epochs.push(record);
        if test_acc > best_acc {
            best_acc = test_acc;
            best = current.clone();
            log.best_epoch = Some(epoch);
        }
    }
    Ok((best, log))
}

#[cfg(test)]
mod tests;
