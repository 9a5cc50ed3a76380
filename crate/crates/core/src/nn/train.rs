//! Minibatch training loop shared by the base listener and speaker.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Grads, OptimizerConfig, ParamSet, DEFAULT_CLIP_NORM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub clip_norm: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig) -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            optimizer,
            clip_norm: DEFAULT_CLIP_NORM,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Maximize,
    Minimize,
}

impl Goal {
    fn improves(self, new: f64, best: f64) -> bool {
        match self {
            Goal::Maximize => new > best,
            Goal::Minimize => new < best,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Epoch 0 is the untrained model.
    pub epoch: usize,
    /// Mean per-example training loss; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub dev_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub metric: String,
    pub goal: Goal,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Hooks a model supplies to [`fit`].
pub trait Objective {
    /// Adds the summed loss gradient of `batch` to `grads`; returns the summed loss.
    fn batch_loss(&self, params: &ParamSet, batch: &[usize], grads: &mut Grads) -> Result<f64>;
    /// Scores the current parameters on held-out data.
    fn dev_metric(&self, params: &ParamSet) -> Result<f64>;
}

/// Trains `params` on `n_examples` examples and leaves them at the best
/// development checkpoint. `on_best` runs each time the dev metric improves.
/// A non-finite gradient restores the best parameters and returns the error.
pub fn fit<O: Objective>(
    params: &mut ParamSet,
    objective: &O,
    n_examples: usize,
    cfg: &TrainConfig,
    metric: &str,
    goal: Goal,
    mut on_best: impl FnMut(&ParamSet, &EpochStats) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = cfg.optimizer.build(params);
    let initial = EpochStats {
        epoch: 0,
        train_loss: None,
        dev_metric: objective.dev_metric(params)?,
    };
    on_best(params, &initial)?;
    let mut report = TrainReport {
        metric: metric.to_string(),
        goal,
        epochs: vec![initial],
        best_epoch: 0,
        best_metric: initial.dev_metric,
    };
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..n_examples).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = params.zeros_like();
            total += objective.batch_loss(params, batch, &mut grads)?;
            grads.scale(1.0 / batch.len() as f64);
            grads.clip_global_norm(cfg.clip_norm);
            if let Err(e) = optimizer.step(params, &grads) {
                *params = best;
                return Err(e);
            }
        }
        let stats = EpochStats {
            epoch,
            train_loss: Some(total / n_examples.max(1) as f64),
            dev_metric: objective.dev_metric(params)?,
        };
        report.epochs.push(stats);
        if goal.improves(stats.dev_metric, report.best_metric) {
            report.best_epoch = epoch;
            report.best_metric = stats.dev_metric;
            best = params.clone();
            on_best(params, &stats)?;
        }
    }
    *params = best;
    Ok(report)
}
