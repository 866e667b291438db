use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::loss_and_grad_batch;
use super::MlpModel;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Seeds the per-epoch minibatch shuffles.
    pub seed: u64,
    /// Epochs after which a copy of the model is kept; 0 means the initial model.
    pub snapshot_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr: 0.01,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            snapshot_epochs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub snapshots: Vec<(usize, MlpModel)>,
}

/// Minibatch SGD with optional heavy-ball momentum and L2 weight decay.
pub fn train_sgd(init: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Precondition("cannot train on an empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Precondition("batch_size must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Precondition(format!(
            "learning rate {} is not a finite non-negative number",
            cfg.lr
        )));
    }
    if data.dim() != init.input_dim() || data.num_classes > init.num_classes() {
        return Err(Error::Dimension(format!(
            "dataset ({} inputs, {} classes) does not fit model {:?}",
            data.dim(),
            data.num_classes,
            init.layer_dims()
        )));
    }
    let mut model = init.clone();
    let mut snapshots = Vec::new();
    if cfg.snapshot_epochs.contains(&0) {
        snapshots.push((0, model.clone()));
    }
    let mut velocity = vec![0.0; model.num_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut r = rng::seeded(cfg.seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let (l, g) = loss_and_grad_batch(&model, &data.inputs, &data.labels, idx)?;
            if !l.is_finite() {
                return Err(Error::Training { epoch, loss: l });
            }
            total += l;
            batches += 1;
            let w = if cfg.weight_decay != 0.0 { Some(model.to_flat()) } else { None };
            for (i, (v, gi)) in velocity.iter_mut().zip(&g).enumerate() {
                let decay = w.as_ref().map_or(0.0, |w| cfg.weight_decay * w[i]);
                *v = cfg.momentum * *v + gi + decay;
            }
            model.add_flat(-cfg.lr, &velocity);
        }
        let mean = total / batches as f64;
        if !model.is_finite() {
            return Err(Error::Training { epoch, loss: f64::NAN });
        }
        epoch_losses.push(mean);
        if cfg.snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, model.clone()));
        }
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
        snapshots,
    })
}
