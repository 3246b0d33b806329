//! Minibatch Adam on the penalized objective.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::{neg_objective_grad, noise, Batch};
use super::{CmavaeModel, ModelConfig};
use crate::dataset::Dataset;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Reparameterized draws per unit per step.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 100,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mc_samples: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::Config("batch_size and mc_samples must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Config("Adam moments must lie in [0, 1) and eps be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: CmavaeModel,
    /// Epoch mean of `−ℱ` per unit, excluding the weight penalty.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

/// Initializes a model from `train.seed` and fits it to `data`.
pub fn train(data: &Dataset, model: &ModelConfig, train: &TrainConfig) -> Result<TrainedModel> {
    train.validate()?;
    model.check_dataset(data)?;
    let init = CmavaeModel::new(model.clone(), &mut rng::seeded(train.seed))?;
    train_from(init, data, train)
}

/// Continues training an existing model.
pub fn train_from(mut model: CmavaeModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    model.config().check_dataset(data)?;
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let dz = model.config().arch.z_dim;
    let mut adam = Adam::new(model.n_params());
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    let mut grad = vec![0.0; model.n_params()];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = Batch::rows(data, idx);
            let bsz = idx.len() as f64;
            let scale = 1.0 / (bsz * cfg.mc_samples as f64);
            grad.fill(0.0);
            for _ in 0..cfg.mc_samples {
                let eps = noise(&mut r, idx.len(), dz);
                let (loss, g) = neg_objective_grad(&model, &batch, eps.view()).map_err(|e| at_step(e, steps))?;
                epoch_loss += loss / cfg.mc_samples as f64;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b * scale;
                }
            }
            if cfg.weight_decay > 0.0 {
                for (a, &p) in grad.iter_mut().zip(model.params()) {
                    *a += 2.0 * cfg.weight_decay * p;
                }
            }
            adam.step(cfg, model.params_mut(), &grad);
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite {
                    term: "parameters".into(),
                    step: steps,
                });
            }
            steps += 1;
        }
        trace.push(epoch_loss / data.n() as f64);
    }
    Ok(TrainedModel {
        model,
        loss_trace: trace,
        steps,
    })
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NonFinite { term, .. } => Error::NonFinite { term, step },
        other => other,
    }
}
