//! Mediation VAE: a treatment-conditional latent-confounder model with
//! auxiliary predictors, trained by maximizing the ELBO plus auxiliary
//! log-likelihoods.

mod model;
mod objective;
mod posterior;
mod train;

pub use model::{Arm, AuxPrediction, CmavaeModel, DiagNormal, Dist1, Net};
pub use objective::{elbo, gaussian_kl, neg_objective_grad, objective_terms, total_objective, Batch, ObjectiveTerms};
pub use posterior::{sample_posterior_batch, sample_posterior_z, PosteriorBatch, PosteriorDraw};
pub use train::{train, train_from, TrainConfig, TrainedModel};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarKind};
use crate::{Error, Result};

/// Network sizes and fixed variances; everything not determined by the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub z_dim: usize,
    pub hidden_layers: usize,
    pub layer_size: usize,
    /// Hidden layers of the two treatment-logit networks.
    pub treatment_hidden_layers: usize,
    pub decoder_mediator_var: f64,
    pub decoder_outcome_var: f64,
    pub aux_mediator_var: f64,
    pub aux_outcome_var: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            z_dim: 10,
            hidden_layers: 5,
            layer_size: 100,
            treatment_hidden_layers: 1,
            decoder_mediator_var: 1.0,
            decoder_outcome_var: 1.0,
            aux_mediator_var: 1.0,
            aux_outcome_var: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Kind of each encoded proxy column.
    pub x_kinds: Vec<VarKind>,
    pub mediator_kind: VarKind,
    pub outcome_kind: VarKind,
    pub arch: Architecture,
}

impl ModelConfig {
    pub fn for_dataset(data: &Dataset, arch: Architecture) -> Self {
        Self {
            x_kinds: data.x_kinds(),
            mediator_kind: data.mediator_kind(),
            outcome_kind: data.outcome_kind(),
            arch,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.x_kinds.len()
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        if self.x_kinds.is_empty() {
            return Err(Error::Config("model needs at least one proxy column".into()));
        }
        if a.z_dim == 0 {
            return Err(Error::Config("z_dim must be at least 1".into()));
        }
        if (a.hidden_layers > 0 || a.treatment_hidden_layers > 0) && a.layer_size == 0 {
            return Err(Error::Config("layer_size must be positive".into()));
        }
        for (name, v) in [
            ("decoder_mediator_var", a.decoder_mediator_var),
            ("decoder_outcome_var", a.decoder_outcome_var),
            ("aux_mediator_var", a.aux_mediator_var),
            ("aux_outcome_var", a.aux_outcome_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Errors unless `data` has the column kinds this model was built for.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.x_kinds() != self.x_kinds {
            return Err(Error::Schema(format!(
                "dataset has {} proxy columns of different kinds than the model's {}",
                data.x_dim(),
                self.x_dim()
            )));
        }
        if data.mediator_kind() != self.mediator_kind || data.outcome_kind() != self.outcome_kind {
            return Err(Error::Schema("mediator or outcome kind differs from the model".into()));
        }
        Ok(())
    }
}
