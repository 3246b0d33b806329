//! Fairness audit: mediated and direct dependence of a binary decision on a
//! sensitive attribute, next to a plain classifier's disparity.

use std::path::Path;

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};

use super::config::{DgpConfig, ExperimentConfig};
use super::run::{effects_seed, prepare, train_config};
use crate::baselines::{demographic_disparity, fit_logistic, LogisticOptions};
use crate::cmavae::{train, ModelConfig};
use crate::dataset::{load_csv, ColumnKind, ColumnRole, Dataset};
use crate::dgp::standin::{census_like, census_schema};
use crate::effects::{estimate_effects, EffectEstimate};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    /// Logistic weight on the sensitive attribute.
    pub treatment_coef: f64,
    /// Disparity of the classifier's test predictions.
    pub dp: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub n_train: usize,
    pub n_eval: usize,
    pub cmavae: EffectEstimate,
    pub classifier: ClassifierReport,
    /// Disparity of the observed test outcomes.
    pub ground_truth_dp: f64,
    pub final_loss: Option<f64>,
}

impl FairnessReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn check_schema(data: &Dataset) -> Result<()> {
    for role in [ColumnRole::Treatment, ColumnRole::Outcome] {
        let spec = data.schema().iter().find(|c| c.role == role).expect("validated schema");
        if spec.kind != ColumnKind::Binary {
            return Err(Error::Schema(format!(
                "fairness column `{}` must be binary, found {:?}",
                spec.name, spec.kind
            )));
        }
    }
    Ok(())
}

/// Loads or generates the audit table described by a `fairness_csv` config.
pub fn fairness_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let DgpConfig::FairnessCsv {
        path,
        columns,
        n,
        scenario,
    } = &cfg.dgp
    else {
        return Err(Error::Config("fairness runs need dgp.kind = \"fairness_csv\"".into()));
    };
    let data = match path {
        Some(p) => load_csv(p, columns.as_deref().unwrap_or(&census_schema()))?,
        None => census_like(*n, derive_seed(cfg.seed, 1), *scenario)?,
    };
    check_schema(&data)?;
    Ok(data)
}

pub fn run_fairness_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<FairnessReport> {
    check_schema(data)?;
    let resolved = cfg.resolved();
    let p = prepare(cfg, data, cfg.seed)?;

    let mc = ModelConfig::for_dataset(&p.train, resolved.arch.clone());
    let fit = train(&p.train, &mc, &train_config(&resolved, cfg.seed))?;
    let cmavae = estimate_effects(
        &fit.model,
        p.eval.x(),
        resolved.draws,
        &mut crate::rng::seeded(effects_seed(cfg.seed)),
    )?;

    let features = |d: &Dataset| {
        concatenate![
            Axis(1),
            d.covariate_design(),
            d.t().insert_axis(Axis(1)),
            d.m().insert_axis(Axis(1))
        ]
    };
    let xtr = features(&p.train);
    let t_col = xtr.ncols() - 2;
    let lr = fit_logistic(xtr.view(), p.train.y(), &LogisticOptions::default())?;
    let y_hat = lr.predict(features(&p.eval).view());

    Ok(FairnessReport {
        n_train: p.train.n(),
        n_eval: p.eval.n(),
        cmavae,
        classifier: ClassifierReport {
            treatment_coef: lr.feature_coef(t_col),
            dp: demographic_disparity(y_hat.view(), p.eval.t())?,
            converged: lr.converged,
        },
        ground_truth_dp: demographic_disparity(p.eval.y(), p.eval.t())?,
        final_loss: fit.loss_trace.last().copied(),
    })
}

/// Fairness audit of the configured table.
pub fn run_fairness(cfg: &ExperimentConfig) -> Result<FairnessReport> {
    cfg.validate()?;
    run_fairness_on(cfg, &fairness_data(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_outcome_is_a_schema_error() {
        let cfg = ExperimentConfig::from_toml_str("[dgp]\nkind = \"fairness_csv\"\n").unwrap();
        let data = crate::dgp::standin::jobs_like(200, 1).unwrap();
        assert!(matches!(run_fairness_on(&cfg, &data), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_dgp_kind() {
        let cfg = ExperimentConfig::from_toml_str("[dgp]\nkind = \"synthetic\"\n").unwrap();
        assert!(fairness_data(&cfg).is_err());
    }
}
