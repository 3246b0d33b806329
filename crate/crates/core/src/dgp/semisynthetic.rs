//! Resampling simulator with zero true direct, indirect and total effects.
//!
//! Treatment and mediator models are fitted as probits on the base data, the
//! treated or mediated rows are discarded, and pseudo-treatments and
//! pseudo-mediators are simulated on a bootstrap of the remaining rows. Every
//! outcome comes from a row that was neither treated nor mediated, so no
//! simulated variable can affect it.

use ndarray::{concatenate, Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::probit::{fit_probit, ProbitFit, ProbitOptions};
use super::TrueEffects;
use crate::dataset::{ColumnKind, Dataset, VarKind};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemiSynthConfig {
    pub n: usize,
    /// Strength of selection into the mediator.
    pub eta: f64,
    /// Target fraction of units with mediator above the threshold.
    pub share: f64,
    pub mediator_threshold: f64,
    pub seed: u64,
    /// Hand estimators `I{M ≥ threshold}` instead of the continuous mediator.
    pub binarize_mediator: bool,
}

impl Default for SemiSynthConfig {
    fn default() -> Self {
        Self {
            n: 500,
            eta: 1.0,
            share: 0.5,
            mediator_threshold: 3.0,
            seed: 0,
            binarize_mediator: false,
        }
    }
}

impl SemiSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("semisynthetic n must be at least 1".into()));
        }
        if !(self.share > 0.0 && self.share < 1.0) {
            return Err(Error::Config(format!("share {} not in (0, 1)", self.share)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta {} must be non-negative", self.eta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SemiSynthetic {
    pub data: Dataset,
    pub truth: TrueEffects,
    pub treatment_fit: ProbitFit,
    /// Coefficients ordered intercept, treatment, covariates.
    pub mediator_fit: ProbitFit,
    pub alpha: f64,
    /// Base rows drawn by the bootstrap, in output order.
    pub source_rows: Vec<usize>,
}

/// Shift `α` so that exactly `round(share · n)` entries of `systematic + α`
/// reach `threshold`: the k-th largest value is moved onto the threshold.
pub fn calibrate_alpha(systematic: &[f64], share: f64, threshold: f64) -> f64 {
    assert!(!systematic.is_empty(), "calibrate_alpha needs a nonempty vector");
    let n = systematic.len();
    let mut sorted = systematic.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((share * n as f64).round() as usize).clamp(1, n);
    let pivot = sorted[n - k];
    let mut alpha = threshold - pivot;
    // the subtraction can round so that pivot + alpha lands just below
    while pivot + alpha < threshold {
        alpha = alpha.next_up();
    }
    alpha
}

fn converged(fit: ProbitFit, what: &str) -> Result<ProbitFit> {
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::Invalid(format!(
            "{what} probit did not converge after {} iterations (separation: {})",
            fit.iterations, fit.separation
        )))
    }
}

pub fn simulate_semisynthetic(base: &Dataset, cfg: &SemiSynthConfig) -> Result<SemiSynthetic> {
    cfg.validate()?;
    if base.mediator_kind() != VarKind::Continuous {
        return Err(Error::Invalid("semisynthetic base needs a continuous mediator".into()));
    }
    let x = base.covariate_design();
    let t = base.t();
    let mediated = base.m().mapv(|v| if v >= cfg.mediator_threshold { 1.0 } else { 0.0 });
    let opts = ProbitOptions::default();
    let treatment_fit = converged(fit_probit(x.view(), t, &opts)?, "treatment")?;
    let tx = concatenate(Axis(1), &[t.insert_axis(Axis(1)), x.view()]).unwrap();
    let mediator_fit = converged(fit_probit(tx.view(), mediated.view(), &opts)?, "mediator")?;

    let pool: Vec<usize> = (0..base.n())
        .filter(|&i| t[i] == 0.0 && mediated[i] == 0.0)
        .collect();
    if pool.is_empty() {
        return Err(Error::Invalid(
            "no untreated, unmediated rows survive to resample from".into(),
        ));
    }
    let mut r = rng::seeded(cfg.seed);
    let rows: Vec<usize> = (0..cfg.n).map(|_| pool[r.random_range(0..pool.len())]).collect();
    let resampled = base.select(&rows);
    let xr = x.select(Axis(0), &rows);

    let index_t = treatment_fit.linear_predictor(xr.view());
    let pseudo_t: Array1<f64> = index_t.mapv(|v| if v + rng::normal(&mut r) > 0.0 { 1.0 } else { 0.0 });

    let coef = &mediator_fit.coefficients;
    let gamma = coef[1];
    let omega = coef.slice(ndarray::s![2..]);
    let index_m = xr.dot(&omega) + coef[0];
    let systematic: Vec<f64> = (0..cfg.n)
        .map(|i| cfg.eta * (pseudo_t[i] * gamma + index_m[i]) + rng::normal(&mut r))
        .collect();
    let alpha = calibrate_alpha(&systematic, cfg.share, cfg.mediator_threshold);
    let pseudo_m = Array1::from_iter(systematic.iter().map(|s| s + alpha));

    let mut data = resampled.with_tmy(pseudo_t, pseudo_m, resampled.y().to_owned())?;
    if cfg.binarize_mediator {
        let thr = cfg.mediator_threshold;
        let bin = data.m().mapv(|v| if v >= thr { 1.0 } else { 0.0 });
        data = data.with_mediator(ColumnKind::Binary, bin)?;
    }
    Ok(SemiSynthetic {
        data,
        truth: TrueEffects::zero(),
        treatment_fit,
        mediator_fit,
        alpha,
        source_rows: rows,
    })
}
