//! Structural DGP with a binary hidden confounder `z` and Gaussian proxies.
//!
//! ```text
//! z ~ Bern(0.5)
//! x_j | z ~ N(z, 25z + 9(1 - z))            (variance), j = 1..x_dim
//! t | z ~ Bern(0.75z + 0.25(1 - z))
//! m = 0.5z + 0.5 t κ(z) + e1,               κ(z) = 1 / (1 + exp(-(1 + 0.2z)))
//! y = c z + t + m + 0.5 t m + e2,           c ~ N(0, 1), e1, e2 ~ N(0, 1)
//! ```

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::TrueEffects;
use crate::dataset::{ColumnKind, ColumnRole, ColumnSpec, Dataset};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMode {
    /// One draw of `c` shared by every unit.
    #[default]
    PerDataset,
    PerUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    pub x_dim: usize,
    pub c_mode: CMode,
    /// `P(t = 1 | z = 1)`, `P(t = 1 | z = 0)`.
    pub treat_prob: (f64, f64),
    /// Mediator weights on `z` and on `t κ(z)`.
    pub mediator_weights: (f64, f64),
    /// Outcome weights on `t`, `m` and `t m`.
    pub outcome_weights: (f64, f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            x_dim: 1,
            c_mode: CMode::PerDataset,
            treat_prob: (0.75, 0.25),
            mediator_weights: (0.5, 0.5),
            outcome_weights: (1.0, 1.0, 0.5),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let (p1, p0) = self.treat_prob;
        if self.n == 0 {
            return Err(Error::Config("synthetic n must be at least 1".into()));
        }
        if self.x_dim == 0 {
            return Err(Error::Config("synthetic x_dim must be at least 1".into()));
        }
        if !(p1 > 0.0 && p1 < 1.0 && p0 > 0.0 && p0 < 1.0) {
            return Err(Error::Config("treatment probabilities must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Mediator potential value with its noise term supplied.
    pub fn mediator(&self, z: f64, t: f64, e1: f64) -> f64 {
        let (wz, wt) = self.mediator_weights;
        wz * z + wt * t * kappa(z) + e1
    }

    /// Outcome potential value with its noise term supplied.
    pub fn outcome(&self, c: f64, z: f64, t: f64, m: f64, e2: f64) -> f64 {
        let (bt, bm, btm) = self.outcome_weights;
        c * z + bt * t + bm * m + btm * t * m + e2
    }
}

pub fn kappa(z: f64) -> f64 {
    1.0 / (1.0 + (-(1.0 + 0.2 * z)).exp())
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub data: Dataset,
    pub truth: TrueEffects,
    /// Hidden confounder per unit, never part of `data`.
    pub z: Vec<f64>,
}

pub(crate) fn synthetic_schema(x_dim: usize) -> Vec<ColumnSpec> {
    let mut schema: Vec<ColumnSpec> = (0..x_dim)
        .map(|j| ColumnSpec::covariate(format!("x{j}"), ColumnKind::Continuous))
        .collect();
    schema.push(ColumnSpec::new("t", ColumnKind::Binary, ColumnRole::Treatment));
    schema.push(ColumnSpec::new("m", ColumnKind::Continuous, ColumnRole::Mediator));
    schema.push(ColumnSpec::new("y", ColumnKind::Continuous, ColumnRole::Outcome));
    schema
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticSample> {
    cfg.validate()?;
    let mut rng: SimRng = rng::seeded(cfg.seed);
    let shared_c = rng::normal(&mut rng);
    let n = cfg.n;
    let mut x = Array2::zeros((n, cfg.x_dim));
    let mut t = Array1::zeros(n);
    let mut m = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    let mut zs = Vec::with_capacity(n);
    for i in 0..n {
        let z = rng::bernoulli(&mut rng, 0.5);
        let sd = (25.0 * z + 9.0 * (1.0 - z)).sqrt();
        for j in 0..cfg.x_dim {
            x[[i, j]] = z + sd * rng::normal(&mut rng);
        }
        let p = cfg.treat_prob.0 * z + cfg.treat_prob.1 * (1.0 - z);
        let ti = rng::bernoulli(&mut rng, p);
        let mi = cfg.mediator(z, ti, rng::normal(&mut rng));
        let c = match cfg.c_mode {
            CMode::PerDataset => shared_c,
            CMode::PerUnit => rng::normal(&mut rng),
        };
        y[i] = cfg.outcome(c, z, ti, mi, rng::normal(&mut rng));
        t[i] = ti;
        m[i] = mi;
        zs.push(z);
    }
    let data = Dataset::new(synthetic_schema(cfg.x_dim), x, t, m, y)?;
    Ok(SyntheticSample {
        data,
        truth: true_effects_synthetic(cfg),
        z: zs,
    })
}

/// Closed-form effects under the structural laws, with `z ~ Bern(0.5)`.
///
/// `δ̄(1) = (b_m + b_tm) w_t E[κ(z)]` and `ζ̄(0) = b_t + b_tm w_z E[z]`; `c`
/// multiplies `z` only and cancels from both contrasts.
pub fn true_effects_synthetic(cfg: &SyntheticConfig) -> TrueEffects {
    let (wz, wt) = cfg.mediator_weights;
    let (bt, bm, btm) = cfg.outcome_weights;
    let mean_kappa = 0.5 * (kappa(0.0) + kappa(1.0));
    let mean_z = 0.5;
    TrueEffects::new((bm + btm) * wt * mean_kappa, bt + btm * wz * mean_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert!((kappa(0.0) - 0.731_059).abs() < 5e-7);
        assert!((kappa(1.0) - 0.768_525).abs() < 5e-7);
    }

    #[test]
    fn noiseless_hand_evaluation() {
        let cfg = SyntheticConfig::default();
        let m = cfg.mediator(1.0, 1.0, 0.0);
        assert!((m - 0.884_262).abs() < 1e-6);
        let y = cfg.outcome(0.0, 1.0, 1.0, m, 0.0);
        assert!((y - 2.326_393).abs() < 1e-6);
    }

    #[test]
    fn closed_form_truth() {
        let t = true_effects_synthetic(&SyntheticConfig::default());
        assert!((t.acme_treated - 0.562_344).abs() < 1e-6);
        assert!((t.acde_control - 1.125).abs() < 1e-15);
        assert!((t.ate - 1.687_344).abs() < 1e-6);
        assert!((t.ate - (t.acme_treated + t.acde_control)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_latent_kept_out() {
        let cfg = SyntheticConfig {
            n: 200,
            seed: 3,
            x_dim: 2,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.z, b.z);
        assert_eq!(a.data.x_dim(), 2);
        assert!(a.data.x_names().iter().all(|n| n.starts_with('x')));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SyntheticConfig {
            n: 0,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SyntheticConfig {
            treat_prob: (1.0, 0.2),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
