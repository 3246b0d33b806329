//! Data-generating processes with known ground-truth effects.

mod probit;
mod proxy_noise;
mod semisynthetic;
pub mod standin;
mod synthetic;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use probit::{fit_probit, ProbitFit, ProbitOptions};
pub use proxy_noise::{inject_proxy_noise, ProxyNoiseConfig, ProxyNoisy};
pub use semisynthetic::{calibrate_alpha, simulate_semisynthetic, SemiSynthConfig, SemiSynthetic};
pub use synthetic::{
    generate_synthetic, kappa, true_effects_synthetic, CMode, SyntheticConfig, SyntheticSample,
};

/// Population effects `(δ̄(1), ζ̄(0), τ̄)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    #[serde(rename = "acme1")]
    pub acme_treated: f64,
    #[serde(rename = "acde0")]
    pub acde_control: f64,
    pub ate: f64,
}

impl TrueEffects {
    pub fn new(acme_treated: f64, acde_control: f64) -> Self {
        Self {
            acme_treated,
            acde_control,
            ate: acme_treated + acde_control,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Writes the `{acme1, acde0, ate}` JSON sidecar.
    pub fn write_json(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| crate::Error::Output {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: impl AsRef<Path>) -> crate::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
