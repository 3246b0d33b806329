//! Experiment configuration: a TOML file with profile defaults and overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmavae::{Architecture, TrainConfig};
use crate::dataset::{ColumnSpec, StandardizeOptions};
use crate::dgp::standin::{CensusScenario, JOBS_CONFOUNDER};
use crate::dgp::CMode;
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CMAVAE_OUTPUT_DIR";

/// A scalar or a list of values to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, Grid::Many(v) if v.is_empty())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Reduced epochs and larger steps, for runs on one core.
    #[default]
    Desk,
    /// The published settings.
    Paper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    #[default]
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Cmavae,
    Lsem,
    LsemI,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cmavae => "cmavae",
            Estimator::Lsem => "lsem",
            Estimator::LsemI => "lsem_i",
        }
    }
}

fn d_train_fraction() -> f64 {
    0.8
}
fn d_estimators() -> Vec<Estimator> {
    vec![Estimator::Cmavae, Estimator::Lsem, Estimator::LsemI]
}
fn d_true() -> bool {
    true
}
fn d_n_synthetic() -> Grid<usize> {
    Grid::Many(vec![1000, 3000, 5000, 10000, 30000])
}
fn d_one() -> usize {
    1
}
fn d_n_semi() -> Grid<usize> {
    Grid::Many(vec![500, 1000])
}
fn d_eta() -> Grid<f64> {
    Grid::Many(vec![1.0, 10.0])
}
fn d_share() -> Grid<f64> {
    Grid::Many(vec![0.1, 0.5])
}
fn d_base_n() -> usize {
    899
}
fn d_threshold() -> f64 {
    3.0
}
fn d_p_c() -> Grid<f64> {
    Grid::Many(vec![0.1, 0.2, 0.3, 0.4, 0.5])
}
fn d_confounder() -> String {
    JOBS_CONFOUNDER.to_string()
}
fn d_three() -> usize {
    3
}
fn d_fair_n() -> usize {
    10_000
}

/// Where the semisynthetic generator takes its base rows from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseData {
    /// CSV in the JOBS II column layout; the built-in stand-in generator when absent.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Rows drawn from the stand-in generator.
    #[serde(default = "d_base_n")]
    pub n: usize,
    /// Stand-in seed; the experiment seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for BaseData {
    fn default() -> Self {
        Self {
            csv: None,
            n: d_base_n(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpConfig {
    Synthetic {
        #[serde(default = "d_n_synthetic")]
        n: Grid<usize>,
        #[serde(default = "d_one")]
        x_dim: usize,
        #[serde(default)]
        c_mode: CMode,
    },
    Semisynthetic {
        #[serde(default = "d_n_semi")]
        n: Grid<usize>,
        #[serde(default = "d_eta")]
        eta: Grid<f64>,
        #[serde(default = "d_share")]
        share: Grid<f64>,
        #[serde(default)]
        base: BaseData,
        #[serde(default = "d_threshold")]
        mediator_threshold: f64,
        #[serde(default)]
        binarize_mediator: bool,
    },
    ProxyNoise {
        #[serde(default = "d_n_semi")]
        n: Grid<usize>,
        #[serde(default = "d_eta")]
        eta: Grid<f64>,
        #[serde(default = "d_share")]
        share: Grid<f64>,
        #[serde(default = "d_p_c")]
        p_c: Grid<f64>,
        #[serde(default)]
        base: BaseData,
        #[serde(default = "d_threshold")]
        mediator_threshold: f64,
        #[serde(default = "d_confounder")]
        confounder: String,
        #[serde(default = "d_three")]
        bins: usize,
        #[serde(default = "d_three")]
        replications: usize,
    },
    FairnessCsv {
        /// CSV to analyse; the built-in census-like generator when absent.
        #[serde(default)]
        path: Option<PathBuf>,
        /// Column layout of `path`; defaults to the census-like layout.
        #[serde(default)]
        columns: Option<Vec<ColumnSpec>>,
        #[serde(default = "d_fair_n")]
        n: usize,
        #[serde(default)]
        scenario: CensusScenario,
    },
}

impl DgpConfig {
    pub fn setting(&self) -> Setting {
        match self {
            DgpConfig::Synthetic { .. } => Setting::Simulation,
            DgpConfig::Semisynthetic { .. } | DgpConfig::ProxyNoise { .. } => Setting::Jobs,
            DgpConfig::FairnessCsv { .. } => Setting::Adult,
        }
    }
}

/// The three hyperparameter families of the published experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    Simulation,
    Jobs,
    Adult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub z_dim: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub layer_size: Option<usize>,
    pub treatment_hidden_layers: Option<usize>,
    pub decoder_mediator_var: Option<f64>,
    pub decoder_outcome_var: Option<f64>,
    pub aux_mediator_var: Option<f64>,
    pub aux_outcome_var: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub mc_samples: Option<usize>,
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ModelOverrides {
    fn apply(&self, a: &mut Architecture) {
        set(&mut a.z_dim, self.z_dim);
        set(&mut a.hidden_layers, self.hidden_layers);
        set(&mut a.layer_size, self.layer_size);
        set(&mut a.treatment_hidden_layers, self.treatment_hidden_layers);
        set(&mut a.decoder_mediator_var, self.decoder_mediator_var);
        set(&mut a.decoder_outcome_var, self.decoder_outcome_var);
        set(&mut a.aux_mediator_var, self.aux_mediator_var);
        set(&mut a.aux_outcome_var, self.aux_outcome_var);
    }
}

impl TrainOverrides {
    fn apply(&self, t: &mut TrainConfig) {
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.beta1, self.beta1);
        set(&mut t.beta2, self.beta2);
        set(&mut t.adam_eps, self.adam_eps);
        set(&mut t.mc_samples, self.mc_samples);
    }
}

/// Hyperparameters before per-file overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileDefaults {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub draws: usize,
    pub reps: usize,
}

pub fn profile_defaults(profile: Profile, setting: Setting) -> ProfileDefaults {
    let arch = |z_dim, hidden_layers| Architecture {
        z_dim,
        hidden_layers,
        layer_size: 100,
        ..Architecture::default()
    };
    let train = |epochs, batch_size, learning_rate, weight_decay| TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        weight_decay,
        ..TrainConfig::default()
    };
    match (profile, setting) {
        (Profile::Paper, Setting::Simulation) => ProfileDefaults {
            arch: arch(5, 3),
            train: train(100, 100, 1e-4, 1e-4),
            draws: 100,
            reps: 10,
        },
        (Profile::Paper, Setting::Jobs) => ProfileDefaults {
            arch: arch(10, 5),
            train: train(100, 32, 1e-6, 1e-3),
            draws: 100,
            reps: 10,
        },
        (Profile::Paper, Setting::Adult) => ProfileDefaults {
            arch: arch(10, 2),
            train: train(150, 1024, 1e-5, 1e-3),
            draws: 1000,
            reps: 1,
        },
        (Profile::Desk, Setting::Simulation) => ProfileDefaults {
            arch: arch(5, 3),
            train: train(30, 100, 1e-3, 1e-4),
            draws: 100,
            reps: 10,
        },
        (Profile::Desk, Setting::Jobs) => ProfileDefaults {
            arch: arch(10, 5),
            train: train(100, 32, 1e-4, 1e-3),
            draws: 100,
            reps: 10,
        },
        (Profile::Desk, Setting::Adult) => ProfileDefaults {
            arch: arch(10, 2),
            train: train(30, 256, 1e-3, 1e-3),
            draws: 100,
            reps: 1,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub seed: u64,
    /// Replications per cell; the profile's value when absent.
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub eval_on: EvalSplit,
    #[serde(default = "d_estimators")]
    pub estimators: Vec<Estimator>,
    /// Posterior draws per unit; the profile's value when absent.
    #[serde(default)]
    pub draws: Option<usize>,
    /// Standardize continuous covariates before splitting.
    #[serde(default = "d_true")]
    pub standardize_covariates: bool,
    /// Also standardize a continuous mediator and outcome; effects are mapped back to outcome units.
    #[serde(default)]
    pub standardize: StandardizeOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dgp: DgpConfig,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
}

/// Resolved hyperparameters for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub draws: usize,
    pub reps: usize,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn resolved(&self) -> Resolved {
        let d = profile_defaults(self.profile, self.dgp.setting());
        let mut arch = d.arch;
        self.model.apply(&mut arch);
        let mut train = d.train;
        self.train.apply(&mut train);
        Resolved {
            arch,
            train,
            draws: self.draws.unwrap_or(d.draws),
            reps: self.reps.unwrap_or(d.reps),
        }
    }

    /// Config file value, then the environment variable, then `results`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolved();
        if r.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !self.standardize_covariates && (self.standardize.mediator || self.standardize.outcome) {
            return Err(Error::Config("standardize.mediator/outcome need standardize_covariates".into()));
        }
        if r.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} not in (0, 1)", self.train_fraction)));
        }
        r.train.validate()?;
        let empty = match &self.dgp {
            DgpConfig::Synthetic { n, .. } => n.is_empty(),
            DgpConfig::Semisynthetic { n, eta, share, .. } => n.is_empty() || eta.is_empty() || share.is_empty(),
            DgpConfig::ProxyNoise { n, eta, share, p_c, .. } => {
                n.is_empty() || eta.is_empty() || share.is_empty() || p_c.is_empty()
            }
            DgpConfig::FairnessCsv { .. } => false,
        };
        if empty {
            return Err(Error::Config("parameter grids must be nonempty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_profile_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[dgp]\nkind = \"synthetic\"\nn = 500\n").unwrap();
        let r = cfg.resolved();
        assert_eq!(r.reps, 10);
        assert_eq!(r.arch.z_dim, 5);
        assert_eq!(r.train.epochs, 30);
        assert_eq!(cfg.estimators.len(), 3);
        match cfg.dgp {
            DgpConfig::Synthetic { n, x_dim, .. } => {
                assert_eq!(n.values(), vec![500]);
                assert_eq!(x_dim, 1);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn paper_profile_matches_published_settings() {
        let sim = profile_defaults(Profile::Paper, Setting::Simulation);
        assert_eq!((sim.arch.z_dim, sim.arch.hidden_layers, sim.train.batch_size), (5, 3, 100));
        assert_eq!((sim.train.learning_rate, sim.train.weight_decay), (1e-4, 1e-4));
        let jobs = profile_defaults(Profile::Paper, Setting::Jobs);
        assert_eq!((jobs.arch.z_dim, jobs.arch.hidden_layers, jobs.train.batch_size), (10, 5, 32));
        assert_eq!((jobs.train.learning_rate, jobs.train.weight_decay), (1e-6, 1e-3));
        let adult = profile_defaults(Profile::Paper, Setting::Adult);
        assert_eq!((adult.train.epochs, adult.train.batch_size, adult.draws, adult.reps), (150, 1024, 1000, 1));
        assert_eq!(adult.arch.hidden_layers, 2);
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            profile = "paper"
            reps = 2
            draws = 7
            [dgp]
            kind = "proxy_noise"
            p_c = [0.1, 0.5]
            [model]
            z_dim = 3
            [train]
            epochs = 4
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let r = cfg.resolved();
        assert_eq!((r.reps, r.draws, r.arch.z_dim, r.train.epochs), (2, 7, 3, 4));
        assert_eq!(r.train.learning_rate, 1e-6);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::from_toml_str("[dgp]\nkind = \"synthetic\"\nn = []\n").is_err());
        assert!(ExperimentConfig::from_toml_str("reps = 0\n[dgp]\nkind = \"synthetic\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[dgp]\nkind = \"nope\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("colour = 1\n[dgp]\nkind = \"synthetic\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[dgp]\nkind = \"synthetic\"\n[train]\nlearning_rate = -1.0\n").is_err());
    }

    #[test]
    fn fairness_columns_from_toml() {
        let text = r#"
            [dgp]
            kind = "fairness_csv"
            path = "adult.csv"
            columns = [
                { name = "age", kind = "continuous", role = "covariate" },
                { name = "marital", kind = { categorical = 3 }, role = "covariate" },
                { name = "sex", kind = "binary", role = "treatment" },
                { name = "occ", kind = "binary", role = "mediator" },
                { name = "income", kind = "binary", role = "outcome" },
            ]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.resolved().reps, 1);
        match cfg.dgp {
            DgpConfig::FairnessCsv { columns: Some(c), .. } => assert_eq!(c.len(), 5),
            _ => panic!("columns missing"),
        }
    }
}
