//! Grid expansion and the per-replication pipeline.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BaseData, DgpConfig, Estimator, EvalSplit, ExperimentConfig, Resolved};
use crate::baselines::{lsem_effects, lsem_i_effects};
use crate::cmavae::{train, ModelConfig, TrainConfig};
use crate::dataset::{load_csv, Dataset, VarKind};
use crate::dgp::standin::{jobs_like, jobs_schema};
use crate::dgp::{
    generate_synthetic, inject_proxy_noise, simulate_semisynthetic, ProxyNoiseConfig, SemiSynthConfig,
    SyntheticConfig, TrueEffects,
};
use crate::effects::{estimate_effects, AbsErrors, ErrorReport};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

// Sub-streams of a replication seed.
const STREAM_DATA: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_EFFECTS: u64 = 5;

/// One point of the parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub label: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum CellSpec {
    Synthetic { n: usize },
    Semi { n: usize, eta: f64, share: f64 },
    Noise { n: usize, eta: f64, share: f64, p_c: f64 },
}

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

fn expand(dgp: &DgpConfig) -> Result<Vec<(Cell, CellSpec)>> {
    let mut specs = Vec::new();
    match dgp {
        DgpConfig::Synthetic { n, .. } => {
            for n in n.values() {
                specs.push(CellSpec::Synthetic { n });
            }
        }
        DgpConfig::Semisynthetic { n, eta, share, .. } => {
            for n in n.values() {
                for eta in eta.values() {
                    for share in share.values() {
                        specs.push(CellSpec::Semi { n, eta, share });
                    }
                }
            }
        }
        DgpConfig::ProxyNoise { n, eta, share, p_c, .. } => {
            for n in n.values() {
                for eta in eta.values() {
                    for share in share.values() {
                        for p_c in p_c.values() {
                            specs.push(CellSpec::Noise { n, eta, share, p_c });
                        }
                    }
                }
            }
        }
        DgpConfig::FairnessCsv { .. } => {
            return Err(Error::Config("fairness data runs through the fairness command".into()));
        }
    }
    Ok(specs
        .into_iter()
        .enumerate()
        .map(|(index, spec)| {
            let params: Vec<(&str, f64)> = match spec {
                CellSpec::Synthetic { n } => vec![("n", n as f64)],
                CellSpec::Semi { n, eta, share } => vec![("n", n as f64), ("eta", eta), ("share", share)],
                CellSpec::Noise { n, eta, share, p_c } => {
                    vec![("n", n as f64), ("eta", eta), ("share", share), ("p_c", p_c)]
                }
            };
            let label = params
                .iter()
                .map(|(k, v)| format!("{k}={}", fmt_param(*v)))
                .collect::<Vec<_>>()
                .join(",");
            let cell = Cell {
                index,
                label,
                params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            };
            (cell, spec)
        })
        .collect())
}

/// Grid cells of an experiment in run order.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    Ok(expand(&cfg.dgp)?.into_iter().map(|(c, _)| c).collect())
}

/// A generated dataset and its ground truth.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: TrueEffects,
}

fn base_dataset(base: &BaseData, seed: u64) -> Result<Dataset> {
    match &base.csv {
        Some(path) => load_csv(path, &jobs_schema()),
        None => jobs_like(base.n, base.seed.unwrap_or(seed)),
    }
}

/// Caches the semisynthetic base rows, which do not vary across replications.
struct BaseCache {
    data: Option<Dataset>,
}

impl BaseCache {
    fn get(&mut self, base: &BaseData, seed: u64) -> Result<&Dataset> {
        if self.data.is_none() {
            self.data = Some(base_dataset(base, seed)?);
        }
        Ok(self.data.as_ref().unwrap())
    }
}

fn simulate_cell(cfg: &ExperimentConfig, spec: &CellSpec, rep_seed: u64, cache: &mut BaseCache) -> Result<Simulated> {
    let data_seed = derive_seed(rep_seed, STREAM_DATA);
    match (&cfg.dgp, spec) {
        (DgpConfig::Synthetic { x_dim, c_mode, .. }, CellSpec::Synthetic { n }) => {
            let s = generate_synthetic(&SyntheticConfig {
                n: *n,
                seed: data_seed,
                x_dim: *x_dim,
                c_mode: *c_mode,
                ..SyntheticConfig::default()
            })?;
            Ok(Simulated {
                data: s.data,
                truth: s.truth,
            })
        }
        (
            DgpConfig::Semisynthetic {
                base,
                mediator_threshold,
                binarize_mediator,
                ..
            },
            CellSpec::Semi { n, eta, share },
        ) => {
            let base = cache.get(base, cfg.seed)?;
            let s = simulate_semisynthetic(
                base,
                &SemiSynthConfig {
                    n: *n,
                    eta: *eta,
                    share: *share,
                    mediator_threshold: *mediator_threshold,
                    seed: data_seed,
                    binarize_mediator: *binarize_mediator,
                },
            )?;
            Ok(Simulated {
                data: s.data,
                truth: s.truth,
            })
        }
        (
            DgpConfig::ProxyNoise {
                base,
                mediator_threshold,
                confounder,
                bins,
                replications,
                ..
            },
            CellSpec::Noise { n, eta, share, p_c },
        ) => {
            let base = cache.get(base, cfg.seed)?;
            let s = simulate_semisynthetic(
                base,
                &SemiSynthConfig {
                    n: *n,
                    eta: *eta,
                    share: *share,
                    mediator_threshold: *mediator_threshold,
                    seed: data_seed,
                    binarize_mediator: false,
                },
            )?;
            let noisy = inject_proxy_noise(
                &s.data,
                confounder,
                &ProxyNoiseConfig {
                    p_c: *p_c,
                    bins: *bins,
                    replications: *replications,
                    seed: derive_seed(rep_seed, STREAM_NOISE),
                    ..ProxyNoiseConfig::default()
                },
            )?;
            Ok(Simulated {
                data: noisy.data,
                truth: s.truth,
            })
        }
        _ => unreachable!("cell spec matches its generator"),
    }
}

/// The dataset of grid cell `cell` for replication `rep`, before standardization.
pub fn simulate(cfg: &ExperimentConfig, cell: usize, rep: usize) -> Result<Simulated> {
    let specs = expand(&cfg.dgp)?;
    let (_, spec) = specs
        .get(cell)
        .ok_or_else(|| Error::Config(format!("no grid cell {cell}; the grid has {}", specs.len())))?;
    simulate_cell(cfg, spec, cfg.seed + rep as u64, &mut BaseCache { data: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    pub acme: f64,
    pub acde: f64,
    pub ate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub estimate: Effects,
    pub errors: AbsErrors,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell: String,
    pub estimator: Option<String>,
    pub rep: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: Estimator,
    pub records: Vec<RepRecord>,
}

impl EstimatorResult {
    pub fn report(&self) -> Option<ErrorReport> {
        ErrorReport::from_errors(self.records.iter().map(|r| r.errors).collect()).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub truth: Option<TrueEffects>,
    pub estimators: Vec<EstimatorResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    /// SHA-256 of the resolved configuration.
    pub config_hash: String,
    pub seed: u64,
    pub reps: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub provenance: Provenance,
    pub cells: Vec<CellResult>,
    pub failures: Vec<Failure>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Data ready for estimation: standardized, split, and the evaluation rows.
pub struct Prepared {
    pub train: Dataset,
    pub eval: Dataset,
    /// Outcome standard deviation removed by standardization, 1 otherwise.
    pub outcome_scale: f64,
}

pub fn prepare(cfg: &ExperimentConfig, data: &Dataset, rep_seed: u64) -> Result<Prepared> {
    let opts = cfg.standardize;
    let outcome_scale = if opts.outcome && data.outcome_kind() == VarKind::Continuous {
        data.y().std(0.0)
    } else {
        1.0
    };
    let data = if cfg.standardize_covariates {
        data.standardize_with(opts)?
    } else {
        data.clone()
    };
    let split = data.stratified_split(cfg.train_fraction, derive_seed(rep_seed, STREAM_SPLIT))?;
    let eval = match cfg.eval_on {
        EvalSplit::Test => split.test,
        EvalSplit::All => data,
    };
    Ok(Prepared {
        train: split.train,
        eval,
        outcome_scale,
    })
}

pub fn train_config(resolved: &Resolved, rep_seed: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(rep_seed, STREAM_TRAIN),
        ..resolved.train.clone()
    }
}

pub fn effects_seed(rep_seed: u64) -> u64 {
    derive_seed(rep_seed, STREAM_EFFECTS)
}

fn run_estimator(est: Estimator, p: &Prepared, resolved: &Resolved, rep_seed: u64) -> Result<Effects> {
    match est {
        Estimator::Cmavae => {
            let mc = ModelConfig::for_dataset(&p.train, resolved.arch.clone());
            let fit = train(&p.train, &mc, &train_config(resolved, rep_seed))?;
            let e = estimate_effects(&fit.model, p.eval.x(), resolved.draws, &mut seeded(effects_seed(rep_seed)))?
                .rescaled(p.outcome_scale);
            Ok(Effects {
                acme: e.acme_treated,
                acde: e.acde_control,
                ate: e.ate,
            })
        }
        Estimator::Lsem | Estimator::LsemI => {
            let r = if est == Estimator::Lsem {
                lsem_effects(&p.train)?
            } else {
                lsem_i_effects(&p.train)?
            };
            let (acme, acde) = (r.acme_treated * p.outcome_scale, r.acde_control * p.outcome_scale);
            Ok(Effects {
                acme,
                acde,
                ate: acme + acde,
            })
        }
    }
}

/// Runs every cell × replication × estimator; failures are recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let started = unix_now();
    let resolved = cfg.resolved();
    let mut cache = BaseCache { data: None };
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    if cfg.estimators.is_empty() {
        log::warn!("no estimators configured; the summary will be empty");
    }
    for (cell, spec) in expand(&cfg.dgp)? {
        let mut results: Vec<EstimatorResult> = cfg
            .estimators
            .iter()
            .map(|&e| EstimatorResult {
                estimator: e,
                records: Vec::new(),
            })
            .collect();
        let mut truth = None;
        for rep in 0..resolved.reps {
            let rep_seed = cfg.seed + rep as u64;
            log::info!("cell {} rep {rep}", cell.label);
            let prepared = simulate_cell(cfg, &spec, rep_seed, &mut cache)
                .and_then(|s| prepare(cfg, &s.data, rep_seed).map(|p| (s.truth, p)));
            let (t, p) = match prepared {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("cell {} rep {rep}: {e}", cell.label);
                    failures.push(Failure {
                        cell: cell.label.clone(),
                        estimator: None,
                        rep,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            truth = Some(t);
            for res in results.iter_mut() {
                match run_estimator(res.estimator, &p, &resolved, rep_seed) {
                    Ok(e) => res.records.push(RepRecord {
                        rep,
                        seed: rep_seed,
                        estimate: e,
                        errors: AbsErrors::between(e.acme, e.acde, e.ate, &t),
                    }),
                    Err(err) => {
                        log::warn!("cell {} {} rep {rep}: {err}", cell.label, res.estimator.name());
                        failures.push(Failure {
                            cell: cell.label.clone(),
                            estimator: Some(res.estimator.name().to_string()),
                            rep,
                            message: err.to_string(),
                        });
                    }
                }
            }
        }
        cells.push(CellResult {
            cell,
            truth,
            estimators: results,
        });
    }
    Ok(ExperimentResult {
        provenance: Provenance {
            name: cfg.name.clone(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            reps: resolved.reps,
            started_unix: started,
            finished_unix: unix_now(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        cells,
        failures,
    })
}

/// Loads the config at `path`, applies a seed override and runs it.
pub fn run_experiment_file(path: impl AsRef<Path>, seed: Option<u64>) -> Result<ExperimentResult> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run_experiment(&cfg)
}
