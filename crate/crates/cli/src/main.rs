use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cmavae_core::cmavae::{train, CmavaeModel, ModelConfig};
use cmavae_core::dataset::{load_csv, ColumnSpec, Dataset};
use cmavae_core::dgp::TrueEffects;
use cmavae_core::effects::{estimate_effects, AbsErrors};
use cmavae_core::harness::{
    effects_seed, emit_outputs, fairness_data, prepare, run_experiment, run_fairness, simulate, train_config,
    DgpConfig, ExperimentConfig,
};
use cmavae_core::rng::seeded;

#[derive(Parser)]
#[command(name = "cmavae", version, about = "Mediation analysis with proxy-recovered hidden confounders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column layout JSON; defaults to `schema.json` next to the data.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let schema_path = self
            .schema
            .clone()
            .unwrap_or_else(|| self.data.with_file_name("schema.json"));
        let text = fs::read_to_string(&schema_path).with_context(|| format!("reading {}", schema_path.display()))?;
        let schema: Vec<ColumnSpec> = serde_json::from_str(&text)?;
        load_csv(&self.data, &schema).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw one dataset with its ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Grid cell index.
        #[arg(long, default_value_t = 0)]
        cell: usize,
        /// Replication index; the data seed is the base seed plus this.
        #[arg(long, default_value_t = 0)]
        rep: usize,
        /// Output directory; the configured one when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on the training split of a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint to write.
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Estimate effects with a trained model on the evaluation split.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Ground-truth JSON; absolute errors are reported when given.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the configured grid and write results, summary and plot data.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Report errors multiplied by 100.
        #[arg(long)]
        percent: bool,
        /// Output directory; otherwise the configured one, then `$CMAVAE_OUTPUT_DIR`, then `results`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fairness audit of a table with a sensitive attribute as treatment.
    Fairness {
        #[command(flatten)]
        common: Common,
        /// Directory for `fairness.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, cell, rep, out } => {
            let cfg = common.load()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            create_dir(&dir)?;
            let (data, truth) = match cfg.dgp {
                DgpConfig::FairnessCsv { .. } => (fairness_data(&cfg)?, None),
                _ => {
                    let s = simulate(&cfg, cell, rep)?;
                    (s.data, Some(s.truth))
                }
            };
            data.write_csv(dir.join("dataset.csv"))?;
            fs::write(dir.join("schema.json"), serde_json::to_string_pretty(data.schema())?)?;
            if let Some(t) = truth {
                t.write_json(dir.join("truth.json"))?;
            }
            println!("wrote {} rows to {}", data.n(), dir.join("dataset.csv").display());
        }
        Command::Train { common, data, out } => {
            let cfg = common.load()?;
            let data = data.load()?;
            let resolved = cfg.resolved();
            let p = prepare(&cfg, &data, cfg.seed)?;
            let mc = ModelConfig::for_dataset(&p.train, resolved.arch.clone());
            let fit = train(&p.train, &mc, &train_config(&resolved, cfg.seed))?;
            fit.model.save_json(&out)?;
            println!(
                "trained {} steps, final loss {:.6}; wrote {}",
                fit.steps,
                fit.loss_trace.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Estimate {
            common,
            data,
            model,
            truth,
        } => {
            let cfg = common.load()?;
            let data = data.load()?;
            let model = CmavaeModel::load_json(&model)?;
            model.config().check_dataset(&data)?;
            let p = prepare(&cfg, &data, cfg.seed)?;
            let est = estimate_effects(&model, p.eval.x(), cfg.resolved().draws, &mut seeded(effects_seed(cfg.seed)))?
                .rescaled(p.outcome_scale);
            let mut report = serde_json::json!({ "estimate": est });
            if let Some(path) = truth {
                let t = TrueEffects::read_json(&path)?;
                report["truth"] = serde_json::to_value(t)?;
                report["abs_errors"] = serde_json::to_value(AbsErrors::of(&est, &t))?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment { common, percent, out } => {
            let cfg = common.load()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            let result = run_experiment(&cfg)?;
            for f in &result.failures {
                log::warn!("{} rep {}: {}", f.cell, f.rep, f.message);
            }
            let paths = emit_outputs(&result, &dir, percent)?;
            println!("wrote {} and {}", paths.results.display(), paths.summary.display());
        }
        Command::Fairness { common, out } => {
            let cfg = common.load()?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            create_dir(&dir)?;
            let report = run_fairness(&cfg)?;
            let path = dir.join("fairness.json");
            report.write_json(&path)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
