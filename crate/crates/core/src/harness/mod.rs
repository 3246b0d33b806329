//! Experiment grids, replication and output files.

mod config;
mod fairness;
mod output;
mod run;

pub use config::{
    profile_defaults, BaseData, DgpConfig, Estimator, EvalSplit, ExperimentConfig, Grid, ModelOverrides, Profile,
    ProfileDefaults, Resolved, Setting, TrainOverrides, OUTPUT_DIR_ENV,
};
pub use fairness::{fairness_data, run_fairness, run_fairness_on, ClassifierReport, FairnessReport};
pub use output::{
    emit_outputs, read_results_csv, result_rows, results_csv, summarize, MeanStd, OutputPaths, ResultRow, Summary,
    SummaryRow, PLOT_HEADER, RESULTS_HEADER,
};
pub use run::{
    cells, config_hash, effects_seed, prepare, run_experiment, run_experiment_file, simulate, train_config, Cell,
    CellResult, Effects, EstimatorResult, ExperimentResult, Failure, Prepared, Provenance, RepRecord, Simulated,
};
