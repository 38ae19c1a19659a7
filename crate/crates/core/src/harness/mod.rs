//! Experiment plans, replicated trials and their CSV/JSON artifacts.

mod plan;
mod run;

pub use plan::{has_baseline, parse_plan, BankSpec, BaselineChoice, ExperimentPlan};
pub use run::{
    bank_seed, draw_plan_bank, records_csv, rerun_from_manifest, run_density_study, run_experiment, run_feature_sweep,
    summarize, sweep_csv, with_workers, workers_from_env, write_outputs, CoordinateSummary, DensityOutput, ExperimentOutput,
    FailureRecord, RunManifest, SampleSizeSummary, SweepRow, TrialRecord, CSV_HEADER, WORKERS_ENV,
};
