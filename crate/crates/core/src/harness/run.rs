use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::{has_baseline, BaselineChoice, ExperimentPlan};
use crate::baselines::{gaussian_mle, t_location_mle};
use crate::error::{Error, Result};
use crate::estimator::{estimate, estimate_two_step, ObjectiveVariant};
use crate::features::{draw_bank, FeatureBank};
use crate::models::{simulate_trajectory, Model};
use crate::rngstreams::{derive_stream, tag, SeedSpec};

pub const WORKERS_ENV: &str = "RFMATCH_WORKERS";

/// Worker count from `RFMATCH_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(Error::config(WORKERS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `job` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(job))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub n: usize,
    pub theta_true: Vec<f64>,
    pub theta_hat: Option<Vec<f64>>,
    pub baseline_hat: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub wall_time_secs: f64,
    pub flags: Vec<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.theta_hat.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub name: String,
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub baseline_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSummary {
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub coordinates: Vec<CoordinateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub n: usize,
    pub trial_index: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub plan: ExperimentPlan,
    /// Banks shared by all trials, one per arity used; empty when banks are
    /// redrawn per trial.
    pub banks: Vec<FeatureBank>,
    pub created_unix_secs: u64,
    pub wall_time_secs: f64,
    pub workers: usize,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SampleSizeSummary>,
    pub manifest: RunManifest,
    pub csv: String,
}

pub fn bank_seed(plan: &ExperimentPlan, arity: usize) -> SeedSpec {
    SeedSpec::new(plan.seed, [tag::BANK, arity as u32])
}

fn trial_seed(plan: &ExperimentPlan, label: u32, n: usize, trial: usize) -> SeedSpec {
    SeedSpec::new(plan.seed, [label, n as u32, trial as u32])
}

/// Bank drawn from the plan's seed; per-trial banks extend the path with
/// `n` and the trial index.
pub fn draw_plan_bank(plan: &ExperimentPlan, arity: usize, trial: Option<(usize, usize)>) -> Result<FeatureBank> {
    let mut seed = bank_seed(plan, arity);
    if let Some((n, t)) = trial {
        seed = seed.children(&[n as u32, t as u32]);
    }
    draw_bank(plan.bank.k, arity, plan.bank.freq_scale, &mut derive_stream(&seed))
}

fn baseline(plan: &ExperimentPlan, data: &[f64]) -> Option<Vec<f64>> {
    if plan.baseline == BaselineChoice::None || !has_baseline(&plan.model) {
        return None;
    }
    let result = match plan.model.as_str() {
        "gaussian-location" => gaussian_mle(data),
        _ => t_location_mle(data, plan.model_options.t_df),
    };
    result.ok().map(|r| r.theta_hat)
}

fn run_trial(plan: &ExperimentPlan, model: &dyn Model, fixed: Option<&FeatureBank>, n: usize, trial: usize) -> (TrialRecord, Option<FailureRecord>) {
    let start = Instant::now();
    let mut baseline_hat = None;
    let outcome = (|| {
        let data = simulate_trajectory(model, &plan.true_theta, n, &trial_seed(plan, tag::DATA, n, trial))?.values;
        baseline_hat = baseline(plan, &data);
        let drawn;
        let bank = match fixed {
            Some(b) => b,
            None => {
                drawn = draw_plan_bank(plan, plan.bank.arity, Some((n, trial)))?;
                &drawn
            }
        };
        let seed = trial_seed(plan, tag::ESTIMATE, n, trial);
        if plan.objective.variant == ObjectiveVariant::Weighted {
            estimate_two_step(model, &data, bank, &plan.objective, &plan.optimizer, &seed)
        } else {
            estimate(model, &data, bank, &plan.objective, &plan.optimizer, &seed)
        }
    })();
    let mut record = TrialRecord {
        trial_index: trial,
        n,
        theta_true: plan.true_theta.clone(),
        theta_hat: None,
        baseline_hat,
        objective_value: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    };
    match outcome {
        Ok(report) => {
            record.flags = report.diagnostics.labels().into_iter().map(String::from).collect();
            record.objective_value = Some(report.objective_value);
            record.theta_hat = Some(report.theta_hat);
            (record, None)
        }
        Err(e) => {
            record.flags = vec![format!("failed:{}", e.kind())];
            let failure = FailureRecord {
                n,
                trial_index: trial,
                kind: e.kind().to_string(),
                message: e.to_string(),
            };
            (record, Some(failure))
        }
    }
}

fn run_trials(
    plan: &ExperimentPlan,
    model: &dyn Model,
    fixed: Option<&FeatureBank>,
) -> Vec<(TrialRecord, Option<FailureRecord>)> {
    let units: Vec<(usize, usize)> = plan
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..plan.trials).map(move |t| (n, t)))
        .collect();
    units.par_iter().map(|&(n, t)| run_trial(plan, model, fixed, n, t)).collect()
}

/// Per-`n` error summaries over the successful trials.
pub fn summarize(records: &[TrialRecord], names: &[String], sample_sizes: &[usize]) -> Vec<SampleSizeSummary> {
    sample_sizes
        .iter()
        .map(|&n| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.n == n).collect();
            let ok: Vec<&TrialRecord> = rows.iter().copied().filter(|r| !r.failed()).collect();
            let coordinates = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let errors: Vec<f64> = ok.iter().map(|r| r.theta_hat.as_ref().unwrap()[j] - r.theta_true[j]).collect();
                    let m = errors.len() as f64;
                    let mse = errors.iter().map(|e| e * e).sum::<f64>() / m;
                    let bias = errors.iter().sum::<f64>() / m;
                    let variance = errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / m;
                    let base: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| r.baseline_hat.as_ref().map(|b| (b[j] - r.theta_true[j]).powi(2)))
                        .collect();
                    CoordinateSummary {
                        name: name.clone(),
                        mse,
                        bias,
                        variance,
                        baseline_mse: (!base.is_empty()).then(|| base.iter().sum::<f64>() / base.len() as f64),
                    }
                })
                .collect();
            SampleSizeSummary {
                n,
                trials: rows.len(),
                failures: rows.len() - ok.len(),
                coordinates,
            }
        })
        .collect()
}

pub const CSV_HEADER: [&str; 8] = [
    "trial_index",
    "n",
    "coordinate_name",
    "theta_true",
    "theta_hat",
    "baseline_hat",
    "objective_value",
    "flags",
];

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn record_fields(r: &TrialRecord, j: usize, name: &str) -> Vec<String> {
    vec![
        r.trial_index.to_string(),
        r.n.to_string(),
        name.to_string(),
        r.theta_true[j].to_string(),
        opt(r.theta_hat.as_ref().map(|t| t[j])),
        opt(r.baseline_hat.as_ref().map(|t| t[j])),
        opt(r.objective_value),
        r.flags.join(";"),
    ]
}

/// One row per trial and coordinate, in trial order.
pub fn records_csv(records: &[TrialRecord], names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        for (j, name) in names.iter().enumerate() {
            w.write_record(record_fields(r, j, name))?;
        }
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

fn execute(plan: &ExperimentPlan, banks: Option<Vec<FeatureBank>>, workers: usize) -> Result<ExperimentOutput> {
    plan.validate()?;
    let model = plan.build_model()?;
    let start = Instant::now();
    let banks = match banks {
        Some(b) => b,
        None if plan.bank.fixed => vec![draw_plan_bank(plan, plan.bank.arity, None)?],
        None => Vec::new(),
    };
    if plan.bank.fixed && banks.len() != 1 {
        return Err(Error::config("banks", "a fixed-bank plan needs exactly one bank"));
    }
    let results = with_workers(workers, || run_trials(plan, model.as_ref(), banks.first()))?;
    let (records, failures): (Vec<TrialRecord>, Vec<Option<FailureRecord>>) = results.into_iter().unzip();
    let names = model.param_space().names().to_vec();
    let csv = records_csv(&records, &names)?;
    let summary = summarize(&records, &names, &plan.sample_sizes);
    let manifest = RunManifest {
        software: "rfmatch".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        plan: plan.clone(),
        banks,
        created_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        wall_time_secs: start.elapsed().as_secs_f64(),
        workers,
        failures: failures.into_iter().flatten().collect(),
    };
    Ok(ExperimentOutput { records, summary, manifest, csv })
}

/// Runs every (n, trial) pair of the plan. Output is deterministic given the
/// plan and independent of `workers`.
pub fn run_experiment(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentOutput> {
    execute(plan, None, workers)
}

/// Reruns an experiment from its manifest alone, using the recorded banks.
pub fn rerun_from_manifest(manifest: &RunManifest, workers: usize) -> Result<ExperimentOutput> {
    let banks = manifest.plan.bank.fixed.then(|| manifest.banks.clone());
    execute(&manifest.plan, banks, workers)
}

/// Writes `trials.csv`, `manifest.json` and `summary.json` into `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), &output.csv)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&output.manifest)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&output.summary)?)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DensityOutput {
    /// `(arity, objective, record)` in configuration then trial order.
    pub rows: Vec<(usize, ObjectiveVariant, TrialRecord)>,
    pub csv: String,
    pub summaries: BTreeMap<String, Vec<SampleSizeSummary>>,
}

/// Runs the plan once per combination of the comparison axes. Trials share
/// data seeds across configurations, so estimates are paired. With empty
/// axes this is a single run of the plan itself.
pub fn run_density_study(plan: &ExperimentPlan, workers: usize) -> Result<DensityOutput> {
    plan.validate()?;
    let arities = if plan.compare_arities.is_empty() { vec![plan.bank.arity] } else { plan.compare_arities.clone() };
    let objectives =
        if plan.compare_objectives.is_empty() { vec![plan.objective.variant] } else { plan.compare_objectives.clone() };
    let model = plan.build_model()?;
    let names = model.param_space().names().to_vec();
    let mut rows = Vec::new();
    let mut summaries = BTreeMap::new();
    for &arity in &arities {
        for &variant in &objectives {
            let mut sub = plan.clone();
            sub.bank.arity = arity;
            sub.objective.variant = variant;
            sub.compare_arities.clear();
            sub.compare_objectives.clear();
            let out = run_experiment(&sub, workers)?;
            summaries.insert(format!("arity={arity},objective={}", variant.as_str()), out.summary);
            rows.extend(out.records.into_iter().map(|r| (arity, variant, r)));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["arity", "objective"];
    header.extend(CSV_HEADER);
    w.write_record(&header)?;
    for (arity, variant, r) in &rows {
        for (j, name) in names.iter().enumerate() {
            let mut fields = vec![arity.to_string(), variant.as_str().to_string()];
            fields.extend(record_fields(r, j, name));
            w.write_record(fields)?;
        }
    }
    Ok(DensityOutput { rows, csv: finish_csv(w)?, summaries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point_index: usize,
    pub theta: Vec<f64>,
    pub feature_index: usize,
    pub mean: f64,
}

/// Simulated feature means along `grid`, with CRN shared across the grid
/// (stream `seed/SWEEP`) so curves are smooth in theta.
pub fn run_feature_sweep(
    model: &dyn Model,
    bank: &FeatureBank,
    grid: &[Vec<f64>],
    s: usize,
    n: usize,
    seed: &SeedSpec,
) -> Result<Vec<SweepRow>> {
    if s == 0 {
        return Err(Error::config("s", "must be at least 1"));
    }
    let space = model.param_space();
    for p in grid {
        space.check(p)?;
    }
    let sim = crate::estimator::CrnSimulator::new(model, bank, n, s, &mut derive_stream(&seed.child(tag::SWEEP)))?;
    let means = grid.par_iter().map(|p| sim.features(p).map(|f| f.mean)).collect::<Result<Vec<_>>>()?;
    Ok(grid
        .iter()
        .zip(means)
        .enumerate()
        .flat_map(|(i, (p, m))| {
            m.into_iter().enumerate().map(move |(f, mean)| SweepRow {
                point_index: i,
                theta: p.clone(),
                feature_index: f,
                mean,
            })
        })
        .collect())
}

/// Long-format sweep CSV: point index, one column per parameter, feature
/// index, simulated mean.
pub fn sweep_csv(rows: &[SweepRow], names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["point_index".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["feature_index".to_string(), "simulated_mean".to_string()]);
    w.write_record(&header)?;
    for r in rows {
        let mut fields = vec![r.point_index.to_string()];
        fields.extend(r.theta.iter().map(f64::to_string));
        fields.extend([r.feature_index.to_string(), r.mean.to_string()]);
        w.write_record(fields)?;
    }
    finish_csv(w)
}
