use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use rfmatch::estimator::{estimate, estimate_two_step, variance_weight, ObjectiveConfig, ObjectiveVariant};
use rfmatch::harness::{
    parse_plan, run_density_study, run_experiment, run_feature_sweep, sweep_csv, workers_from_env, write_outputs,
};
use rfmatch::inference::{
    bootstrap_se, embedding_diagnostic, goodness_of_fit, sandwich_covariance, test_point_null, EmbeddingSettings,
    SandwichSettings,
};
use rfmatch::rngstreams::tag;
use rfmatch::{
    derive_stream, draw_bank, gaussian_mle, model_by_id, simulate_trajectory, t_location_mle, AnnealSettings, Error,
    FeatureBank, Model, ModelOptions, Result, SeedSpec,
};

use crate::args::{
    Baseline, BankArgs, Cli, Command, DiagnoseArgs, EstimateArgs, ExperimentArgs, GofArgs, ModelArgs, Objective,
    ObjectiveArgs, OptimizerArgs, SimulateArgs, SweepArgs, TestArgs,
};

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Test(a) => cmd_test(a),
        Command::Gof(a) => cmd_gof(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn pretty(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn build_model(a: &ModelArgs) -> Result<Box<dyn Model>> {
    model_by_id(&a.model, ModelOptions { burn_in: a.burn_in, t_df: a.t_df })
}

fn load_bank(path: &Path) -> Result<FeatureBank> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn bank_from(model: &dyn Model, seed: u64, label: u32, a: &BankArgs) -> Result<FeatureBank> {
    if let Some(path) = &a.bank {
        return load_bank(path);
    }
    let k = a.k.unwrap_or(2 * model.param_space().dim() + 1);
    if !(a.freq_scale > 0.0 && a.freq_scale.is_finite()) {
        return Err(Error::config("freq_scale", "must be positive"));
    }
    draw_bank(k, a.arity, a.freq_scale, &mut derive_stream(&SeedSpec::new(seed, [label, a.arity as u32])))
}

fn objective_config(a: &ObjectiveArgs) -> Result<ObjectiveConfig> {
    if a.s == 0 {
        return Err(Error::config("s", "must be at least 1"));
    }
    Ok(ObjectiveConfig {
        variant: match a.objective {
            Objective::Distance => ObjectiveVariant::Distance,
            Objective::Weighted => ObjectiveVariant::Weighted,
            Objective::Wood => ObjectiveVariant::Wood,
        },
        s: a.s,
        crn: a.crn.on(),
        ridge: a.ridge,
        ..ObjectiveConfig::default()
    })
}

fn anneal_settings(a: &OptimizerArgs) -> Result<AnnealSettings> {
    let settings = AnnealSettings {
        max_evals: a.max_evals,
        restarts: a.restarts,
        local_polish: a.polish.on(),
        ..AnnealSettings::default()
    };
    settings.validate()?;
    Ok(settings)
}

/// Reads a single-column CSV; a non-numeric first row is taken as a header.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let file = fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(file);
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 1 {
            return Err(Error::Input(format!("row {} has {} columns, expected 1", i + 1, record.len())));
        }
        match record[0].parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(Error::Input(format!("row {} is not finite", i + 1))),
            Err(_) if i == 0 => {}
            Err(_) => return Err(Error::Input(format!("row {}: cannot parse `{}`", i + 1, &record[0]))),
        }
    }
    if values.is_empty() {
        return Err(Error::Input(format!("{} holds no observations", path.display())));
    }
    Ok(values)
}

fn parse_theta(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::config(key, format!("cannot parse `{s}`"))))
        .collect()
}

/// `lo:hi:count` per dimension, comma-separated, expanded to a cartesian grid.
fn parse_grid(text: &str, d: usize) -> Result<Vec<Vec<f64>>> {
    let axes = text
        .split(',')
        .map(|spec| {
            let parts: Vec<&str> = spec.trim().split(':').collect();
            let bad = || Error::config("grid", format!("expected lo:hi:count, got `{spec}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].parse().map_err(|_| bad())?;
            let count: usize = parts[2].parse().map_err(|_| bad())?;
            if count == 0 {
                return Err(bad());
            }
            Ok(match count {
                1 => vec![lo],
                _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
            })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    if axes.len() != d {
        return Err(Error::config("grid", format!("model has {d} parameters, grid has {} axes", axes.len())));
    }
    let total: usize = axes.iter().map(Vec::len).product();
    if total > 10_000 {
        return Err(Error::config("grid", format!("{total} points exceeds 10000")));
    }
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    Ok(grid)
}

fn write_or_return(text: String, output: Option<&Path>) -> Result<String> {
    match output {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let data = read_series(&a.data)?;
    let bank = bank_from(model.as_ref(), a.model.seed, tag::BANK, &a.bank)?;
    let config = objective_config(&a.objective)?;
    let settings = anneal_settings(&a.optimizer)?;
    let seed = SeedSpec::new(a.model.seed, [tag::ESTIMATE]);
    let report = if config.variant == ObjectiveVariant::Weighted {
        estimate_two_step(model.as_ref(), &data, &bank, &config, &settings, &seed)?
    } else {
        estimate(model.as_ref(), &data, &bank, &config, &settings, &seed)?
    };
    let mut out = json!({ "estimate": report, "feature_bank": bank });
    if a.baseline == Baseline::Mle {
        let baseline = match a.model.model.as_str() {
            "gaussian-location" => gaussian_mle(&data)?,
            "t-location" => t_location_mle(&data, a.model.t_df)?,
            other => return Err(Error::config("baseline", format!("no likelihood baseline for {other}"))),
        };
        out["baseline"] = json!(baseline);
    }
    let stage_config = report.weight_matrix.clone().map_or(config.clone(), |w| ObjectiveConfig {
        weight_matrix: Some(w),
        ..config.clone()
    });
    if a.sandwich {
        let sandwich = sandwich_covariance(
            model.as_ref(),
            &report.theta_hat,
            data.len(),
            &bank,
            &stage_config,
            &SandwichSettings::default(),
            &seed,
        )?;
        out["sandwich"] = json!(sandwich);
    }
    if let Some(b) = a.bootstrap {
        let boot = bootstrap_se(model.as_ref(), &report.theta_hat, data.len(), &bank, &stage_config, &settings, b, &seed)?;
        out["bootstrap"] = json!(boot);
    }
    pretty(&out)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<String> {
    let mut plan = parse_plan(&fs::read_to_string(&a.plan)?)?;
    if let Some(dir) = a.output {
        plan.output = Some(dir);
    }
    let workers = workers_from_env()?;
    if !plan.compare_arities.is_empty() || !plan.compare_objectives.is_empty() {
        let study = run_density_study(&plan, workers)?;
        if let Some(dir) = &plan.output {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("density.csv"), &study.csv)?;
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&study.summaries)?)?;
            fs::write(dir.join("plan.json"), serde_json::to_string_pretty(&plan)?)?;
        }
        return pretty(&json!({ "summaries": study.summaries }));
    }
    let out = run_experiment(&plan, workers)?;
    if let Some(dir) = &plan.output {
        write_outputs(&out, dir)?;
    }
    pretty(&json!({ "summary": out.summary, "failures": out.manifest.failures.len() }))
}

fn cmd_sweep(a: SweepArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let bank = bank_from(model.as_ref(), a.model.seed, tag::BANK, &a.bank)?;
    let grid = parse_grid(&a.grid, model.param_space().dim())?;
    let rows = run_feature_sweep(model.as_ref(), &bank, &grid, a.s, a.n, &SeedSpec::new(a.model.seed, [tag::SWEEP]))?;
    let csv = sweep_csv(&rows, model.param_space().names())?;
    write_or_return(csv, a.output.as_deref())
}

fn cmd_test(a: TestArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let data = read_series(&a.data)?;
    let bank = bank_from(model.as_ref(), a.model.seed, tag::BANK, &a.bank)?;
    let theta0 = parse_theta("theta0", &a.theta0)?;
    model.param_space().check(&theta0).map_err(|e| Error::config("theta0", e.to_string()))?;
    let mut config = objective_config(&a.objective)?;
    let seed = SeedSpec::new(a.model.seed, [tag::NULL]);
    if config.variant == ObjectiveVariant::Weighted {
        let mut stream = derive_stream(&seed.child(tag::PILOT_VARIANCE));
        config.weight_matrix = Some(variance_weight(model.as_ref(), &theta0, data.len(), &bank, &config, &mut stream)?);
    }
    let report = test_point_null(model.as_ref(), &theta0, &data, &bank, &config, a.b, &seed)?;
    pretty(&json!(report))
}

fn cmd_gof(a: GofArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let data = read_series(&a.data)?;
    let bank = bank_from(model.as_ref(), a.model.seed, tag::BANK, &a.bank)?;
    let holdout = match &a.holdout_bank {
        Some(path) => load_bank(path)?,
        None => {
            let drawn = BankArgs { bank: None, k: Some(bank.k()), ..a.bank.clone() };
            bank_from(model.as_ref(), a.model.seed, tag::HOLDOUT_BANK, &drawn)?
        }
    };
    let config = objective_config(&a.objective)?;
    let theta = match &a.theta {
        Some(text) => {
            let theta = parse_theta("theta", text)?;
            model.param_space().check(&theta).map_err(|e| Error::config("theta", e.to_string()))?;
            theta
        }
        None => {
            let settings = anneal_settings(&a.optimizer)?;
            let seed = SeedSpec::new(a.model.seed, [tag::ESTIMATE]);
            let report = if config.variant == ObjectiveVariant::Weighted {
                estimate_two_step(model.as_ref(), &data, &bank, &config, &settings, &seed)?
            } else {
                estimate(model.as_ref(), &data, &bank, &config, &settings, &seed)?
            };
            report.theta_hat
        }
    };
    let report = goodness_of_fit(
        model.as_ref(),
        &theta,
        &data,
        &bank,
        &holdout,
        &config,
        a.b,
        &SeedSpec::new(a.model.seed, [tag::HOLDOUT_BANK]),
    )?;
    pretty(&json!({ "theta": theta, "holdout_bank_id": holdout.id(), "test": report }))
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let bank = bank_from(model.as_ref(), a.model.seed, tag::BANK, &a.bank)?;
    let grid = parse_grid(&a.grid, model.param_space().dim())?;
    let thresholds = parse_theta("thresholds", &a.thresholds)?;
    if thresholds.len() != 2 {
        return Err(Error::config("thresholds", "expected two values: separation, singular value"));
    }
    let settings = EmbeddingSettings {
        s_big: a.s_big,
        min_separation: thresholds[0],
        min_singular_value: thresholds[1],
        ..EmbeddingSettings::default()
    };
    let diag = embedding_diagnostic(
        model.as_ref(),
        &grid,
        a.n,
        &bank,
        &settings,
        &SeedSpec::new(a.model.seed, [tag::DIAGNOSTIC]),
    )?;
    let mut value = json!(diag);
    if a.brief {
        if let Some(obj) = value.as_object_mut() {
            obj.remove("phi_values");
            obj.remove("grid");
        }
    }
    pretty(&value)
}

fn cmd_simulate(a: SimulateArgs) -> Result<String> {
    let model = build_model(&a.model)?;
    let theta = parse_theta("true_theta", &a.true_theta)?;
    let traj = simulate_trajectory(model.as_ref(), &theta, a.n, &SeedSpec::new(a.model.seed, [tag::DATA]))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x"])?;
    for v in &traj.values {
        w.write_record([v.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))?;
    write_or_return(text, a.output.as_deref())
}
