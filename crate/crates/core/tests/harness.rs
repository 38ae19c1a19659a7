use rfmatch::harness::{
    parse_plan, rerun_from_manifest, run_density_study, run_experiment, run_feature_sweep, summarize, sweep_csv,
    write_outputs, ExperimentPlan, RunManifest, TrialRecord,
};
use rfmatch::{derive_stream, draw_bank, model_by_id, ModelOptions, SeedSpec};

fn small_plan(extra: &str) -> ExperimentPlan {
    let mut lines = vec![
        "model = gaussian-location",
        "true_theta = 0.5",
        "seed = 11",
        "sample_sizes = 20, 40",
        "trials = 6",
        "max_evals = 400",
        "stall_evals = 150",
    ];
    for over in extra.lines() {
        let key = over.split('=').next().unwrap().trim();
        lines.retain(|l| l.split('=').next().unwrap().trim() != key);
        lines.push(over);
    }
    parse_plan(&lines.join("\n")).unwrap()
}

#[test]
fn single_trial_summary_is_its_squared_error() {
    let plan = small_plan("trials = 1\nsample_sizes = 50");
    let out = run_experiment(&plan, 1).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    let err = r.theta_hat.as_ref().unwrap()[0] - 0.5;
    assert_eq!(out.summary[0].coordinates[0].mse, err * err);
    assert_eq!(out.summary[0].coordinates[0].variance, 0.0);
}

#[test]
fn rerun_is_byte_identical() {
    let plan = small_plan("");
    let a = run_experiment(&plan, 2).unwrap();
    let b = run_experiment(&plan, 2).unwrap();
    assert_eq!(a.csv, b.csv);
}

#[test]
fn worker_count_does_not_change_output() {
    let plan = small_plan("");
    let one = run_experiment(&plan, 1).unwrap();
    for workers in [2, 8] {
        let other = run_experiment(&plan, workers).unwrap();
        assert_eq!(one.csv, other.csv, "workers = {workers}");
    }
}

#[test]
fn manifest_alone_reproduces_csv() {
    let plan = small_plan("");
    let out = run_experiment(&plan, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let manifest: RunManifest = serde_json::from_str(&text).unwrap();
    let again = rerun_from_manifest(&manifest, 1).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("trials.csv")).unwrap(), again.csv);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn per_trial_banks_are_reproducible() {
    let plan = small_plan("fixed_bank = false");
    let a = run_experiment(&plan, 1).unwrap();
    assert!(a.manifest.banks.is_empty());
    let again = rerun_from_manifest(&a.manifest, 3).unwrap();
    assert_eq!(a.csv, again.csv);
    assert_ne!(a.csv, run_experiment(&small_plan(""), 1).unwrap().csv);
}

#[test]
fn summary_mse_recomputes_from_csv() {
    let plan = small_plan("");
    let out = run_experiment(&plan, 1).unwrap();
    let mut reader = csv::Reader::from_reader(out.csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        vec!["trial_index", "n", "coordinate_name", "theta_true", "theta_hat", "baseline_hat", "objective_value", "flags"]
    );
    for s in &out.summary {
        let mut sq = Vec::new();
        let mut base = Vec::new();
        for row in reader.records() {
            let row = row.unwrap();
            if row[1].parse::<usize>().unwrap() != s.n {
                continue;
            }
            let truth: f64 = row[3].parse().unwrap();
            sq.push((row[4].parse::<f64>().unwrap() - truth).powi(2));
            base.push((row[5].parse::<f64>().unwrap() - truth).powi(2));
        }
        reader = csv::Reader::from_reader(out.csv.as_bytes());
        let mse = sq.iter().sum::<f64>() / sq.len() as f64;
        let bmse = base.iter().sum::<f64>() / base.len() as f64;
        assert!((mse - s.coordinates[0].mse).abs() <= 1e-12);
        assert!((bmse - s.coordinates[0].baseline_mse.unwrap()).abs() <= 1e-12);
        assert_eq!(sq.len(), plan.trials);
    }
}

#[test]
fn failed_trials_are_excluded_from_summary() {
    let ok = |i: usize, hat: f64| TrialRecord {
        trial_index: i,
        n: 10,
        theta_true: vec![0.0],
        theta_hat: Some(vec![hat]),
        baseline_hat: None,
        objective_value: Some(0.0),
        wall_time_secs: 0.0,
        flags: vec![],
    };
    let mut failed = ok(2, 0.0);
    failed.theta_hat = None;
    failed.flags = vec!["failed:estimation".into()];
    let records = vec![ok(0, 1.0), ok(1, -3.0), failed];
    let s = summarize(&records, &["mu".to_string()], &[10]);
    assert_eq!(s[0].failures, 1);
    assert_eq!(s[0].trials, 3);
    assert_eq!(s[0].coordinates[0].mse, 5.0);
    assert_eq!(s[0].coordinates[0].bias, -1.0);
    assert_eq!(s[0].coordinates[0].variance, 4.0);
    assert!(s[0].coordinates[0].baseline_mse.is_none());
}

#[test]
fn logistic_plan_has_empty_baseline_column() {
    let plan = parse_plan(
        "model = logistic-map\ntrue_theta = 0.9\nseed = 3\nsample_sizes = 50\ntrials = 2\nmax_evals = 300\nstall_evals = 100",
    )
    .unwrap();
    let out = run_experiment(&plan, 1).unwrap();
    for line in out.csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(5), Some(""));
    }
    assert!(out.summary[0].coordinates[0].baseline_mse.is_none());
}

#[test]
fn density_with_empty_axes_is_plain_run() {
    let plan = small_plan("");
    let plain = run_experiment(&plan, 1).unwrap();
    let study = run_density_study(&plan, 1).unwrap();
    assert_eq!(study.rows.len(), plain.records.len());
    for ((arity, _, r), p) in study.rows.iter().zip(&plain.records) {
        assert_eq!(*arity, 1);
        assert_eq!(r.theta_hat, p.theta_hat);
    }
}

#[test]
fn density_axes_cross_product() {
    let plan = small_plan("compare_arities = 1, 2\ncompare_objectives = distance, wood\ntrials = 2\nsample_sizes = 30");
    let study = run_density_study(&plan, 2).unwrap();
    assert_eq!(study.rows.len(), 2 * 2 * 2);
    assert_eq!(study.summaries.len(), 4);
    assert!(study.csv.starts_with("arity,objective,trial_index"));
}

#[test]
fn gaussian_sweep_tracks_characteristic_function() {
    let model = model_by_id("gaussian-location", ModelOptions::default()).unwrap();
    let bank = draw_bank(3, 1, 1.0, &mut derive_stream(&SeedSpec::new(5, [1]))).unwrap();
    let grid: Vec<Vec<f64>> = (0..61).map(|i| vec![-3.0 + 0.1 * i as f64]).collect();
    let rows = run_feature_sweep(model.as_ref(), &bank, &grid, 100, 1000, &SeedSpec::new(5, [2])).unwrap();
    assert_eq!(rows.len(), 61 * 3);
    let freqs: Vec<f64> = bank.frequency_rows().map(|r| r[0]).collect();
    for row in &rows {
        let w = freqs[row.feature_index];
        let closed = (-w * w / 2.0).exp() * (w * row.theta[0] + bank.phases()[row.feature_index]).cos();
        assert!((row.mean - closed).abs() < 0.01, "{row:?} vs {closed}");
    }
}

#[test]
fn single_point_sweep_has_one_row_per_feature() {
    let model = model_by_id("logistic-map", ModelOptions::default()).unwrap();
    let bank = draw_bank(3, 2, 1.0, &mut derive_stream(&SeedSpec::new(5, [1]))).unwrap();
    let rows = run_feature_sweep(model.as_ref(), &bank, &[vec![0.9]], 10, 100, &SeedSpec::new(5, [2])).unwrap();
    assert_eq!(rows.len(), 3);
    let text = sweep_csv(&rows, &["r".to_string()]).unwrap();
    assert_eq!(text.lines().next(), Some("point_index,r,feature_index,simulated_mean"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn logistic_sweep_curves_vary_with_r() {
    let model = model_by_id("logistic-map", ModelOptions::default()).unwrap();
    let bank = draw_bank(3, 2, 1.0, &mut derive_stream(&SeedSpec::new(5, [1]))).unwrap();
    let grid: Vec<Vec<f64>> = (0..51).map(|i| vec![0.5 + 0.01 * i as f64]).collect();
    let rows = run_feature_sweep(model.as_ref(), &bank, &grid, 10, 100, &SeedSpec::new(5, [2])).unwrap();
    for f in 0..3 {
        let curve: Vec<f64> = rows.iter().filter(|r| r.feature_index == f).map(|r| r.mean).collect();
        let lo = curve.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo > 1e-3, "feature {f} is flat");
    }
}
