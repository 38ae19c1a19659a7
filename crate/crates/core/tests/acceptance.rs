//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rfmatch::anneal::{minimize, polish_allowance, AnnealSettings};
use rfmatch::baselines::{gaussian_mle, t_location_mle};
use rfmatch::estimator::{
    estimate, objective_weighted, simulate_features, CrnSimulator, ObjectiveConfig, SimulatedFeatures,
    SimulationBlock, WeightMatrix,
};
use rfmatch::features::{draw_bank, FeatureVector};
use rfmatch::harness::{draw_plan_bank, parse_plan, run_density_study, run_experiment, ExperimentOutput};
use rfmatch::inference::{
    embedding_diagnostic, fd_jacobian, rank_p_value, sandwich_covariance, sandwich_from_parts, test_point_null,
    SandwichSettings, Verdict, EmbeddingSettings,
};
use rfmatch::models::{model_by_id, simulate_trajectory, GaussianLocation, LogisticMap, ModelOptions, ParamSpace};
use rfmatch::rngstreams::{derive_stream, SeedSpec, Stream};

const SEED: u64 = 1;
const WORKERS: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn plan(lines: &[&str]) -> rfmatch::ExperimentPlan {
    let mut text = format!("seed = {SEED}\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    parse_plan(&text).expect("acceptance plan")
}

fn mse_at(out: &ExperimentOutput, n: usize, coord: usize) -> f64 {
    out.summary.iter().find(|s| s.n == n).unwrap().coordinates[coord].mse
}

fn hats(out: &ExperimentOutput, coord: usize) -> Vec<f64> {
    out.records.iter().filter_map(|r| r.theta_hat.as_ref().map(|t| t[coord])).collect()
}

fn aliased(x: &[f64]) -> usize {
    x.iter().filter(|v| v.abs() > 1.0).count()
}

fn near(x: &[f64]) -> Vec<f64> {
    x.iter().copied().filter(|v| v.abs() <= 1.0).collect()
}

fn sample_var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let m = x.len() / 2;
    if x.len() % 2 == 1 {
        x[m]
    } else {
        0.5 * (x[m - 1] + x[m])
    }
}

fn gaussian_plan() -> rfmatch::ExperimentPlan {
    plan(&[
        "model = gaussian-location",
        "true_theta = 0",
        "k = 3",
        "s = 10",
        "sample_sizes = 30, 100, 300, 1000",
        "trials = 100",
    ])
}

fn criterion_1() -> Outcome {
    let out = run_experiment(&gaussian_plan(), WORKERS).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for &n in &[30, 100, 300, 1000] {
        let mse = mse_at(&out, n, 0);
        pass &= mse <= 3.0 / n as f64;
        parts.push(format!("n={n} mse*n={:.3}", mse * n as f64));
    }
    pass &= mse_at(&out, 1000, 0) < mse_at(&out, 100, 0);
    parts.push(format!("estimates with |mu| > 1: {}", aliased(&hats(&out, 0))));
    outcome(pass, parts.join(", "))
}

fn criterion_2() -> Outcome {
    let model = GaussianLocation::default();
    let mut worst: f64 = 0.0;
    for i in 0..10u32 {
        let bank = draw_bank(1, 1, 1.0, &mut derive_stream(&SeedSpec::new(SEED, [100, i]))).unwrap();
        let mut st = derive_stream(&SeedSpec::new(SEED, [101, i]));
        let block = SimulationBlock::draw(&model, 10_000, 100, &mut st);
        let sim = simulate_features(&model, &[0.0], &bank, &block).unwrap();
        let w = bank.frequency_rows().next().unwrap()[0];
        let closed = (-w * w / 2.0).exp() * bank.phases()[0].cos();
        worst = worst.max((sim.mean[0] - closed).abs());
    }
    outcome(worst <= 0.01, format!("max |simulated - closed form| = {worst:.5}"))
}

fn criterion_3() -> Outcome {
    let p = plan(&["model = t-location", "true_theta = 0", "k = 3", "s = 10", "sample_sizes = 300", "trials = 100"]);
    let gaussian_bank = draw_plan_bank(&gaussian_plan(), 1, None).unwrap();
    let same_bank = draw_plan_bank(&p, 1, None).unwrap() == gaussian_bank;
    let out = run_experiment(&p, WORKERS).unwrap();
    let c = &out.summary[0].coordinates[0];
    let mle = c.baseline_mse.unwrap();
    outcome(
        same_bank && c.mse <= 3.0 * mle,
        format!("rf mse={:.5}, mle mse={:.5}, ratio={:.3}, shared bank={same_bank}", c.mse, mle, c.mse / mle),
    )
}

fn criterion_4() -> Outcome {
    let p = plan(&[
        "model = logistic-map",
        "true_theta = 0.9",
        "k = 3",
        "s = 10",
        "sample_sizes = 100",
        "trials = 100",
        "compare_arities = 1, 2",
    ]);
    let study = run_density_study(&p, WORKERS).unwrap();
    let med = |arity: usize| {
        median(
            study
                .rows
                .iter()
                .filter(|(a, _, r)| *a == arity && r.theta_hat.is_some())
                .map(|(_, _, r)| (r.theta_hat.as_ref().unwrap()[0] - 0.9).abs())
                .collect(),
        )
    };
    let (uni, biv) = (med(1), med(2));
    outcome(
        biv <= uni && biv <= 0.025,
        format!("median |r-0.9|: bivariate={biv:.5}, univariate={uni:.5} (threshold 0.025)"),
    )
}

fn criterion_5() -> Outcome {
    let p = plan(&[
        "model = noisy-logistic",
        "true_theta = 0.9, 0.1",
        "k = 5",
        "s = 10",
        "sample_sizes = 100, 1000",
        "trials = 50",
    ]);
    let out = run_experiment(&p, WORKERS).unwrap();
    let (r100, r1000) = (mse_at(&out, 100, 0), mse_at(&out, 1000, 0));
    let (s100, s1000) = (mse_at(&out, 100, 1), mse_at(&out, 1000, 1));
    outcome(
        r1000 < r100 && s1000 < s100,
        format!("mse r: {r100:.2e} -> {r1000:.2e}; mse sigma: {s100:.2e} -> {s1000:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let hats_for = |s: &str| {
        let p = plan(&["model = gaussian-location", "true_theta = 0", "k = 3", s, "sample_sizes = 100", "trials = 200"]);
        hats(&run_experiment(&p, WORKERS).unwrap(), 0)
    };
    let (h1, h50) = (hats_for("s = 1"), hats_for("s = 50"));
    let ratio = sample_var(&h1) / sample_var(&h50);
    let local = sample_var(&near(&h1)) / sample_var(&near(&h50));
    outcome(
        (1.4..=2.8).contains(&ratio),
        format!(
            "var(s=1)/var(s=50) = {ratio:.3} (theory about 1.96); estimates with |mu| > 1: {} and {}, ratio without them {local:.3}",
            aliased(&h1),
            aliased(&h50)
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = plan(&["model = gaussian-location", "true_theta = 0", "k = 3", "s = 10", "sample_sizes = 100", "trials = 200"]);
    let out = run_experiment(&p, WORKERS).unwrap();
    let all = hats(&out, 0);
    let sd = sample_var(&all).sqrt();
    let local_sd = sample_var(&near(&all)).sqrt();
    let model = p.build_model().unwrap();
    let bank = draw_plan_bank(&p, 1, None).unwrap();
    let theta_hat = out.records[0].theta_hat.clone().unwrap();
    let report = sandwich_covariance(
        model.as_ref(),
        &theta_hat,
        100,
        &bank,
        &p.objective,
        &SandwichSettings::default(),
        &SeedSpec::new(SEED, [200]),
    )
    .unwrap();
    let se = report.std_errors[0];
    let rel = se / sd - 1.0;
    outcome(
        rel.abs() <= 0.3,
        format!(
            "sandwich se={se:.5}, monte carlo sd={sd:.5}, relative gap={rel:+.3}; estimates with |mu| > 1: {}, sd without them {local_sd:.5}",
            aliased(&all)
        ),
    )
}

fn criterion_8() -> Outcome {
    let model = GaussianLocation::default();
    let bank = draw_plan_bank(&gaussian_plan(), 1, None).unwrap();
    let config = ObjectiveConfig::default();
    let mut rejections = 0;
    for run in 0..200u32 {
        let data = simulate_trajectory(&model, &[0.0], 100, &SeedSpec::new(SEED, [300, run])).unwrap().values;
        let r = test_point_null(&model, &[0.0], &data, &bank, &config, 99, &SeedSpec::new(SEED, [301, run])).unwrap();
        rejections += usize::from(r.p_value <= 0.10);
    }
    let rate = rejections as f64 / 200.0;
    outcome((0.05..=0.16).contains(&rate), format!("rejection rate at 0.10 = {rate:.3}"))
}

fn criterion_9() -> Outcome {
    let model = GaussianLocation::default();
    let bank = draw_plan_bank(&gaussian_plan(), 1, None).unwrap();
    let grid: Vec<Vec<f64>> = (0..50).map(|i| vec![-3.0 + 6.0 * i as f64 / 49.0]).collect();
    let d = embedding_diagnostic(&model, &grid, 100, &bank, &EmbeddingSettings::default(), &SeedSpec::new(SEED, [400]))
        .unwrap();
    outcome(
        d.verdict == Verdict::Pass,
        format!(
            "min separation ratio={:.4}, min jacobian singular value={:.4}",
            d.min_separation_ratio, d.jacobian_min_singular_value
        ),
    )
}

fn check(name: &str, ok: bool, failures: &mut Vec<String>) {
    if !ok {
        failures.push(name.to_string());
    }
}

fn uniform(st: &mut Stream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * st.next_uniform()
}

fn criterion_10() -> Outcome {
    let mut failures = Vec::new();
    let mut st = derive_stream(&SeedSpec::new(SEED, [500]));

    // feature boundedness
    let mut ok = true;
    for _ in 0..200 {
        let arity = 1 + (st.next_u64() % 2) as usize;
        let bank = draw_bank(7, arity, uniform(&mut st, 0.1, 5.0), &mut st).unwrap();
        let n = 2 + (st.next_u64() % 50) as usize;
        let scale = uniform(&mut st, 0.0, 1e3);
        let x: Vec<f64> = (0..n).map(|_| uniform(&mut st, -scale, scale)).collect();
        ok &= bank.eval(&x).unwrap().0.iter().all(|v| v.abs() <= 1.0);
    }
    check("feature boundedness", ok, &mut failures);

    // argmin scale-invariance on a theta-grid
    let model = GaussianLocation::default();
    let bank = draw_bank(3, 1, 1.0, &mut st).unwrap();
    let crn = CrnSimulator::new(&model, &bank, 100, 10, &mut st).unwrap();
    let grid: Vec<f64> = (0..100).map(|i| -3.0 + 0.06 * i as f64).collect();
    let sims: Vec<SimulatedFeatures> = grid.iter().map(|&m| crn.features(&[m]).unwrap()).collect();
    let mut ok = true;
    for _ in 0..20 {
        let obs = FeatureVector((0..3).map(|_| uniform(&mut st, -1.0, 1.0)).collect());
        let a = DMatrix::from_fn(3, 3, |_, _| uniform(&mut st, -1.0, 1.0));
        let w = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
        let c = uniform(&mut st, 0.01, 100.0);
        let argmin = |w: &WeightMatrix| {
            sims.iter()
                .map(|s| objective_weighted(&obs, s, w).unwrap())
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
                .0
        };
        ok &= argmin(&WeightMatrix::new(w.clone()).unwrap()) == argmin(&WeightMatrix::new(w * c).unwrap());
    }
    check("argmin scale-invariance", ok, &mut failures);

    // CRN bit-reproducibility
    let data = simulate_trajectory(&model, &[0.3], 100, &SeedSpec::new(SEED, [501])).unwrap().values;
    let settings = AnnealSettings::default();
    let a = estimate(&model, &data, &bank, &ObjectiveConfig::default(), &settings, &SeedSpec::new(SEED, [502])).unwrap();
    let b = estimate(&model, &data, &bank, &ObjectiveConfig::default(), &settings, &SeedSpec::new(SEED, [502])).unwrap();
    check(
        "CRN bit-reproducibility",
        a.theta_hat[0].to_bits() == b.theta_hat[0].to_bits() && a.objective_value.to_bits() == b.objective_value.to_bits(),
        &mut failures,
    );

    // worker-count independence
    let p = plan(&["model = gaussian-location", "true_theta = 0.2", "sample_sizes = 30, 60", "trials = 8"]);
    let one = run_experiment(&p, 1).unwrap().csv;
    let same = [2, 8].iter().all(|&w| run_experiment(&p, w).unwrap().csv == one);
    check("worker-count independent CSV", same, &mut failures);

    // sandwich scalar reduction
    let mut ok = true;
    for _ in 0..200 {
        let g = uniform(&mut st, -10.0, 10.0);
        let v = uniform(&mut st, 1e-3, 10.0);
        let c = sandwich_from_parts(&DMatrix::from_element(1, 1, g), &DMatrix::from_element(1, 1, v), None, None)
            .unwrap()[(0, 0)];
        ok &= (c - v / (g * g)).abs() <= 1e-12 * (v / (g * g));
    }
    check("sandwich scalar reduction", ok, &mut failures);

    // rank-based p-value range
    let mut ok = true;
    for _ in 0..200 {
        let b = 19 + (st.next_u64() % 200) as usize;
        let null: Vec<f64> = (0..b).map(|_| uniform(&mut st, 0.0, 1.0)).collect();
        let p = rank_p_value(uniform(&mut st, -0.1, 1.1), &null);
        let scaled = p * (b + 1) as f64;
        ok &= p >= 1.0 / (b + 1) as f64 && p <= 1.0 && (scaled - scaled.round()).abs() < 1e-9;
    }
    check("rank p-value range", ok, &mut failures);

    // baseline location equivariance
    let t = model_by_id("t-location", ModelOptions::default()).unwrap();
    let mut ok = true;
    for i in 0..100u32 {
        let x = simulate_trajectory(t.as_ref(), &[0.0], 50, &SeedSpec::new(SEED, [503, i])).unwrap().values;
        let c = uniform(&mut st, -50.0, 50.0);
        let y: Vec<f64> = x.iter().map(|v| v + c).collect();
        ok &= (gaussian_mle(&y).unwrap().theta_hat[0] - gaussian_mle(&x).unwrap().theta_hat[0] - c).abs() <= 1e-8;
        ok &= (t_location_mle(&y, 5.0).unwrap().theta_hat[0] - t_location_mle(&x, 5.0).unwrap().theta_hat[0] - c).abs()
            <= 1e-8;
    }
    check("baseline location equivariance", ok, &mut failures);

    // logistic-map range containment
    let logistic = LogisticMap::default();
    let mut ok = true;
    for i in 0..200u32 {
        let r = uniform(&mut st, 0.0, 1.0);
        let x = simulate_trajectory(&logistic, &[r], 200, &SeedSpec::new(SEED, [504, i])).unwrap().values;
        ok &= x.iter().all(|v| (0.0..=1.0).contains(v));
    }
    check("logistic-map range containment", ok, &mut failures);

    // annealer monotone best-trace and box compliance
    let space = ParamSpace::uniform_box(2, -2.0, 3.0);
    let mut ok = true;
    for i in 0..20u32 {
        let centre = [uniform(&mut st, -2.0, 3.0), uniform(&mut st, -2.0, 3.0)];
        let mut inside = true;
        let settings = AnnealSettings {
            max_evals: 500,
            record_trace: true,
            ..AnnealSettings::default()
        };
        let res = minimize(
            |x| {
                inside &= space.contains(x);
                (x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2) + (5.0 * x[0]).sin()
            },
            &space,
            &settings,
            &mut derive_stream(&SeedSpec::new(SEED, [505, i])),
        )
        .unwrap();
        ok &= inside && res.evals_used <= 500 + polish_allowance(2) && space.contains(&res.x_best);
        ok &= res.trace.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 >= w[0].0);
    }
    check("annealer monotone trace and box compliance", ok, &mut failures);

    // finite-difference Jacobian vs closed form
    let bank = draw_bank(3, 1, 1.0, &mut derive_stream(&SeedSpec::new(SEED, [506]))).unwrap();
    let crn = CrnSimulator::new(&model, &bank, 1000, 10_000, &mut derive_stream(&SeedSpec::new(SEED, [507]))).unwrap();
    let mut worst: f64 = 0.0;
    for mu in [-2.0, -0.5, 0.0, 1.0, 2.5] {
        let jac = fd_jacobian(&crn, &[mu], &[1e-4]).unwrap();
        for (i, row) in bank.frequency_rows().enumerate() {
            let w = row[0];
            let closed = -w * (-w * w / 2.0).exp() * (w * mu + bank.phases()[i]).sin();
            worst = worst.max((jac[(i, 0)] - closed).abs());
        }
    }
    check("finite-difference jacobian", worst <= 1e-3, &mut failures);

    let detail = if failures.is_empty() {
        format!("10 property checks green (jacobian max error {worst:.1e})")
    } else {
        format!("failing: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gaussian-location efficiency", criterion_1),
        ("feature-mean oracle", criterion_2),
        ("t-location vs MLE", criterion_3),
        ("logistic-map recovery", criterion_4),
        ("noisy-logistic consistency", criterion_5),
        ("variance inflation 1+1/s", criterion_6),
        ("sandwich vs Monte Carlo", criterion_7),
        ("test calibration", criterion_8),
        ("embedding diagnostic", criterion_9),
        ("property suites", criterion_10),
    ];
    let only: Option<usize> = std::env::var("RFMATCH_CRITERION").ok().and_then(|v| v.parse().ok());
    let mut all = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        all &= o.pass;
        println!(
            "criterion {:>2} {}: {} ({}) [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

