use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::AnnealSettings;
use crate::error::{Error, Result};
use crate::estimator::{estimate, ObjectiveConfig};
use crate::features::FeatureBank;
use crate::models::{simulate_trajectory, Model};
use crate::rngstreams::{tag, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub std_errors: Vec<f64>,
    /// [2.5%, 97.5%] percentile intervals per coordinate.
    pub percentile_intervals: Vec<(f64, f64)>,
    /// Successful re-estimates, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    pub requested: usize,
    pub failures: usize,
}

/// Linear-interpolation quantile of an ascending sample.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Parametric bootstrap: simulate `b` datasets at `theta_hat` and re-estimate
/// each with its own CRN block. Replicate `i` uses `seed/BOOTSTRAP/i`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_se(
    model: &dyn Model,
    theta_hat: &[f64],
    n: usize,
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    settings: &AnnealSettings,
    b: usize,
    seed: &SeedSpec,
) -> Result<BootstrapReport> {
    let seeds: Vec<SeedSpec> = (0..b as u32).map(|i| seed.children(&[tag::BOOTSTRAP, i])).collect();
    bootstrap_with_seeds(model, theta_hat, n, bank, config, settings, &seeds)
}

/// Bootstrap over explicit per-replicate seeds.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_with_seeds(
    model: &dyn Model,
    theta_hat: &[f64],
    n: usize,
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    settings: &AnnealSettings,
    seeds: &[SeedSpec],
) -> Result<BootstrapReport> {
    if seeds.len() < 2 {
        return Err(Error::config("B", "bootstrap needs at least 2 replicates"));
    }
    model.check_theta(theta_hat)?;
    let outcomes: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|s| {
            let data = simulate_trajectory(model, theta_hat, n, &s.child(tag::DATA))?;
            estimate(model, &data.values, bank, config, settings, &s.child(tag::ESTIMATE)).map(|r| r.theta_hat)
        })
        .collect();
    let requested = seeds.len();
    let replicates: Vec<Vec<f64>> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failures = requested - replicates.len();
    if failures * 5 > requested || replicates.len() < 2 {
        return Err(Error::Estimation(format!("{failures} of {requested} bootstrap re-estimates failed")));
    }
    let d = theta_hat.len();
    let m = replicates.len() as f64;
    let mut std_errors = Vec::with_capacity(d);
    let mut percentile_intervals = Vec::with_capacity(d);
    for j in 0..d {
        let mut col: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        std_errors.push(var.sqrt());
        col.sort_by(f64::total_cmp);
        percentile_intervals.push((percentile(&col, 0.025), percentile(&col, 0.975)));
    }
    Ok(BootstrapReport {
        std_errors,
        percentile_intervals,
        replicates,
        requested,
        failures,
    })
}
