use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::{
    discrepancy, inflated_covariance, variance_weight, FeatureObjective, ObjectiveConfig, ObjectiveVariant,
    SimulatedFeatures,
};
use crate::features::{FeatureBank, FeatureVector};
use crate::models::{simulate_trajectory, Model};
use crate::rngstreams::{derive_stream, tag, SeedSpec};

/// Asymptotic supplement from the Gaussian approximation: the Mahalanobis
/// distance of the observed features, compared to chi-square with k degrees
/// of freedom. Approximate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareApprox {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_square_approx: Option<ChiSquareApprox>,
}

/// `(1 + #{null >= observed}) / (B + 1)`.
pub fn rank_p_value(observed: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&x| x >= observed).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

fn chi_square(observed: &FeatureVector, sim: &SimulatedFeatures, config: &ObjectiveConfig) -> Option<ChiSquareApprox> {
    let cov = sim.covariance.as_ref()?;
    let k = observed.0.len();
    let sigma = inflated_covariance(cov, config.s, config.ridge);
    let chol = sigma.cholesky()?;
    let r = nalgebra::DVector::from_iterator(k, observed.0.iter().zip(&sim.mean).map(|(a, b)| a - b));
    let statistic = r.dot(&chol.solve(&r));
    let p_value = 1.0 - ChiSquared::new(k as f64).ok()?.cdf(statistic);
    Some(ChiSquareApprox { statistic, df: k, p_value })
}

/// Simulation-based test of `theta = theta0`.
///
/// The feature expectation at `theta0` is simulated once from
/// `seed/SIMULATION`; the observed statistic and the `b` null statistics
/// (datasets from `seed/NULL/i`) are all discrepancies against it.
pub fn test_point_null(
    model: &dyn Model,
    theta0: &[f64],
    data: &[f64],
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    b: usize,
    seed: &SeedSpec,
) -> Result<TestReport> {
    if b < 19 {
        return Err(Error::config("B", format!("needs at least 19 null samples, got {b}")));
    }
    model.check_theta(theta0)?;
    config.validate(bank.k())?;
    let observed = bank.eval(data)?;
    let n = data.len();
    let mut objective = FeatureObjective::new(model, bank, config, observed.clone(), n, &seed.child(tag::SIMULATION))?;
    let sim = objective.simulated(theta0)?;
    let statistic = discrepancy(config, &observed, &sim)?;
    let null_samples = (0..b as u32)
        .into_par_iter()
        .map(|i| {
            let x = simulate_trajectory(model, theta0, n, &seed.children(&[tag::NULL, i]))?;
            discrepancy(config, &bank.eval(&x.values)?, &sim)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p_value = rank_p_value(statistic, &null_samples);
    Ok(TestReport {
        statistic,
        p_value,
        chi_square_approx: chi_square(&observed, &sim, config),
        null_samples,
    })
}

/// Point-null test at `theta_hat` on held-out features.
///
/// A weighted configuration gets a fresh inverse-variance weight for the
/// holdout bank (from `seed/PILOT_VARIANCE`), since the estimation weight
/// has the wrong features.
#[allow(clippy::too_many_arguments)]
pub fn goodness_of_fit(
    model: &dyn Model,
    theta_hat: &[f64],
    data: &[f64],
    estimation_bank: &FeatureBank,
    holdout_bank: &FeatureBank,
    config: &ObjectiveConfig,
    b: usize,
    seed: &SeedSpec,
) -> Result<TestReport> {
    if holdout_bank == estimation_bank || holdout_bank.id() == estimation_bank.id() {
        return Err(Error::config("holdout_bank", "is identical to the estimation bank"));
    }
    let mut config = config.clone();
    if config.variant == ObjectiveVariant::Weighted {
        let w = variance_weight(
            model,
            theta_hat,
            data.len(),
            holdout_bank,
            &config,
            &mut derive_stream(&seed.child(tag::PILOT_VARIANCE)),
        )?;
        config.weight_matrix = Some(w);
    }
    test_point_null(model, theta_hat, data, holdout_bank, &config, b, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::draw_bank;
    use crate::models::{GaussianLocation, LogisticMap};
    use proptest::prelude::*;

    fn bank(label: u32) -> FeatureBank {
        draw_bank(3, 1, 1.0, &mut derive_stream(&SeedSpec::new(8, [label]))).unwrap()
    }

    #[test]
    fn extreme_ranks() {
        let null = [1.0, 2.0, 3.0];
        assert_eq!(rank_p_value(10.0, &null), 0.25);
        assert_eq!(rank_p_value(0.5, &null), 1.0);
        assert_eq!(rank_p_value(2.0, &null), 0.75);
    }

    #[test]
    fn small_b_rejected() {
        let model = GaussianLocation::default();
        let data = vec![0.0; 20];
        let err = test_point_null(&model, &[0.0], &data, &bank(1), &ObjectiveConfig::default(), 18, &SeedSpec::new(1, [1]));
        assert!(matches!(err, Err(Error::Config { ref key, .. }) if key == "B"));
    }

    #[test]
    fn minimum_b_resolution() {
        let model = GaussianLocation::default();
        let data = simulate_trajectory(&model, &[0.0], 100, &SeedSpec::new(2, [3])).unwrap().values;
        let r = test_point_null(&model, &[0.0], &data, &bank(1), &ObjectiveConfig::default(), 19, &SeedSpec::new(2, [4])).unwrap();
        let scaled = r.p_value * 20.0;
        assert!((scaled - scaled.round()).abs() < 1e-12);
        assert_eq!(r.null_samples.len(), 19);
    }

    #[test]
    fn far_null_rejected() {
        let model = GaussianLocation::default();
        let data = simulate_trajectory(&model, &[2.0], 300, &SeedSpec::new(2, [3])).unwrap().values;
        let r = test_point_null(&model, &[0.0], &data, &bank(1), &ObjectiveConfig::default(), 99, &SeedSpec::new(2, [4])).unwrap();
        assert_eq!(r.p_value, 0.01);
    }

    #[test]
    fn wood_reports_chi_square() {
        let model = GaussianLocation::default();
        let data = simulate_trajectory(&model, &[0.0], 100, &SeedSpec::new(2, [3])).unwrap().values;
        let config = ObjectiveConfig {
            variant: ObjectiveVariant::Wood,
            s: 50,
            ..ObjectiveConfig::default()
        };
        let r = test_point_null(&model, &[0.0], &data, &bank(1), &config, 19, &SeedSpec::new(2, [4])).unwrap();
        let chi = r.chi_square_approx.unwrap();
        assert_eq!(chi.df, 3);
        assert!(chi.statistic >= 0.0 && (0.0..=1.0).contains(&chi.p_value));
    }

    #[test]
    fn holdout_identical_to_estimation_bank_rejected() {
        let model = GaussianLocation::default();
        let data = vec![0.0; 50];
        let b = bank(1);
        let err = goodness_of_fit(&model, &[0.0], &data, &b, &b.clone(), &ObjectiveConfig::default(), 19, &SeedSpec::new(1, [1]));
        assert!(matches!(err, Err(Error::Config { ref key, .. }) if key == "holdout_bank"));
    }

    #[test]
    fn gross_misspecification_detected() {
        let model = GaussianLocation::default();
        let truth = LogisticMap::default();
        let est = bank(1);
        let holdout = bank(2);
        let mut rejections = 0;
        for run in 0..10u32 {
            let data = simulate_trajectory(&truth, &[0.9], 1000, &SeedSpec::new(5, [run])).unwrap().values;
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            let r = goodness_of_fit(&model, &[mean], &data, &est, &holdout, &ObjectiveConfig::default(), 99, &SeedSpec::new(6, [run]))
                .unwrap();
            rejections += usize::from(r.p_value <= 0.05);
        }
        assert!(rejections >= 9, "{rejections}");
    }

    proptest! {
        #[test]
        fn p_value_on_rank_lattice(obs in -5.0f64..5.0, null in proptest::collection::vec(-5.0f64..5.0, 19..120)) {
            let p = rank_p_value(obs, &null);
            let b = null.len() as f64;
            prop_assert!(p >= 1.0 / (b + 1.0) && p <= 1.0);
            let scaled = p * (b + 1.0);
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }
}
