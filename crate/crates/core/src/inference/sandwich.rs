use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{inflated_covariance, matrix_rows, simulate_features_fresh, CrnSimulator, ObjectiveConfig, ObjectiveVariant};
use crate::features::FeatureBank;
use crate::models::Model;
use crate::rngstreams::{derive_stream, tag, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandwichSettings {
    /// Per-coordinate finite-difference steps; `None` uses
    /// `1e-4 * max(1, |theta_j|)`.
    pub fd_step: Option<Vec<f64>>,
    /// CRN replicates behind the Jacobian.
    pub s_jacobian: usize,
    /// Fresh replicates behind the feature covariance.
    pub s_variance: usize,
}

impl Default for SandwichSettings {
    fn default() -> Self {
        SandwichSettings {
            fd_step: None,
            s_jacobian: 200,
            s_variance: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// k x d Jacobian of the feature expectation.
    pub g: Vec<Vec<f64>>,
    /// k x k covariance of the data features.
    pub v: Vec<Vec<f64>>,
    /// d x d covariance of the estimate, including the `1 + 1/s` factor.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    /// Normal-approximation 95% intervals.
    pub wald_intervals: Vec<(f64, f64)>,
}

pub fn default_fd_steps(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| 1e-4 * t.abs().max(1.0)).collect()
}

/// Central-difference Jacobian (k x d) of the simulated feature mean.
pub fn fd_jacobian(sim: &CrnSimulator<'_>, theta: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mut columns = Vec::with_capacity(d);
    let mut probe = theta.to_vec();
    for j in 0..d {
        let h = steps[j];
        probe[j] = theta[j] + h;
        let up = sim.features(&probe)?.mean;
        probe[j] = theta[j] - h;
        let down = sim.features(&probe)?.mean;
        probe[j] = theta[j];
        columns.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let k = columns.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(k, d, |i, j| columns[j][i]))
}

/// `(g'wg)^-1 g'w v w g (g'wg)^-1 * (1 + 1/s)`; `w` defaults to the
/// identity and `s = None` drops the inflation factor.
pub fn sandwich_from_parts(
    g: &DMatrix<f64>,
    v: &DMatrix<f64>,
    weight: Option<&DMatrix<f64>>,
    s: Option<usize>,
) -> Result<DMatrix<f64>> {
    let (k, d) = g.shape();
    if v.shape() != (k, k) {
        return Err(Error::Input(format!("v is {:?}, expected {k}x{k}", v.shape())));
    }
    let wg = match weight {
        Some(w) => w * g,
        None => g.clone(),
    };
    let hessian = g.transpose() * &wg;
    let scale = hessian.amax();
    let bread = hessian
        .clone()
        .cholesky()
        .filter(|c| c.l().diagonal().iter().all(|x| *x * *x > 1e-14 * scale))
        .map(|c| c.inverse())
        .ok_or_else(|| {
            Error::Identifiability(format!("g'g is singular ({d} parameters, {k} features): the Jacobian is rank-deficient"))
        })?;
    let meat = wg.transpose() * v * &wg;
    let mut cov = &bread * meat * &bread;
    if let Some(s) = s {
        cov *= 1.0 + 1.0 / s as f64;
    }
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Sandwich covariance of the estimate at `theta_hat`.
///
/// The Jacobian comes from central differences with CRN across the stencil
/// (`seed/JACOBIAN`); the feature covariance from fresh replicates
/// (`seed/FEATURE_VARIANCE`).
pub fn sandwich_covariance(
    model: &dyn Model,
    theta_hat: &[f64],
    n: usize,
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    settings: &SandwichSettings,
    seed: &SeedSpec,
) -> Result<SandwichReport> {
    let space = model.param_space();
    space.check(theta_hat)?;
    let steps = settings.fd_step.clone().unwrap_or_else(|| default_fd_steps(theta_hat));
    if steps.len() != theta_hat.len() || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::config("fd_step", "needs one positive step per parameter"));
    }
    for (j, (&t, &h)) in theta_hat.iter().zip(&steps).enumerate() {
        if t - h < space.lower()[j] || t + h > space.upper()[j] {
            return Err(Error::Parameter(format!(
                "{} = {t} is within the finite-difference step of the boundary",
                space.names()[j]
            )));
        }
    }
    if settings.s_variance < 2 {
        return Err(Error::config("s_variance", "must be at least 2"));
    }

    let crn = CrnSimulator::new(model, bank, n, settings.s_jacobian.max(1), &mut derive_stream(&seed.child(tag::JACOBIAN)))?;
    let g = fd_jacobian(&crn, theta_hat, &steps)?;
    let fresh = simulate_features_fresh(
        model,
        theta_hat,
        n,
        bank,
        settings.s_variance,
        &mut derive_stream(&seed.child(tag::FEATURE_VARIANCE)),
    )?;
    let v = fresh.covariance.expect("s_variance >= 2");

    let weight = match config.variant {
        ObjectiveVariant::Distance => None,
        ObjectiveVariant::Weighted => config.weight_matrix.as_ref().map(|w| w.matrix().clone()),
        ObjectiveVariant::Wood => Some(
            inflated_covariance(&v, config.s, config.ridge)
                .try_inverse()
                .ok_or_else(|| Error::Estimation("feature covariance is singular".into()))?,
        ),
    };
    let cov = sandwich_from_parts(&g, &v, weight.as_ref(), Some(config.s))?;
    let std_errors: Vec<f64> = cov.diagonal().iter().map(|x| x.max(0.0).sqrt()).collect();
    let wald_intervals = theta_hat
        .iter()
        .zip(&std_errors)
        .map(|(t, se)| (t - 1.959_963_984_540_054 * se, t + 1.959_963_984_540_054 * se))
        .collect();
    Ok(SandwichReport {
        g: matrix_rows(&g),
        v: matrix_rows(&v),
        covariance: matrix_rows(&cov),
        std_errors,
        wald_intervals,
    })
}
