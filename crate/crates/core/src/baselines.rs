//! Likelihood-based reference estimators for the location models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    ClosedFormMle,
    NumericMle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub theta_hat: Vec<f64>,
    pub method: BaselineMethod,
}

/// Sample mean.
pub fn gaussian_mle(series: &[f64]) -> Result<BaselineResult> {
    if series.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok(BaselineResult {
        theta_hat: vec![mean],
        method: BaselineMethod::ClosedFormMle,
    })
}

fn median(series: &[f64]) -> f64 {
    let mut v = series.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Score and its derivative of the Student-t location log-likelihood.
fn score(series: &[f64], mu: f64, df: f64) -> (f64, f64) {
    series.iter().fold((0.0, 0.0), |(s, h), &x| {
        let r = x - mu;
        let q = df + r * r;
        (s + (df + 1.0) * r / q, h - (df + 1.0) * (df - r * r) / (q * q))
    })
}

/// Student-t location MLE by safeguarded Newton on the score, started at the
/// median and kept inside a sign-change bracket.
pub fn t_location_mle(series: &[f64], df: f64) -> Result<BaselineResult> {
    const TOL: f64 = 1e-8;
    if series.len() < 2 {
        return Err(Error::Input("t-location MLE needs at least 2 observations".into()));
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::config("df", "degrees of freedom must be positive"));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("series contains non-finite values".into()));
    }
    let mut lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mu = median(series);
    for _ in 0..200 {
        let (s, h) = score(series, mu, df);
        if s == 0.0 {
            return finish(mu);
        }
        if s > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        if hi - lo <= TOL {
            return finish(0.5 * (lo + hi));
        }
        let newton = mu - s / h;
        if h < 0.0 && newton > lo && newton < hi {
            if (newton - mu).abs() <= TOL {
                return finish(newton);
            }
            mu = newton;
        } else {
            mu = 0.5 * (lo + hi);
        }
    }
    Err(Error::Estimation("t-location MLE did not converge".into()))
}

fn finish(mu: f64) -> Result<BaselineResult> {
    Ok(BaselineResult {
        theta_hat: vec![mu],
        method: BaselineMethod::NumericMle,
    })
}
