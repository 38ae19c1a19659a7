use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CrnSimulator;
use crate::features::FeatureBank;
use crate::models::{Model, ParamSpace};
use crate::rngstreams::{derive_stream, tag, SeedSpec};

pub const MAX_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    /// CRN replicates shared across the grid.
    pub s_big: usize,
    /// Per-coordinate finite-difference steps; `None` uses
    /// `1e-4 * max(1, |theta_j|)` at each point.
    pub fd_step: Option<Vec<f64>>,
    pub min_separation: f64,
    pub min_singular_value: f64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            s_big: 200,
            fd_step: None,
            min_separation: 1e-3,
            min_singular_value: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDiagnostic {
    pub grid: Vec<Vec<f64>>,
    pub phi_values: Vec<Vec<f64>>,
    pub min_separation_ratio: f64,
    /// Grid indices of the pair attaining the minimum ratio.
    pub worst_pair: (usize, usize),
    pub jacobian_min_singular_value: f64,
    pub worst_jacobian_point: usize,
    pub verdict: Verdict,
}

/// Cartesian grid with `sizes[j]` evenly spaced points on `[lower_j, upper_j]`.
pub fn grid_points(space: &ParamSpace, sizes: &[usize]) -> Result<Vec<Vec<f64>>> {
    if sizes.len() != space.dim() {
        return Err(Error::config("grid", format!("expected {} sizes, got {}", space.dim(), sizes.len())));
    }
    if sizes.iter().any(|&m| m < 2) {
        return Err(Error::config("grid", "needs at least 2 points per dimension"));
    }
    let total = sizes.iter().try_fold(1usize, |acc, &m| acc.checked_mul(m)).unwrap_or(usize::MAX);
    if total > MAX_GRID_POINTS {
        return Err(Error::config("grid", format!("{total} points exceeds {MAX_GRID_POINTS}")));
    }
    let mut grid = vec![Vec::new()];
    for (j, &m) in sizes.iter().enumerate() {
        let (lo, hi) = (space.lower()[j], space.upper()[j]);
        let axis: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
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

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Jacobian with central differences, one-sided where the stencil would
/// leave the box.
fn jacobian(sim: &CrnSimulator<'_>, space: &ParamSpace, theta: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let base = sim.features(theta)?.mean;
    let k = base.len();
    let d = theta.len();
    let mut jac = DMatrix::zeros(k, d);
    let mut probe = theta.to_vec();
    for j in 0..d {
        let h = steps[j];
        let up_ok = theta[j] + h <= space.upper()[j];
        let down_ok = theta[j] - h >= space.lower()[j];
        let (up, down, width) = match (up_ok, down_ok) {
            (true, true) => (theta[j] + h, theta[j] - h, 2.0 * h),
            (true, false) => (theta[j] + h, theta[j], h),
            (false, true) => (theta[j], theta[j] - h, h),
            (false, false) => return Err(Error::config("fd_step", "step exceeds the box width")),
        };
        probe[j] = up;
        let fu = if up == theta[j] { base.clone() } else { sim.features(&probe)?.mean };
        probe[j] = down;
        let fd = if down == theta[j] { base.clone() } else { sim.features(&probe)?.mean };
        probe[j] = theta[j];
        for i in 0..k {
            jac[(i, j)] = (fu[i] - fd[i]) / width;
        }
    }
    Ok(jac)
}

/// Checks numerically that the simulated feature map is injective with a
/// non-degenerate Jacobian over `grid`. A failing verdict is a valid result.
///
/// CRN replicates come from `seed/DIAGNOSTIC` and are shared by every point.
pub fn embedding_diagnostic(
    model: &dyn Model,
    grid: &[Vec<f64>],
    n: usize,
    bank: &FeatureBank,
    settings: &EmbeddingSettings,
    seed: &SeedSpec,
) -> Result<EmbeddingDiagnostic> {
    if grid.len() < 2 {
        return Err(Error::config("grid", "needs at least 2 points"));
    }
    if grid.len() > MAX_GRID_POINTS {
        return Err(Error::config("grid", format!("{} points exceeds {MAX_GRID_POINTS}", grid.len())));
    }
    if settings.s_big == 0 {
        return Err(Error::config("s_big", "must be positive"));
    }
    let space = model.param_space();
    for p in grid {
        space.check(p)?;
    }
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            if distance(&grid[i], &grid[j]) == 0.0 {
                return Err(Error::config("grid", format!("points {i} and {j} coincide")));
            }
        }
    }
    let sim = CrnSimulator::new(model, bank, n, settings.s_big, &mut derive_stream(&seed.child(tag::DIAGNOSTIC)))?;

    let phi_values = grid
        .par_iter()
        .map(|p| sim.features(p).map(|f| f.mean))
        .collect::<Result<Vec<_>>>()?;

    let per_row: Vec<Option<(f64, usize, usize)>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(f64, usize, usize)> = None;
            for j in i + 1..grid.len() {
                let dt = distance(&grid[i], &grid[j]);
                let ratio = distance(&phi_values[i], &phi_values[j]) / dt;
                if best.is_none_or(|b| ratio < b.0) {
                    best = Some((ratio, i, j));
                }
            }
            best
        })
        .collect();
    let (min_separation_ratio, a, b) = per_row
        .into_iter()
        .flatten()
        .fold((f64::INFINITY, 0, 1), |acc, x| if x.0 < acc.0 { x } else { acc });

    let singular = grid
        .par_iter()
        .map(|p| {
            let steps = settings
                .fd_step
                .clone()
                .unwrap_or_else(|| p.iter().map(|t| 1e-4 * t.abs().max(1.0)).collect());
            let jac = jacobian(&sim, space, p, &steps)?;
            Ok(jac.singular_values().min())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (worst_jacobian_point, jacobian_min_singular_value) = singular
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });

    let verdict = if min_separation_ratio >= settings.min_separation
        && jacobian_min_singular_value >= settings.min_singular_value
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(EmbeddingDiagnostic {
        grid: grid.to_vec(),
        phi_values,
        min_separation_ratio,
        worst_pair: (a, b),
        jacobian_min_singular_value,
        worst_jacobian_point,
        verdict,
    })
}
