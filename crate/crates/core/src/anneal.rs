//! Box-constrained generalized simulated annealing.
//!
//! Proposals come from the Tsallis visiting distribution with parameter
//! `visiting_param`; acceptance uses the generalized Metropolis rule with
//! parameter `acceptance_param`. Each iteration runs a chain of `2d` moves:
//! `d` moves of all coordinates, then one move per coordinate. Proposals are
//! reflected into the box. When the temperature falls below
//! `restart_temp_ratio * initial_temp` the chain reheats from a random point.
//! Independent restarts share the evaluation budget, and a coordinate-wise
//! golden-section polish refines the best point at the end.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::models::ParamSpace;
use crate::rngstreams::Stream;
use crate::special::normal_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSettings {
    /// Annealing budget in objective evaluations, shared by all restarts.
    pub max_evals: usize,
    pub initial_temp: f64,
    pub visiting_param: f64,
    pub acceptance_param: f64,
    /// Number of independent annealing runs.
    pub restarts: usize,
    pub local_polish: bool,
    /// Improvements of `f_best` at or below this do not count as progress.
    pub tolerance: f64,
    /// A run stops (converged) after this many evaluations without progress.
    pub stall_evals: usize,
    pub restart_temp_ratio: f64,
    pub record_trace: bool,
}

impl Default for AnnealSettings {
    fn default() -> Self {
        AnnealSettings {
            max_evals: 10_000,
            initial_temp: 5230.0,
            visiting_param: 2.62,
            acceptance_param: -5.0,
            restarts: 2,
            local_polish: true,
            tolerance: 1e-12,
            stall_evals: 1500,
            restart_temp_ratio: 2e-5,
            record_trace: false,
        }
    }
}

impl AnnealSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(Error::config("max_evals", "must be at least 1"));
        }
        if !(self.initial_temp > 0.0 && self.initial_temp.is_finite()) {
            return Err(Error::config("initial_temp", "must be positive"));
        }
        if !(self.visiting_param > 1.0 && self.visiting_param < 3.0) {
            return Err(Error::config("visiting_param", "must lie in (1, 3)"));
        }
        if !self.acceptance_param.is_finite() || self.acceptance_param >= 1.0 {
            return Err(Error::config("acceptance_param", "must be finite and below 1"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "must be at least 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("tolerance", "must be nonnegative"));
        }
        if self.stall_evals == 0 {
            return Err(Error::config("stall_evals", "must be at least 1"));
        }
        if !(self.restart_temp_ratio > 0.0 && self.restart_temp_ratio < 1.0) {
            return Err(Error::config("restart_temp_ratio", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub evals_used: usize,
    /// `(evaluation index, best value so far)` at each improvement.
    pub trace: Vec<(usize, f64)>,
    /// Every run ended by the stall rule rather than the budget.
    pub converged: bool,
}

/// Upper bound on evaluations spent by the final polish.
pub fn polish_allowance(d: usize) -> usize {
    POLISH_ROUNDS * POLISH_EVALS_PER_COORD * d
}

const POLISH_ROUNDS: usize = 3;
const POLISH_EVALS_PER_COORD: usize = 30;
const TAIL_LIMIT: f64 = 1e8;

struct Visiting {
    qv: f64,
    factor4_p: f64,
    factor6: f64,
}

impl Visiting {
    fn new(qv: f64) -> Self {
        let factor2 = ((4.0 - qv) * (qv - 1.0).ln()).exp();
        let factor3 = ((2.0 - qv) * 2f64.ln() / (qv - 1.0)).exp();
        let factor4_p = PI.sqrt() * factor2 / (factor3 * (3.0 - qv));
        let factor5 = 1.0 / (qv - 1.0) - 0.5;
        let d1 = 2.0 - factor5;
        let factor6 = PI * (1.0 - factor5) / (PI * (1.0 - factor5)).sin() / ln_gamma(d1).exp();
        Visiting { qv, factor4_p, factor6 }
    }

    fn draw(&self, temperature: f64, stream: &mut Stream) -> f64 {
        let qv = self.qv;
        let x = normal_quantile(stream.next_uniform());
        let y = normal_quantile(stream.next_uniform());
        let factor1 = (temperature.ln() / (qv - 1.0)).exp();
        let factor4 = self.factor4_p * factor1;
        let sigma = (-(qv - 1.0) * (self.factor6 / factor4).ln() / (3.0 - qv)).exp();
        let den = ((qv - 1.0) * y.abs().ln() / (3.0 - qv)).exp();
        let v = sigma * x / den;
        if v > TAIL_LIMIT {
            TAIL_LIMIT * stream.next_uniform()
        } else if v < -TAIL_LIMIT {
            -TAIL_LIMIT * stream.next_uniform()
        } else if v.is_nan() {
            0.0
        } else {
            v
        }
    }
}

/// Reflects `x` into `[lo, hi]`.
pub(crate) fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        return x;
    }
    let width = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * width);
    let r = if y > width { 2.0 * width - y } else { y };
    (lo + r).clamp(lo, hi)
}

/// Tracks the best point and the evaluation count across the whole call.
struct Tracker<'a, F> {
    f: F,
    evals: usize,
    x_best: Vec<f64>,
    f_best: f64,
    any_finite: bool,
    trace: Option<&'a mut Vec<(usize, f64)>>,
    last_progress: usize,
    tolerance: f64,
}

impl<F: FnMut(&[f64]) -> f64> Tracker<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let raw = (self.f)(x);
        self.evals += 1;
        let v = if raw.is_nan() || raw == f64::NEG_INFINITY { f64::INFINITY } else { raw };
        if v.is_finite() {
            self.any_finite = true;
        }
        if v < self.f_best {
            if self.f_best - v > self.tolerance || !self.f_best.is_finite() {
                self.last_progress = self.evals;
            }
            self.f_best = v;
            self.x_best.copy_from_slice(x);
            if let Some(trace) = self.trace.as_deref_mut() {
                trace.push((self.evals, v));
            }
        }
        v
    }
}

/// Minimizes `f` over `space`. Non-finite objective values count as `+inf`.
pub fn minimize<F>(f: F, space: &ParamSpace, settings: &AnnealSettings, stream: &mut Stream) -> Result<AnnealResult>
where
    F: FnMut(&[f64]) -> f64,
{
    settings.validate()?;
    let d = space.dim();
    let (lower, upper) = (space.lower(), space.upper());
    let visiting = Visiting::new(settings.visiting_param);
    let qa = settings.acceptance_param;
    let t1 = ((settings.visiting_param - 1.0) * 2f64.ln()).exp() - 1.0;
    let reheat_below = settings.initial_temp * settings.restart_temp_ratio;

    let mut trace = Vec::new();
    let mut tracker = Tracker {
        f,
        evals: 0,
        x_best: lower.to_vec(),
        f_best: f64::INFINITY,
        any_finite: false,
        trace: settings.record_trace.then_some(&mut trace),
        last_progress: 0,
        tolerance: settings.tolerance,
    };

    let random_point = |stream: &mut Stream| -> Vec<f64> {
        (0..d)
            .map(|j| lower[j] + (upper[j] - lower[j]) * stream.next_uniform())
            .collect()
    };

    let mut converged = true;
    let per_run = (settings.max_evals / settings.restarts).max(1);
    let mut spent = 0;
    for run in 0..settings.restarts {
        let budget = if run + 1 == settings.restarts {
            settings.max_evals.saturating_sub(spent).max(1)
        } else {
            per_run
        };
        let stop_at = tracker.evals + budget;
        tracker.last_progress = tracker.evals;

        let mut current = random_point(stream);
        let mut f_current = tracker.eval(&current);
        let mut step = 0usize;
        let mut candidate = current.clone();
        let mut stalled = false;

        'run: while tracker.evals < stop_at {
            let temperature = settings.initial_temp * t1 / (((step + 2) as f64).powf(settings.visiting_param - 1.0) - 1.0);
            if temperature < reheat_below {
                current = random_point(stream);
                f_current = tracker.eval(&current);
                step = 0;
                continue;
            }
            let accept_temp = temperature / (step + 1) as f64;

            for j in 0..2 * d {
                if tracker.evals >= stop_at {
                    break 'run;
                }
                if tracker.evals - tracker.last_progress >= settings.stall_evals {
                    stalled = true;
                    break 'run;
                }
                candidate.copy_from_slice(&current);
                if j < d {
                    for (i, c) in candidate.iter_mut().enumerate() {
                        *c = reflect(*c + visiting.draw(temperature, stream), lower[i], upper[i]);
                    }
                } else {
                    let i = j - d;
                    candidate[i] = reflect(candidate[i] + visiting.draw(temperature, stream), lower[i], upper[i]);
                }
                let e = tracker.eval(&candidate);
                let u = stream.next_uniform();
                let accept = if !f_current.is_finite() || e < f_current {
                    true
                } else if !e.is_finite() {
                    false
                } else {
                    let base = 1.0 - (1.0 - qa) * (e - f_current) / accept_temp;
                    base > 0.0 && u <= (base.ln() / (1.0 - qa)).exp()
                };
                if accept {
                    current.copy_from_slice(&candidate);
                    f_current = e;
                }
            }
            step += 1;
        }
        if !stalled {
            converged = false;
        }
        spent = tracker.evals;
    }

    if settings.local_polish && tracker.f_best.is_finite() {
        polish(&mut tracker, space);
    }

    if !tracker.any_finite {
        return Err(Error::Optimization(format!(
            "objective was non-finite at all {} probed points",
            tracker.evals
        )));
    }
    let Tracker {
        x_best, f_best, evals, ..
    } = tracker;
    Ok(AnnealResult {
        x_best,
        f_best,
        evals_used: evals,
        trace,
        converged,
    })
}

fn polish<F: FnMut(&[f64]) -> f64>(tracker: &mut Tracker<'_, F>, space: &ParamSpace) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut half_width_frac = 1e-2;
    for _ in 0..POLISH_ROUNDS {
        for j in 0..space.dim() {
            let center = tracker.x_best.clone();
            let h = half_width_frac * space.width(j);
            let mut a = (center[j] - h).max(space.lower()[j]);
            let mut b = (center[j] + h).min(space.upper()[j]);
            let mut probe = center.clone();
            let mut at = |x: f64, tracker: &mut Tracker<'_, F>| {
                probe[j] = x;
                tracker.eval(&probe)
            };
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let mut fc = at(c, tracker);
            let mut fd = at(d, tracker);
            for _ in 2..POLISH_EVALS_PER_COORD {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = at(c, tracker);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = at(d, tracker);
                }
            }
        }
        half_width_frac *= 0.1;
    }
}
