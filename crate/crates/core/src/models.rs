//! Simulatable generative models.
//!
//! Every model is a deterministic transform of a parameter vector and a block
//! of uniforms. The transform is split in two: [`Model::base_noise`] applies
//! the parameter-free inverse-CDF step once, and [`Model::simulate_from_noise`]
//! maps that noise to a series at a given parameter. With common random
//! numbers the first step is done once per optimization run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rngstreams::{derive_stream, draw_uniform_block, SeedSpec};
use crate::special::{normal_quantile, student_t_quantile};

/// Box-shaped parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::config("param_space", "dimension must be at least 1"));
        }
        if names.len() != lower.len() || names.len() != upper.len() {
            return Err(Error::config("param_space", "names and bounds differ in length"));
        }
        for ((name, lo), hi) in names.iter().zip(&lower).zip(&upper) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config("param_space", format!("bad bounds for {name}: [{lo}, {hi}]")));
            }
        }
        Ok(ParamSpace { names, lower, upper })
    }

    /// Unit box [0, 1]^d with generic names, handy for tests.
    pub fn unit(d: usize) -> Self {
        Self::uniform_box(d, 0.0, 1.0)
    }

    pub fn uniform_box(d: usize, lo: f64, hi: f64) -> Self {
        ParamSpace::new((0..d).map(|i| format!("x{i}")).collect(), vec![lo; d], vec![hi; d])
            .expect("valid box")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Errors unless `theta` has the right dimension and lies in the box.
    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Parameter(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        if !self.contains(theta) {
            return Err(Error::Parameter(format!("{theta:?} outside the parameter box")));
        }
        Ok(())
    }
}

pub trait Model: Send + Sync + std::fmt::Debug {
    fn id(&self) -> &'static str;

    fn param_space(&self) -> &ParamSpace;

    /// Uniforms consumed per time step.
    fn draws_per_step(&self) -> usize;

    /// Checks `theta` against the model's domain (which may be wider than the
    /// search box).
    fn check_theta(&self, theta: &[f64]) -> Result<()>;

    /// Parameter-free part of the transform; `uniforms` is `n × m` row-major.
    fn base_noise(&self, uniforms: &[f64]) -> Vec<f64> {
        uniforms.to_vec()
    }

    /// True when `theta` is a single location parameter, i.e.
    /// `simulate(theta, u) == theta[0] + simulate(0, u)` elementwise.
    fn pure_location(&self) -> bool {
        false
    }

    /// Writes the series for `theta` into `out`, whose length is `n`.
    /// `theta` must already have passed [`Model::check_theta`].
    fn simulate_from_noise(&self, theta: &[f64], noise: &[f64], out: &mut [f64]);

    fn simulate(&self, theta: &[f64], n: usize, uniforms: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        if uniforms.len() != n * self.draws_per_step() {
            return Err(Error::Input(format!(
                "{} needs {} uniforms for n = {n}, got {}",
                self.id(),
                n * self.draws_per_step(),
                uniforms.len()
            )));
        }
        let noise = self.base_noise(uniforms);
        let mut out = vec![0.0; n];
        self.simulate_from_noise(theta, &noise, &mut out);
        Ok(out)
    }
}

fn check_dim(id: &str, theta: &[f64], d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::Parameter(format!("{id} takes {d} parameter(s), got {}", theta.len())));
    }
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter(format!("non-finite parameter {theta:?}")));
    }
    Ok(())
}

/// i.i.d. N(mu, 1).
#[derive(Debug, Clone)]
pub struct GaussianLocation {
    space: ParamSpace,
}

impl Default for GaussianLocation {
    fn default() -> Self {
        GaussianLocation {
            space: ParamSpace::new(vec!["mu".into()], vec![-10.0], vec![10.0]).expect("valid box"),
        }
    }
}

impl Model for GaussianLocation {
    fn pure_location(&self) -> bool {
        true
    }

    fn id(&self) -> &'static str {
        "gaussian-location"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn draws_per_step(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.id(), theta, 1)
    }

    fn base_noise(&self, uniforms: &[f64]) -> Vec<f64> {
        uniforms.iter().map(|&u| normal_quantile(u)).collect()
    }

    fn simulate_from_noise(&self, theta: &[f64], noise: &[f64], out: &mut [f64]) {
        let mu = theta[0];
        for (x, z) in out.iter_mut().zip(noise) {
            *x = mu + z;
        }
    }
}

/// i.i.d. mu + T with T standard Student-t.
#[derive(Debug, Clone)]
pub struct TLocation {
    df: f64,
    space: ParamSpace,
}

impl TLocation {
    pub fn new(df: f64) -> Result<Self> {
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::config("df", "degrees of freedom must be positive"));
        }
        Ok(TLocation {
            df,
            space: ParamSpace::new(vec!["mu".into()], vec![-10.0], vec![10.0])?,
        })
    }

    pub fn df(&self) -> f64 {
        self.df
    }
}

impl Default for TLocation {
    fn default() -> Self {
        TLocation::new(5.0).expect("valid df")
    }
}

impl Model for TLocation {
    fn pure_location(&self) -> bool {
        true
    }

    fn id(&self) -> &'static str {
        "t-location"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn draws_per_step(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.id(), theta, 1)
    }

    fn base_noise(&self, uniforms: &[f64]) -> Vec<f64> {
        uniforms.iter().map(|&u| student_t_quantile(u, self.df)).collect()
    }

    fn simulate_from_noise(&self, theta: &[f64], noise: &[f64], out: &mut [f64]) {
        let mu = theta[0];
        for (x, z) in out.iter_mut().zip(noise) {
            *x = mu + z;
        }
    }
}

fn check_rate(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Parameter(format!("logistic-map r = {r} outside [0, 1]")));
    }
    Ok(())
}

/// Runs `burn_in` steps of the map from `s1`, then fills `out` with the
/// trajectory.
fn logistic_orbit(r: f64, s1: f64, burn_in: usize, mut emit: impl FnMut(usize, f64), n: usize) {
    let a = 4.0 * r;
    let mut s = s1;
    for _ in 0..burn_in {
        s = a * s * (1.0 - s);
    }
    for t in 0..n {
        emit(t, s);
        s = a * s * (1.0 - s);
    }
}

/// S_{t+1} = 4 r S_t (1 - S_t) with S_1 ~ Unif(0, 1).
#[derive(Debug, Clone)]
pub struct LogisticMap {
    burn_in: usize,
    space: ParamSpace,
}

impl LogisticMap {
    pub fn new(burn_in: usize) -> Self {
        LogisticMap {
            burn_in,
            space: ParamSpace::new(vec!["r".into()], vec![0.0], vec![1.0]).expect("valid box"),
        }
    }
}

impl Default for LogisticMap {
    fn default() -> Self {
        LogisticMap::new(0)
    }
}

impl Model for LogisticMap {
    fn id(&self) -> &'static str {
        "logistic-map"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn draws_per_step(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.id(), theta, 1)?;
        check_rate(theta[0])
    }

    fn simulate_from_noise(&self, theta: &[f64], noise: &[f64], out: &mut [f64]) {
        let n = out.len();
        logistic_orbit(theta[0], noise[0], self.burn_in, |t, s| out[t] = s, n);
    }
}

/// Logistic map observed with additive N(0, sigma^2) noise. Column 1 of the
/// uniforms seeds the hidden state, column 2 drives observation noise.
#[derive(Debug, Clone)]
pub struct NoisyLogistic {
    burn_in: usize,
    space: ParamSpace,
}

impl NoisyLogistic {
    pub fn new(burn_in: usize) -> Self {
        NoisyLogistic {
            burn_in,
            space: ParamSpace::new(vec!["r".into(), "sigma".into()], vec![0.0, 0.01], vec![1.0, 1.0])
                .expect("valid box"),
        }
    }

    /// Hidden states for the given noise, for checking the observation layer.
    pub fn hidden_states(&self, r: f64, noise: &[f64], n: usize) -> Vec<f64> {
        let mut states = vec![0.0; n];
        logistic_orbit(r, noise[0], self.burn_in, |t, s| states[t] = s, n);
        states
    }
}

impl Default for NoisyLogistic {
    fn default() -> Self {
        NoisyLogistic::new(0)
    }
}

impl Model for NoisyLogistic {
    fn id(&self) -> &'static str {
        "noisy-logistic"
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn draws_per_step(&self) -> usize {
        2
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.id(), theta, 2)?;
        check_rate(theta[0])?;
        if !(theta[1] > 0.0) {
            return Err(Error::Parameter(format!("noise sd sigma = {} must be positive", theta[1])));
        }
        Ok(())
    }

    fn base_noise(&self, uniforms: &[f64]) -> Vec<f64> {
        uniforms
            .chunks_exact(2)
            .flat_map(|step| [step[0], normal_quantile(step[1])])
            .collect()
    }

    fn simulate_from_noise(&self, theta: &[f64], noise: &[f64], out: &mut [f64]) {
        let (r, sigma) = (theta[0], theta[1]);
        let n = out.len();
        logistic_orbit(r, noise[0], self.burn_in, |t, s| out[t] = s + sigma * noise[2 * t + 1], n);
    }
}

pub const MODEL_IDS: [&str; 4] = ["gaussian-location", "t-location", "logistic-map", "noisy-logistic"];

/// Model-specific knobs accepted by the registry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub burn_in: usize,
    pub t_df: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { burn_in: 0, t_df: 5.0 }
    }
}

/// Maps a model identifier to a constructed model.
pub fn model_by_id(id: &str, options: ModelOptions) -> Result<Box<dyn Model>> {
    Ok(match id {
        "gaussian-location" => Box::new(GaussianLocation::default()),
        "t-location" => Box::new(TLocation::new(options.t_df)?),
        "logistic-map" => Box::new(LogisticMap::new(options.burn_in)),
        "noisy-logistic" => Box::new(NoisyLogistic::new(options.burn_in)),
        other => {
            return Err(Error::config(
                "model",
                format!("unknown model `{other}` (expected one of {})", MODEL_IDS.join(", ")),
            ))
        }
    })
}

/// An observed or simulated series with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub theta_used: Vec<f64>,
    pub seed_path: Option<SeedSpec>,
}

impl Trajectory {
    /// Wraps observed data of unknown origin.
    pub fn observed(values: Vec<f64>) -> Self {
        Trajectory {
            values,
            theta_used: Vec::new(),
            seed_path: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Simulates a length-`n` series at `theta` from the stream at `seed`.
pub fn simulate_trajectory(model: &dyn Model, theta: &[f64], n: usize, seed: &SeedSpec) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Input("trajectory length must be positive".into()));
    }
    let mut stream = derive_stream(seed);
    let block = draw_uniform_block(&mut stream, 1, n * model.draws_per_step());
    let values = model.simulate(theta, n, block.row(0))?;
    Ok(Trajectory {
        values,
        theta_used: theta.to_vec(),
        seed_path: Some(seed.clone()),
    })
}
