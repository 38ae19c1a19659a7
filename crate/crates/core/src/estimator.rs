//! Simulated feature moments, discrepancy objectives and point estimation.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::anneal::{minimize, AnnealSettings};
use crate::error::{Error, Result};
use crate::features::{FeatureBank, FeatureVector};
use crate::models::Model;
use crate::rngstreams::{derive_stream, draw_uniform_block, tag, SeedSpec, Stream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveVariant {
    /// Half squared Euclidean distance.
    Distance,
    /// Half quadratic form in a fixed SPD weight matrix.
    Weighted,
    /// Gaussian negative log-likelihood of the observed features.
    Wood,
}

impl ObjectiveVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveVariant::Distance => "distance",
            ObjectiveVariant::Weighted => "weighted",
            ObjectiveVariant::Wood => "wood",
        }
    }
}

impl FromStr for ObjectiveVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" | "unweighted" => Ok(ObjectiveVariant::Distance),
            "weighted" => Ok(ObjectiveVariant::Weighted),
            "wood" => Ok(ObjectiveVariant::Wood),
            other => Err(Error::config(
                "objective",
                format!("unknown objective `{other}` (expected distance, weighted or wood)"),
            )),
        }
    }
}

impl std::fmt::Display for ObjectiveVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A symmetric positive-definite weight matrix. Validated on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::config("weight_matrix", "must be a non-empty square matrix"));
        }
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..m.nrows() {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale.max(1e-300) {
                    return Err(Error::config("weight_matrix", "must be symmetric"));
                }
            }
        }
        let eig = m.clone().symmetric_eigenvalues();
        if eig.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("weight_matrix", "must be positive definite"));
        }
        Ok(WeightMatrix(m))
    }

    pub fn identity(k: usize) -> Self {
        WeightMatrix(DMatrix::identity(k, k))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for WeightMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::config("weight_matrix", "must be square"));
        }
        WeightMatrix::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }
}

impl From<WeightMatrix> for Vec<Vec<f64>> {
    fn from(w: WeightMatrix) -> Self {
        matrix_rows(&w.0)
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub variant: ObjectiveVariant,
    /// Simulations per parameter value.
    pub s: usize,
    /// Reuse one uniform block for every parameter value queried.
    pub crn: bool,
    pub weight_matrix: Option<WeightMatrix>,
    /// Relative ridge added to simulated covariances, scaled by trace / k.
    pub ridge: f64,
    /// Fresh replicates used to estimate the feature covariance for the
    /// second stage of two-step estimation.
    pub variance_replicates: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            variant: ObjectiveVariant::Distance,
            s: 10,
            crn: true,
            weight_matrix: None,
            ridge: 1e-8,
            variance_replicates: 200,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.s == 0 {
            return Err(Error::config("s", "must be at least 1"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::config("ridge", "must be nonnegative"));
        }
        match self.variant {
            ObjectiveVariant::Distance => {}
            ObjectiveVariant::Weighted => match &self.weight_matrix {
                None => return Err(Error::config("weight_matrix", "weighted objective needs a weight matrix")),
                Some(w) if w.dim() != k => {
                    return Err(Error::config(
                        "weight_matrix",
                        format!("is {0}x{0} but the bank has {k} features", w.dim()),
                    ))
                }
                Some(_) => {}
            },
            ObjectiveVariant::Wood => {
                if self.s < 2 {
                    return Err(Error::config("s", "the wood objective needs s >= 2"));
                }
            }
        }
        Ok(())
    }
}

/// Simulated feature moments at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFeatures {
    pub mean: Vec<f64>,
    /// Unbiased covariance of the per-replicate feature vectors; `None` when
    /// only one replicate was run.
    pub covariance: Option<DMatrix<f64>>,
    pub s_used: usize,
}

/// Parameter-free base noise for `s` replicate simulations of length `n`.
#[derive(Debug, Clone)]
pub struct SimulationBlock {
    noise: Vec<Vec<f64>>,
    n: usize,
}

impl SimulationBlock {
    pub fn draw(model: &dyn Model, n: usize, s: usize, stream: &mut Stream) -> Self {
        let block = draw_uniform_block(stream, s, n * model.draws_per_step());
        SimulationBlock {
            noise: block.iter_rows().map(|row| model.base_noise(row)).collect(),
            n,
        }
    }

    pub fn replicates(&self) -> usize {
        self.noise.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Mean and covariance of the bank's features over the block's replicates.
pub fn simulate_features(
    model: &dyn Model,
    theta: &[f64],
    bank: &FeatureBank,
    block: &SimulationBlock,
) -> Result<SimulatedFeatures> {
    model.check_theta(theta)?;
    if block.n < bank.arity().min_len() {
        return Err(Error::Input(format!(
            "{} features need series of length >= {}",
            bank.arity(),
            bank.arity().min_len()
        )));
    }
    let k = bank.k();
    let s = block.replicates();
    let mut series = vec![0.0; block.n];
    let mut per_rep = vec![0.0; s * k];
    for (noise, out) in block.noise.iter().zip(per_rep.chunks_exact_mut(k)) {
        model.simulate_from_noise(theta, noise, &mut series);
        bank.eval_into(&series, out);
    }
    Ok(moments(&per_rep, k))
}

/// Same as [`simulate_features`] with a block drawn fresh from `stream`.
pub fn simulate_features_fresh(
    model: &dyn Model,
    theta: &[f64],
    n: usize,
    bank: &FeatureBank,
    s: usize,
    stream: &mut Stream,
) -> Result<SimulatedFeatures> {
    if s == 0 {
        return Err(Error::config("s", "must be at least 1"));
    }
    let block = SimulationBlock::draw(model, n, s, stream);
    simulate_features(model, theta, bank, &block)
}

fn moments(per_rep: &[f64], k: usize) -> SimulatedFeatures {
    let s = per_rep.len() / k;
    let mut mean = vec![0.0; k];
    for row in per_rep.chunks_exact(k) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= s as f64;
    }
    let covariance = (s >= 2).then(|| {
        let mut cov = DMatrix::zeros(k, k);
        for row in per_rep.chunks_exact(k) {
            for i in 0..k {
                let di = row[i] - mean[i];
                for j in 0..=i {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (s - 1) as f64;
        for i in 0..k {
            for j in 0..=i {
                let v = cov[(i, j)] / denom;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        cov
    });
    SimulatedFeatures {
        mean,
        covariance,
        s_used: s,
    }
}

fn residual(observed: &FeatureVector, sim: &SimulatedFeatures) -> Result<DVector<f64>> {
    if observed.len() != sim.mean.len() {
        return Err(Error::Input(format!(
            "observed features have length {}, simulated {}",
            observed.len(),
            sim.mean.len()
        )));
    }
    Ok(DVector::from_iterator(
        observed.len(),
        observed.0.iter().zip(&sim.mean).map(|(o, m)| o - m),
    ))
}

/// `0.5 * |observed - mean|^2`.
pub fn objective_unweighted(observed: &FeatureVector, sim: &SimulatedFeatures) -> Result<f64> {
    let r = residual(observed, sim)?;
    Ok(0.5 * r.dot(&r))
}

/// `0.5 * (observed - mean)' w (observed - mean)`.
pub fn objective_weighted(observed: &FeatureVector, sim: &SimulatedFeatures, w: &WeightMatrix) -> Result<f64> {
    let r = residual(observed, sim)?;
    if w.dim() != r.len() {
        return Err(Error::Input(format!("weight matrix is {0}x{0}, features have length {1}", w.dim(), r.len())));
    }
    Ok(0.5 * r.dot(&(w.matrix() * &r)))
}

/// Simulated covariance inflated by `1 + 1/s` for noise in the simulated
/// mean, plus `ridge * trace / k` on the diagonal.
pub fn inflated_covariance(cov: &DMatrix<f64>, s: usize, ridge: f64) -> DMatrix<f64> {
    let k = cov.nrows();
    let mut out = cov * (1.0 + 1.0 / s as f64);
    let shift = ridge * out.trace() / k as f64;
    for i in 0..k {
        out[(i, i)] += shift;
    }
    out
}

/// Negative log density of `x` under N(mean, cov).
pub fn gaussian_nll(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let k = x.len();
    if mean.len() != k || cov.nrows() != k || cov.ncols() != k {
        return Err(Error::Input("dimension mismatch in gaussian_nll".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Estimation("feature covariance is numerically singular".into()))?;
    let r = DVector::from_iterator(k, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&r).ok_or_else(|| Error::Estimation("singular factor".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::Estimation("feature covariance is numerically singular".into()));
    }
    Ok(0.5 * z.dot(&z) + 0.5 * log_det + 0.5 * k as f64 * LN_2PI)
}

/// Wood synthetic-likelihood objective.
pub fn objective_wood(observed: &FeatureVector, sim: &SimulatedFeatures, ridge: f64) -> Result<f64> {
    let cov = sim
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Estimation("the wood objective needs at least 2 simulations".into()))?;
    if observed.len() != sim.mean.len() {
        return Err(Error::Input("observed and simulated features differ in length".into()));
    }
    gaussian_nll(&observed.0, &sim.mean, &inflated_covariance(cov, sim.s_used, ridge))
}

/// Dispatches on the configured variant.
pub fn discrepancy(config: &ObjectiveConfig, observed: &FeatureVector, sim: &SimulatedFeatures) -> Result<f64> {
    match config.variant {
        ObjectiveVariant::Distance => objective_unweighted(observed, sim),
        ObjectiveVariant::Weighted => {
            let w = config
                .weight_matrix
                .as_ref()
                .ok_or_else(|| Error::config("weight_matrix", "weighted objective needs a weight matrix"))?;
            objective_weighted(observed, sim, w)
        }
        ObjectiveVariant::Wood => objective_wood(observed, sim, config.ridge),
    }
}

/// Evaluates simulated features at any parameter value against one fixed
/// simulation block (common random numbers).
///
/// For pure location families the features are computed from per-replicate
/// phasor sums: with `z` the series at location 0,
/// `mean_t cos(w (mu + z_t) + a) = C cos(w mu + a) - S sin(w mu + a)` where
/// `C = mean_t cos(w z_t)` and `S = mean_t sin(w z_t)`. Bivariate features
/// work the same way with `w = w1 + w2`.
pub struct CrnSimulator<'a> {
    model: &'a dyn Model,
    bank: &'a FeatureBank,
    block: SimulationBlock,
    phasors: Option<LocationPhasors>,
}

struct LocationPhasors {
    shift: Vec<f64>,
    cos_sums: Vec<f64>,
    sin_sums: Vec<f64>,
}

impl LocationPhasors {
    fn new(model: &dyn Model, bank: &FeatureBank, block: &SimulationBlock) -> Self {
        let k = bank.k();
        let s = block.replicates();
        let shift: Vec<f64> = bank.frequency_rows().map(|w| w.iter().sum()).collect();
        let mut cos_sums = vec![0.0; s * k];
        let mut sin_sums = vec![0.0; s * k];
        let mut series = vec![0.0; block.n];
        for (r, noise) in block.noise.iter().enumerate() {
            model.simulate_from_noise(&[0.0], noise, &mut series);
            for (i, w) in bank.frequency_rows().enumerate() {
                let (mut c, mut sn) = (0.0, 0.0);
                let terms = match w {
                    [w1] => {
                        for &x in &series {
                            let (si, co) = (w1 * x).sin_cos();
                            c += co;
                            sn += si;
                        }
                        series.len()
                    }
                    [w1, w2] => {
                        for pair in series.windows(2) {
                            let (si, co) = (w1 * pair[0] + w2 * pair[1]).sin_cos();
                            c += co;
                            sn += si;
                        }
                        series.len() - 1
                    }
                    _ => unreachable!("arity is 1 or 2"),
                };
                cos_sums[r * k + i] = c / terms as f64;
                sin_sums[r * k + i] = sn / terms as f64;
            }
        }
        LocationPhasors {
            shift,
            cos_sums,
            sin_sums,
        }
    }

    fn features(&self, mu: f64, phases: &[f64], out: &mut [f64]) {
        let k = phases.len();
        let rotations: Vec<(f64, f64)> = self
            .shift
            .iter()
            .zip(phases)
            .map(|(w, a)| (w * mu + a).sin_cos())
            .collect();
        for (r, row) in out.chunks_exact_mut(k).enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let (si, co) = rotations[i];
                *v = self.cos_sums[r * k + i] * co - self.sin_sums[r * k + i] * si;
            }
        }
    }
}

impl<'a> CrnSimulator<'a> {
    pub fn new(model: &'a dyn Model, bank: &'a FeatureBank, n: usize, s: usize, stream: &mut Stream) -> Result<Self> {
        if n < bank.arity().min_len() {
            return Err(Error::Input(format!(
                "{} features need series of length >= {}",
                bank.arity(),
                bank.arity().min_len()
            )));
        }
        if s == 0 {
            return Err(Error::config("s", "must be at least 1"));
        }
        let block = SimulationBlock::draw(model, n, s, stream);
        let phasors = model.pure_location().then(|| LocationPhasors::new(model, bank, &block));
        Ok(CrnSimulator {
            model,
            bank,
            block,
            phasors,
        })
    }

    /// Disables the location-family shortcut (used to cross-check it).
    pub fn without_shortcut(mut self) -> Self {
        self.phasors = None;
        self
    }

    pub fn block(&self) -> &SimulationBlock {
        &self.block
    }

    pub fn features(&self, theta: &[f64]) -> Result<SimulatedFeatures> {
        match &self.phasors {
            Some(ph) => {
                self.model.check_theta(theta)?;
                let k = self.bank.k();
                let mut per_rep = vec![0.0; self.block.replicates() * k];
                ph.features(theta[0], self.bank.phases(), &mut per_rep);
                Ok(moments(&per_rep, k))
            }
            None => simulate_features(self.model, theta, self.bank, &self.block),
        }
    }
}

enum SimSource<'a> {
    Fixed(CrnSimulator<'a>),
    Fresh { stream: Stream, n: usize },
}

/// The map from parameters to the discrepancy against fixed observed
/// features. With CRN on it is a deterministic function of the parameter.
pub struct FeatureObjective<'a> {
    model: &'a dyn Model,
    bank: &'a FeatureBank,
    config: &'a ObjectiveConfig,
    observed: FeatureVector,
    source: SimSource<'a>,
}

impl<'a> FeatureObjective<'a> {
    /// Simulated series have length `n`; the simulation stream is derived
    /// from `sim_seed`.
    pub fn new(
        model: &'a dyn Model,
        bank: &'a FeatureBank,
        config: &'a ObjectiveConfig,
        observed: FeatureVector,
        n: usize,
        sim_seed: &SeedSpec,
    ) -> Result<Self> {
        config.validate(bank.k())?;
        if observed.len() != bank.k() {
            return Err(Error::Input("observed features do not match the bank".into()));
        }
        let mut stream = derive_stream(sim_seed);
        let source = if config.crn {
            SimSource::Fixed(CrnSimulator::new(model, bank, n, config.s, &mut stream)?)
        } else {
            SimSource::Fresh { stream, n }
        };
        Ok(FeatureObjective {
            model,
            bank,
            config,
            observed,
            source,
        })
    }

    /// Replaces the observed features, keeping the simulation block.
    pub fn set_observed(&mut self, observed: FeatureVector) -> Result<()> {
        if observed.len() != self.bank.k() {
            return Err(Error::Input("observed features do not match the bank".into()));
        }
        self.observed = observed;
        Ok(())
    }

    pub fn observed(&self) -> &FeatureVector {
        &self.observed
    }

    pub fn simulated(&mut self, theta: &[f64]) -> Result<SimulatedFeatures> {
        match &mut self.source {
            SimSource::Fixed(crn) => crn.features(theta),
            SimSource::Fresh { stream, n } => {
                simulate_features_fresh(self.model, theta, *n, self.bank, self.config.s, stream)
            }
        }
    }

    pub fn evaluate(&mut self, theta: &[f64]) -> Result<f64> {
        let sim = self.simulated(theta)?;
        discrepancy(self.config, &self.observed, &sim)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub boundary_hit: bool,
    pub covariance_regularized: bool,
    pub budget_exhausted: bool,
}

impl Diagnostics {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.boundary_hit {
            out.push("boundary-hit");
        }
        if self.covariance_regularized {
            out.push("covariance-regularized");
        }
        if self.budget_exhausted {
            out.push("budget-exhausted");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub objective_variant: ObjectiveVariant,
    pub feature_bank_id: String,
    pub n: usize,
    pub s: usize,
    pub seed_path: SeedSpec,
    pub diagnostics: Diagnostics,
    pub evals_used: usize,
    /// Second-stage weight matrix of a two-step estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_matrix: Option<WeightMatrix>,
    /// First-stage report of a two-step estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage1: Option<Box<EstimateReport>>,
}

fn near_boundary(model: &dyn Model, theta: &[f64]) -> bool {
    let space = model.param_space();
    theta.iter().enumerate().any(|(j, &x)| {
        let eps = 1e-6 * space.width(j);
        x - space.lower()[j] <= eps || space.upper()[j] - x <= eps
    })
}

/// Minimizes the configured discrepancy between the data's features and
/// simulated features over the model's parameter box.
///
/// Streams are derived from `seed`: simulations from `seed/SIMULATION`,
/// annealing moves from `seed/ANNEAL`.
pub fn estimate(
    model: &dyn Model,
    data: &[f64],
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    settings: &AnnealSettings,
    seed: &SeedSpec,
) -> Result<EstimateReport> {
    let observed = bank.eval(data)?;
    let mut objective = FeatureObjective::new(model, bank, config, observed, data.len(), &seed.child(tag::SIMULATION))?;
    let mut singular = 0usize;
    let mut other_error = None;
    let mut anneal_stream = derive_stream(&seed.child(tag::ANNEAL));
    let result = minimize(
        |theta| match objective.evaluate(theta) {
            Ok(v) => v,
            Err(Error::Estimation(_)) => {
                singular += 1;
                f64::INFINITY
            }
            Err(e) => {
                other_error.get_or_insert(e);
                f64::INFINITY
            }
        },
        model.param_space(),
        settings,
        &mut anneal_stream,
    );
    let result = match (result, other_error) {
        (Ok(r), _) => r,
        (Err(_), Some(e)) => return Err(e),
        (Err(e), None) => return Err(e),
    };
    Ok(EstimateReport {
        diagnostics: Diagnostics {
            boundary_hit: near_boundary(model, &result.x_best),
            covariance_regularized: singular > 0,
            budget_exhausted: !result.converged,
        },
        theta_hat: result.x_best,
        objective_value: result.f_best,
        objective_variant: config.variant,
        feature_bank_id: bank.id(),
        n: data.len(),
        s: config.s,
        seed_path: seed.clone(),
        evals_used: result.evals_used,
        weight_matrix: None,
        stage1: None,
    })
}

/// Weight matrix `[cov (1 + 1/s) + ridge]^-1` from the feature covariance at
/// `theta`, estimated with fresh replicates.
pub fn variance_weight(
    model: &dyn Model,
    theta: &[f64],
    n: usize,
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    stream: &mut Stream,
) -> Result<WeightMatrix> {
    let reps = config.variance_replicates.max(2);
    let sim = simulate_features_fresh(model, theta, n, bank, reps, stream)?;
    let cov = sim.covariance.expect("at least two replicates");
    let inflated = inflated_covariance(&cov, config.s, config.ridge);
    let inverse = inflated
        .cholesky()
        .ok_or_else(|| Error::Estimation("pilot feature covariance is singular; increase ridge".into()))?
        .inverse();
    let sym = (&inverse + inverse.transpose()) * 0.5;
    WeightMatrix::new(sym).map_err(|e| Error::Estimation(format!("pilot weight matrix: {e}")))
}

/// Unweighted pilot estimate, then a weighted estimate using the inverse
/// feature covariance at the pilot. Both stages share the CRN block.
pub fn estimate_two_step(
    model: &dyn Model,
    data: &[f64],
    bank: &FeatureBank,
    config: &ObjectiveConfig,
    settings: &AnnealSettings,
    seed: &SeedSpec,
) -> Result<EstimateReport> {
    let stage1_config = ObjectiveConfig {
        variant: ObjectiveVariant::Distance,
        weight_matrix: None,
        ..config.clone()
    };
    let stage1 = estimate(model, data, bank, &stage1_config, settings, seed)?;
    let mut pilot_stream = derive_stream(&seed.child(tag::PILOT_VARIANCE));
    let w = variance_weight(model, &stage1.theta_hat, data.len(), bank, config, &mut pilot_stream)?;
    let stage2_config = ObjectiveConfig {
        variant: ObjectiveVariant::Weighted,
        weight_matrix: Some(w.clone()),
        ..config.clone()
    };
    let mut report = estimate(model, data, bank, &stage2_config, settings, seed)?;
    report.weight_matrix = Some(w);
    report.stage1 = Some(Box::new(stage1));
    Ok(report)
}
