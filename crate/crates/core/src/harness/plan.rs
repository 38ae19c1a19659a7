use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anneal::AnnealSettings;
use crate::error::{Error, Result};
use crate::estimator::{ObjectiveConfig, ObjectiveVariant};
use crate::features::Arity;
use crate::models::{model_by_id, Model, ModelOptions};

/// Whether a likelihood baseline runs next to each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineChoice {
    Mle,
    None,
}

impl FromStr for BaselineChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(BaselineChoice::Mle),
            "none" => Ok(BaselineChoice::None),
            other => Err(Error::config("baseline", format!("expected mle or none, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub k: usize,
    pub arity: usize,
    pub freq_scale: f64,
    /// One bank for every trial; otherwise each trial draws its own.
    pub fixed: bool,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub model: String,
    pub model_options: ModelOptions,
    pub true_theta: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub bank: BankSpec,
    /// `weighted` runs the two-step estimator.
    pub objective: ObjectiveConfig,
    pub optimizer: AnnealSettings,
    pub baseline: BaselineChoice,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Comparison axes for the density study; empty means a plain run.
    pub compare_arities: Vec<usize>,
    pub compare_objectives: Vec<ObjectiveVariant>,
}

const KEYS: &[&str] = &[
    "model",
    "true_theta",
    "seed",
    "sample_sizes",
    "trials",
    "k",
    "arity",
    "freq_scale",
    "fixed_bank",
    "objective",
    "s",
    "crn",
    "ridge",
    "variance_replicates",
    "max_evals",
    "restarts",
    "polish",
    "stall_evals",
    "initial_temp",
    "baseline",
    "burn_in",
    "t_df",
    "output",
    "compare_arities",
    "compare_objectives",
];

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn variant(key: &str, value: &str) -> Result<ObjectiveVariant> {
    value.parse().map_err(|_| Error::config(key, format!("unknown objective `{value}`")))
}

/// Parses flat `key = value` text. `#` starts a comment; lists are
/// comma-separated. Unknown keys, duplicates and missing required keys are
/// configuration errors naming the key.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "expected `key = value`"))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(Error::config(key, "given more than once"));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let required = |key: &str| get(key).ok_or_else(|| Error::config(key, "required key is missing"));

    let model_id = required("model")?.to_string();
    let true_theta: Vec<f64> = list("true_theta", required("true_theta")?)?;
    let seed: u64 = scalar("seed", required("seed")?)?;

    let mut model_options = ModelOptions::default();
    if let Some(v) = get("burn_in") {
        model_options.burn_in = scalar("burn_in", v)?;
    }
    if let Some(v) = get("t_df") {
        model_options.t_df = scalar("t_df", v)?;
    }
    let d = true_theta.len();

    let mut objective = ObjectiveConfig::default();
    if let Some(v) = get("objective") {
        objective.variant = variant("objective", v)?;
    }
    if let Some(v) = get("s") {
        objective.s = scalar("s", v)?;
    }
    if let Some(v) = get("crn") {
        objective.crn = boolean("crn", v)?;
    }
    if let Some(v) = get("ridge") {
        objective.ridge = scalar("ridge", v)?;
    }
    if let Some(v) = get("variance_replicates") {
        objective.variance_replicates = scalar("variance_replicates", v)?;
    }

    let mut optimizer = AnnealSettings::default();
    if let Some(v) = get("max_evals") {
        optimizer.max_evals = scalar("max_evals", v)?;
    }
    if let Some(v) = get("restarts") {
        optimizer.restarts = scalar("restarts", v)?;
    }
    if let Some(v) = get("polish") {
        optimizer.local_polish = boolean("polish", v)?;
    }
    if let Some(v) = get("stall_evals") {
        optimizer.stall_evals = scalar("stall_evals", v)?;
    }
    if let Some(v) = get("initial_temp") {
        optimizer.initial_temp = scalar("initial_temp", v)?;
    }

    let plan = ExperimentPlan {
        model: model_id,
        model_options,
        sample_sizes: match get("sample_sizes") {
            Some(v) => list("sample_sizes", v)?,
            None => vec![30, 100, 300, 1000],
        },
        trials: get("trials").map(|v| scalar("trials", v)).transpose()?.unwrap_or(100),
        bank: BankSpec {
            k: get("k").map(|v| scalar("k", v)).transpose()?.unwrap_or(2 * d + 1),
            arity: get("arity").map(|v| scalar("arity", v)).transpose()?.unwrap_or(1),
            freq_scale: get("freq_scale").map(|v| scalar("freq_scale", v)).transpose()?.unwrap_or(1.0),
            fixed: get("fixed_bank").map(|v| boolean("fixed_bank", v)).transpose()?.unwrap_or(true),
        },
        true_theta,
        objective,
        optimizer,
        baseline: get("baseline").map(str::parse).transpose()?.unwrap_or(BaselineChoice::Mle),
        seed,
        output: get("output").map(PathBuf::from),
        compare_arities: get("compare_arities").map(|v| list("compare_arities", v)).transpose()?.unwrap_or_default(),
        compare_objectives: match get("compare_objectives") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| variant("compare_objectives", s))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        },
    };
    plan.validate()?;
    Ok(plan)
}

/// Whether `model` has a likelihood baseline. Without one, `baseline = mle`
/// leaves the baseline column empty.
pub fn has_baseline(model_id: &str) -> bool {
    matches!(model_id, "gaussian-location" | "t-location")
}

impl ExperimentPlan {
    pub fn build_model(&self) -> Result<Box<dyn Model>> {
        model_by_id(&self.model, self.model_options)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        let space = model.param_space();
        if self.true_theta.len() != space.dim() {
            return Err(Error::config(
                "true_theta",
                format!("{} expects {} parameters, got {}", self.model, space.dim(), self.true_theta.len()),
            ));
        }
        if !space.contains(&self.true_theta) {
            return Err(Error::config("true_theta", "outside the parameter box"));
        }
        model.check_theta(&self.true_theta).map_err(|e| Error::config("true_theta", e.to_string()))?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::config("sample_sizes", "must not be empty"));
        }
        if self.bank.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        let arities: Vec<usize> = std::iter::once(self.bank.arity).chain(self.compare_arities.iter().copied()).collect();
        for &a in &arities {
            let arity = Arity::from_count(a).map_err(|_| Error::config("arity", format!("must be 1 or 2, got {a}")))?;
            if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < arity.min_len()) {
                return Err(Error::config("sample_sizes", format!("n = {n} is too short for arity {a}")));
            }
        }
        if !(self.bank.freq_scale > 0.0 && self.bank.freq_scale.is_finite()) {
            return Err(Error::config("freq_scale", "must be positive"));
        }
        if self.objective.s == 0 {
            return Err(Error::config("s", "must be at least 1"));
        }
        let variants: Vec<ObjectiveVariant> =
            std::iter::once(self.objective.variant).chain(self.compare_objectives.iter().copied()).collect();
        for v in variants {
            if v == ObjectiveVariant::Wood && self.objective.s < 2 {
                return Err(Error::config("s", "the wood objective needs s >= 2"));
            }
        }
        if !(self.objective.ridge >= 0.0) {
            return Err(Error::config("ridge", "must be nonnegative"));
        }
        if self.objective.variance_replicates < 2 {
            return Err(Error::config("variance_replicates", "must be at least 2"));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}
