//! Random Fourier feature banks over univariate time series.
//!
//! A bank holds `k` frequency rows and `k` phases. The univariate form averages
//! `cos(w x_t + a)` over the series; the bivariate form averages
//! `cos(w1 x_t + w2 x_{t+1} + a)` over consecutive pairs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rngstreams::Stream;
use crate::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arity {
    Univariate,
    Bivariate,
}

impl Arity {
    pub fn from_count(arity: usize) -> Result<Self> {
        match arity {
            1 => Ok(Arity::Univariate),
            2 => Ok(Arity::Bivariate),
            other => Err(Error::config("arity", format!("must be 1 or 2, got {other}"))),
        }
    }

    pub fn count(self) -> usize {
        match self {
            Arity::Univariate => 1,
            Arity::Bivariate => 2,
        }
    }

    /// Shortest series the features are defined on.
    pub fn min_len(self) -> usize {
        self.count()
    }
}

impl TryFrom<u8> for Arity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Arity::from_count(v as usize)
    }
}

impl From<Arity> for u8 {
    fn from(a: Arity) -> u8 {
        a.count() as u8
    }
}

impl std::fmt::Display for Arity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arity::Univariate => f.write_str("univariate"),
            Arity::Bivariate => f.write_str("bivariate"),
        }
    }
}

/// Serialized form: `{"k", "arity", "frequencies": [[...]], "phases": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BankRepr", into = "BankRepr")]
pub struct FeatureBank {
    arity: Arity,
    // k rows of `arity` entries, row-major
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BankRepr {
    k: usize,
    arity: Arity,
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl TryFrom<BankRepr> for FeatureBank {
    type Error = Error;

    fn try_from(r: BankRepr) -> Result<Self> {
        if r.k != r.phases.len() {
            return Err(Error::config("k", "does not match the number of phases"));
        }
        FeatureBank::new(r.arity, r.frequencies, r.phases)
    }
}

impl From<FeatureBank> for BankRepr {
    fn from(b: FeatureBank) -> BankRepr {
        BankRepr {
            k: b.k(),
            arity: b.arity,
            frequencies: b.frequency_rows().map(<[f64]>::to_vec).collect(),
            phases: b.phases,
        }
    }
}

impl FeatureBank {
    /// Builds a bank from explicit frequency rows and phases.
    pub fn new(arity: Arity, frequencies: Vec<Vec<f64>>, phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::config("k", "feature bank needs at least one feature"));
        }
        if frequencies.len() != phases.len() {
            return Err(Error::config(
                "frequencies",
                format!("{} rows for {} phases", frequencies.len(), phases.len()),
            ));
        }
        if let Some(row) = frequencies.iter().find(|row| row.len() != arity.count()) {
            return Err(Error::config(
                "frequencies",
                format!("row of length {} for arity {}", row.len(), arity.count()),
            ));
        }
        if frequencies.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::config("frequencies", "non-finite frequency"));
        }
        if let Some(a) = phases.iter().find(|a| !(a.abs() < PI)) {
            return Err(Error::config("phases", format!("phase {a} outside (-pi, pi)")));
        }
        Ok(FeatureBank {
            arity,
            frequencies: frequencies.into_iter().flatten().collect(),
            phases,
        })
    }

    pub fn k(&self) -> usize {
        self.phases.len()
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn frequency_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.frequencies.chunks_exact(self.arity.count())
    }

    /// Stable short identifier derived from the bank's contents.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.arity.count() as u8]);
        for w in self.frequencies.iter().chain(&self.phases) {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Bank made of the first `k` features of this one.
    pub fn truncated(&self, k: usize) -> Result<FeatureBank> {
        if k == 0 || k > self.k() {
            return Err(Error::config("k", format!("cannot truncate {} features to {k}", self.k())));
        }
        let a = self.arity.count();
        Ok(FeatureBank {
            arity: self.arity,
            frequencies: self.frequencies[..k * a].to_vec(),
            phases: self.phases[..k].to_vec(),
        })
    }

    /// Evaluates the bank with the form matching its arity.
    pub fn eval(&self, series: &[f64]) -> Result<FeatureVector> {
        match self.arity {
            Arity::Univariate => eval_univariate(self, series),
            Arity::Bivariate => eval_bivariate(self, series),
        }
    }

    /// Writes the feature values into `out` (length k). Caller guarantees the
    /// series is long enough.
    pub(crate) fn eval_into(&self, series: &[f64], out: &mut [f64]) {
        match self.arity {
            Arity::Univariate => univariate_sums(&self.frequencies, &self.phases, series, out),
            Arity::Bivariate => bivariate_sums(&self.frequencies, &self.phases, series, out),
        }
    }
}

/// Feature values, each an average of cosines and so in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Draws `k` features: frequencies i.i.d. N(0, freq_scale^2), phases
/// i.i.d. uniform on (-pi, pi). Both come from inverse transforms of the
/// stream's uniforms, frequencies first then phases.
pub fn draw_bank(k: usize, arity: usize, freq_scale: f64, stream: &mut Stream) -> Result<FeatureBank> {
    let arity = Arity::from_count(arity)?;
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    if !(freq_scale > 0.0 && freq_scale.is_finite()) {
        return Err(Error::config("freq_scale", "must be positive and finite"));
    }
    let frequencies = (0..k)
        .map(|_| {
            (0..arity.count())
                .map(|_| freq_scale * normal_quantile(stream.next_uniform()))
                .collect()
        })
        .collect();
    let phases = (0..k)
        .map(|_| PI * (2.0 * stream.next_uniform() - 1.0))
        .collect();
    FeatureBank::new(arity, frequencies, phases)
}

pub fn eval_univariate(bank: &FeatureBank, series: &[f64]) -> Result<FeatureVector> {
    if bank.arity != Arity::Univariate {
        return Err(Error::Input("univariate evaluation needs an arity-1 bank".into()));
    }
    if series.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let mut out = vec![0.0; bank.k()];
    univariate_sums(&bank.frequencies, &bank.phases, series, &mut out);
    Ok(FeatureVector(out))
}

pub fn eval_bivariate(bank: &FeatureBank, series: &[f64]) -> Result<FeatureVector> {
    if bank.arity != Arity::Bivariate {
        return Err(Error::Input("bivariate evaluation needs an arity-2 bank".into()));
    }
    if series.len() < 2 {
        return Err(Error::Input(format!(
            "bivariate features need at least 2 observations, got {}",
            series.len()
        )));
    }
    let mut out = vec![0.0; bank.k()];
    bivariate_sums(&bank.frequencies, &bank.phases, series, &mut out);
    Ok(FeatureVector(out))
}

fn univariate_sums(freqs: &[f64], phases: &[f64], series: &[f64], out: &mut [f64]) {
    let inv_n = 1.0 / series.len() as f64;
    for ((o, &w), &a) in out.iter_mut().zip(freqs).zip(phases) {
        let mut acc = 0.0;
        for &x in series {
            acc += (w * x + a).cos();
        }
        *o = acc * inv_n;
    }
}

fn bivariate_sums(freqs: &[f64], phases: &[f64], series: &[f64], out: &mut [f64]) {
    let inv_pairs = 1.0 / (series.len() - 1) as f64;
    for ((o, w), &a) in out.iter_mut().zip(freqs.chunks_exact(2)).zip(phases) {
        let (w1, w2) = (w[0], w[1]);
        let mut acc = 0.0;
        for pair in series.windows(2) {
            acc += (w1 * pair[0] + w2 * pair[1] + a).cos();
        }
        *o = acc * inv_pairs;
    }
}
