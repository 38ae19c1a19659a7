//! Deterministic, splittable random streams.
//!
//! A stream is identified by a master seed plus a path of 32-bit labels. The
//! path is hashed (SHA-256) into a ChaCha key, so deriving a stream never
//! depends on which other streams were derived before it. Workers derive their
//! own streams from immutable [`SeedSpec`] values.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Purpose labels used as the second-to-last element of stream paths.
pub mod tag {
    pub const BANK: u32 = 1;
    pub const HOLDOUT_BANK: u32 = 2;
    pub const DATA: u32 = 3;
    pub const SIMULATION: u32 = 4;
    pub const ANNEAL: u32 = 5;
    pub const ESTIMATE: u32 = 6;
    pub const PILOT_VARIANCE: u32 = 7;
    pub const JACOBIAN: u32 = 8;
    pub const FEATURE_VARIANCE: u32 = 9;
    pub const BOOTSTRAP: u32 = 10;
    pub const NULL: u32 = 11;
    pub const SWEEP: u32 = 12;
    pub const DIAGNOSTIC: u32 = 13;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path: Vec<u32>,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path: impl Into<Vec<u32>>) -> Self {
        SeedSpec {
            master_seed,
            path: path.into(),
        }
    }

    /// Extends the path by one label.
    pub fn child(&self, label: u32) -> SeedSpec {
        let mut path = self.path.clone();
        path.push(label);
        SeedSpec {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn children(&self, labels: &[u32]) -> SeedSpec {
        let mut path = self.path.clone();
        path.extend_from_slice(labels);
        SeedSpec {
            master_seed: self.master_seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"rfmatch-stream-v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.path.len() as u64).to_le_bytes());
        for label in &self.path {
            hasher.update(label.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

impl std::fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.master_seed)?;
        for label in &self.path {
            write!(f, "/{label}")?;
        }
        Ok(())
    }
}

/// A stateful generator. Not shared between workers.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha12Rng,
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

impl Stream {
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on the open interval (0, 1), which sits inside [0, 1) and
    /// keeps quantile transforms finite.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_uniform();
        }
    }
}

/// Derives the stream for `spec`. Equal specs give identical sequences.
///
/// Panics if the path is empty.
pub fn derive_stream(spec: &SeedSpec) -> Stream {
    assert!(!spec.path.is_empty(), "stream path must be non-empty");
    Stream {
        rng: ChaCha12Rng::from_seed(spec.key()),
    }
}

/// An `s × m` block of uniforms, row-major, one row per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBlock {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl UniformBlock {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }
}

/// Draws `s` rows of `m` uniforms, consuming exactly `s * m` stream values.
pub fn draw_uniform_block(stream: &mut Stream, s: usize, m: usize) -> UniformBlock {
    assert!(s >= 1 && m >= 1, "uniform block needs s >= 1 and m >= 1");
    let mut values = vec![0.0; s * m];
    stream.fill_uniform(&mut values);
    UniformBlock {
        rows: s,
        cols: m,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first(spec: &SeedSpec, count: usize) -> Vec<f64> {
        let mut st = derive_stream(spec);
        (0..count).map(|_| st.next_uniform()).collect()
    }

    #[test]
    fn same_spec_same_sequence() {
        let spec = SeedSpec::new(7, [0, 0]);
        assert_eq!(first(&spec, 100), first(&spec, 100));
    }

    #[test]
    fn sibling_paths_differ() {
        let a = first(&SeedSpec::new(7, [0, 0]), 1000);
        let b = first(&SeedSpec::new(7, [0, 1]), 1000);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn seeds_differ() {
        let a = first(&SeedSpec::new(7, [0, 0]), 1000);
        let b = first(&SeedSpec::new(8, [0, 0]), 1000);
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn prefix_paths_differ() {
        let a = first(&SeedSpec::new(7, [0]), 10);
        let b = first(&SeedSpec::new(7, [0, 0]), 10);
        assert_ne!(a, b);
    }

    #[test]
    fn block_shape_and_range() {
        let mut st = derive_stream(&SeedSpec::new(1, [3]));
        let block = draw_uniform_block(&mut st, 1, 3);
        assert_eq!((block.rows(), block.cols()), (1, 3));
        assert!(block.values().iter().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn block_consumes_exactly_s_times_m() {
        let spec = SeedSpec::new(11, [2]);
        let mut a = derive_stream(&spec);
        let _ = draw_uniform_block(&mut a, 4, 5);
        let mut b = derive_stream(&spec);
        for _ in 0..20 {
            b.next_uniform();
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn stream_advances_between_blocks() {
        let mut st = derive_stream(&SeedSpec::new(1, [9]));
        let a = draw_uniform_block(&mut st, 2, 3);
        let b = draw_uniform_block(&mut st, 2, 3);
        assert_ne!(a, b);
    }

    #[test]
    fn block_mean_near_half() {
        let mut st = derive_stream(&SeedSpec::new(5, [1, 2]));
        let block = draw_uniform_block(&mut st, 10, 100);
        let mean = block.values().iter().sum::<f64>() / 1000.0;
        // 3 sigma for the mean of 1000 uniforms
        let tol = 3.0 * (1.0 / 12f64.sqrt()) / 1000f64.sqrt();
        assert!((mean - 0.5).abs() <= tol, "mean {mean}");
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let a = first(&SeedSpec::new(3, [1, 0]), 10_000);
        let b = first(&SeedSpec::new(3, [1, 1]), 10_000);
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(&b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        let rho = sab / (saa * sbb).sqrt();
        assert!(rho.abs() < 0.05, "rho = {rho}");
    }

    #[test]
    #[should_panic]
    fn empty_path_rejected() {
        derive_stream(&SeedSpec::new(1, Vec::new()));
    }
}
