//! Seeded local samplers: the staged SSM sampler, tree samplers, and the
//! exact sequential and Glauber comparators.

mod chains;
mod local;
mod plan;
mod tree;

pub use chains::{exact_iterative_sample, glauber_chain, ExactSampler, GlauberStart};
pub use local::{conditional_accuracy_audit, locality_audit, sampler_output_distribution, ssm_samp, LocalSampler, LocalityReport};
pub use plan::{build_plan_with_radius, build_ssm_plan, default_seed_len, ssm_radius, tree_plan, SamplerPlan};
pub use tree::{local_tree_radius, tree_samp, LocalTreeSampler};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spin;

/// Longest supported local block.
pub const MAX_SEED_LEN: u32 = 52;

/// `Σ_i 1{bit_i = +1}·2^{−i}` for a ±1 bit sequence (1-based `i`).
pub fn binary_fraction(bits: &[Spin]) -> f64 {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b > 0)
        .map(|(i, _)| 0.5f64.powi(i as i32 + 1))
        .sum()
}

/// Threshold rule: `+1` iff `[z]_2 < p`, with `z` an `s`-bit block.
#[inline]
pub fn threshold(block: u64, s: u32, p: f64) -> Spin {
    if (block as f64) < p * (1u64 << s) as f64 {
        1
    } else {
        -1
    }
}

/// Number of `s`-bit blocks mapped to `+1` by the threshold rule at `p`,
/// i.e. `⌈p·2^s⌉` clamped to `[0, 2^s]`.
#[inline]
pub fn plus_count(p: f64, s: u32) -> u64 {
    let scale = (1u64 << s) as f64;
    (p * scale).ceil().clamp(0.0, scale) as u64
}

/// Probability the threshold rule outputs `+1` under a uniform block.
pub fn discretized(p: f64, s: u32) -> f64 {
    plus_count(p, s) as f64 / (1u64 << s) as f64
}

/// `n` blocks of `s` uniform bits. Block `j` belongs to variable `j`; bit
/// `i` (1-based, most significant first) of block `j` is flat bit
/// `j·s + i − 1`, and `[z_j]_2 = blocks[j] / 2^s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    s: u32,
    blocks: Vec<u64>,
}

impl Seed {
    pub fn new(s: u32, blocks: Vec<u64>) -> Result<Self> {
        check_seed_len(s)?;
        if let Some(b) = blocks.iter().find(|&&b| b >> s != 0) {
            return Err(Error::InvalidParameter(format!("block {b} exceeds {s} bits")));
        }
        Ok(Self { s, blocks })
    }

    pub fn zeros(n: usize, s: u32) -> Self {
        Self::new(s, vec![0; n]).expect("valid seed length")
    }

    /// Every bit set: `[z]_2 = 1 − 2^{−s}` in each block.
    pub fn all_ones(n: usize, s: u32) -> Self {
        Self::new(s, vec![(1u64 << s) - 1; n]).expect("valid seed length")
    }

    pub fn uniform(n: usize, s: u32, rng: &mut impl Rng) -> Self {
        let mask = (1u64 << s) - 1;
        Self::new(s, (0..n).map(|_| rng.random::<u64>() & mask).collect()).expect("valid seed length")
    }

    /// From a flat bit vector of length `s·n` (true = 1).
    pub fn from_bits(s: u32, bits: &[bool]) -> Result<Self> {
        check_seed_len(s)?;
        if bits.len() % s as usize != 0 {
            return Err(Error::DimensionMismatch { expected: s as usize, got: bits.len() });
        }
        let blocks = bits
            .chunks(s as usize)
            .map(|c| c.iter().fold(0u64, |acc, &b| acc << 1 | u64::from(b)))
            .collect();
        Self::new(s, blocks)
    }

    /// Decodes a seed whose flat bits are the low `s·n` bits of `code`
    /// (flat bit `t` is bit `t` of `code`).
    pub fn from_code(n: usize, s: u32, code: u128) -> Self {
        let blocks = (0..n)
            .map(|j| {
                (1..=s).fold(0u64, |acc, i| {
                    let t = j * s as usize + i as usize - 1;
                    acc << 1 | (code >> t & 1) as u64
                })
            })
            .collect();
        Self { s, blocks }
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn total_bits(&self) -> usize {
        self.blocks.len() * self.s as usize
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> u64 {
        self.blocks[j]
    }

    /// `[z_j]_2 ∈ [0, 1)`.
    pub fn fraction(&self, j: usize) -> f64 {
        self.blocks[j] as f64 / (1u64 << self.s) as f64
    }

    /// Block `j` as a ±1 bit sequence, most significant bit first.
    pub fn block_bits(&self, j: usize) -> Vec<Spin> {
        (1..=self.s).map(|i| if self.blocks[j] >> (self.s - i) & 1 == 1 { 1 } else { -1 }).collect()
    }

    pub fn bit(&self, t: usize) -> bool {
        let (j, i) = (t / self.s as usize, t % self.s as usize + 1);
        self.blocks[j] >> (self.s - i as u32) & 1 == 1
    }

    pub fn with_flipped_bit(&self, t: usize) -> Self {
        let (j, i) = (t / self.s as usize, t % self.s as usize + 1);
        let mut out = self.clone();
        out.blocks[j] ^= 1 << (self.s - i as u32);
        out
    }

    pub fn with_block(&self, j: usize, block: u64) -> Self {
        let mut out = self.clone();
        out.blocks[j] = block;
        out
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.total_bits()).map(|t| self.bit(t)).collect()
    }
}

fn check_seed_len(s: u32) -> Result<()> {
    if s == 0 || s > MAX_SEED_LEN {
        return Err(Error::InvalidParameter(format!("seed length {s} outside 1..={MAX_SEED_LEN}")));
    }
    Ok(())
}

/// Output of one sampler run, with what it consumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub spins: Vec<Spin>,
    /// The conditional `p_v` thresholded for each variable.
    pub conditionals: Vec<f64>,
    /// Blocks `z_v` read for each variable.
    pub blocks: Vec<u64>,
    pub s: u32,
    /// Variables set by the first-bit fallback of the local tree sampler.
    #[serde(default)]
    pub fallback: Vec<usize>,
}

impl SampleTrace {
    /// Re-applies the threshold (or fallback) rule to the recorded values.
    pub fn replay(&self) -> Vec<Spin> {
        (0..self.spins.len())
            .map(|v| {
                if self.fallback.binary_search(&v).is_ok() {
                    first_bit(self.blocks[v], self.s)
                } else {
                    threshold(self.blocks[v], self.s, self.conditionals[v])
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

pub(crate) fn first_bit(block: u64, s: u32) -> Spin {
    if block >> (s - 1) & 1 == 1 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_fraction_examples() {
        assert_eq!(binary_fraction(&[1, -1, 1]), 0.625);
        assert_eq!(binary_fraction(&[-1, -1, -1, -1]), 0.0);
        assert_eq!(binary_fraction(&[1]), 0.5);
    }

    #[test]
    fn discretization_examples() {
        assert_eq!(discretized(0.3, 3), 0.375);
        assert_eq!(plus_count(0.5, 1), 1);
        assert_eq!(discretized(0.25, 2), 0.25);
        assert_eq!(plus_count(1.0, 4), 16);
        assert_eq!(plus_count(0.0, 4), 0);
    }

    #[test]
    fn all_ones_fraction() {
        let z = Seed::all_ones(3, 5);
        assert_eq!(z.fraction(2), 1.0 - 1.0 / 32.0);
        assert_eq!(threshold(z.block(0), 5, 1.0 - 1.0 / 32.0), -1);
        assert_eq!(threshold(z.block(0), 5, 1.0 - 1.0 / 64.0), 1);
    }

    proptest! {
        #[test]
        fn block_views_agree(s in 1u32..12, blocks in proptest::collection::vec(any::<u64>(), 1..5)) {
            let blocks: Vec<u64> = blocks.into_iter().map(|b| b & ((1 << s) - 1)).collect();
            let z = Seed::new(s, blocks).unwrap();
            for j in 0..z.n_blocks() {
                prop_assert_eq!(binary_fraction(&z.block_bits(j)), z.fraction(j));
                prop_assert!(z.fraction(j) < 1.0);
            }
            prop_assert_eq!(Seed::from_bits(s, &z.to_bits()).unwrap(), z.clone());
            let t = (z.total_bits() - 1) / 2;
            prop_assert_ne!(z.with_flipped_bit(t).bit(t), z.bit(t));
        }

        #[test]
        fn threshold_matches_discretized_count(p in 0.0f64..=1.0, s in 1u32..10) {
            let count = (0..1u64 << s).filter(|&b| threshold(b, s, p) == 1).count() as u64;
            prop_assert_eq!(count, plus_count(p, s));
            prop_assert!(discretized(p, s) >= p && discretized(p, s) - p < 1.0 / (1u64 << s) as f64);
        }
    }
}
