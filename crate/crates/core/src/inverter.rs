//! Seed inversion for local samplers by per-coordinate rejection, with
//! exhaustive preimage oracles and audits.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{exact_distribution, ExactTable};
use crate::model::{check_spins, mask_from_spins, spins_from_mask, IsingModel, Spin};
use crate::rng::RngStream;
use crate::samplers::{plus_count, threshold, LocalSampler, Seed};

pub const DEFAULT_ATTEMPT_CAP: u64 = 1_000_000;
/// Seed spaces enumerated exhaustively must have at most this many bits.
pub const PREIMAGE_BITS_LIMIT: usize = 26;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    /// `None` is the failure marker: some coordinate exhausted its attempts.
    pub seed: Option<Seed>,
    pub attempts: Vec<u64>,
}

impl InversionResult {
    pub fn succeeded(&self) -> bool {
        self.seed.is_some()
    }
}

/// Draws blocks for coordinate `i` from substream `i` until the threshold
/// rule maps them to `y_i`. Depends on `y` only through `y_{T_i}` and `y_i`.
pub fn invert_coordinate(
    sampler: &LocalSampler,
    i: usize,
    y: &[Spin],
    stream: &RngStream,
    cap: u64,
) -> (Option<u64>, u64) {
    let s = sampler.seed_len();
    let p = sampler.conditional(i, y);
    let mask = (1u64 << s) - 1;
    let mut rng = stream.substream(i as u64).rng();
    for attempt in 1..=cap {
        let z = rng.random::<u64>() & mask;
        if threshold(z, s, p) == y[i] {
            return (Some(z), attempt);
        }
    }
    (None, cap)
}

/// Randomized inverter: independent rejection sampling per coordinate.
/// On success the returned seed is uniform on the preimage of `y`.
pub fn inv_samp(sampler: &LocalSampler, y: &[Spin], stream: &RngStream, cap: u64) -> Result<InversionResult> {
    let n = sampler.n();
    check_spins(y, n)?;
    let parts = exec::map_range(n, |i| invert_coordinate(sampler, i, y, stream, cap));
    let attempts = parts.iter().map(|p| p.1).collect();
    let blocks: Option<Vec<u64>> = parts.iter().map(|p| p.0).collect();
    let seed = blocks.map(|b| Seed::new(sampler.seed_len(), b).expect("blocks fit"));
    Ok(InversionResult { seed, attempts })
}

/// Exhaustive preimage of `y` together with the per-coordinate factor sets
/// `{z_i : Samp_i(z_i, y_{T_i}) = y_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Preimage {
    pub seeds: Vec<Seed>,
    pub factors: Vec<Vec<u64>>,
}

impl Preimage {
    pub fn factor_product(&self) -> u128 {
        self.factors.iter().map(|f| f.len() as u128).product()
    }

    /// Whether the preimage is exactly the Cartesian product of the factors.
    pub fn is_product(&self) -> bool {
        if self.seeds.len() as u128 != self.factor_product() {
            return false;
        }
        self.seeds.iter().all(|z| {
            z.blocks().iter().zip(&self.factors).all(|(b, f)| f.binary_search(b).is_ok())
        })
    }
}

pub fn preimage_enumerate(sampler: &LocalSampler, y: &[Spin]) -> Result<Preimage> {
    let n = sampler.n();
    let s = sampler.seed_len();
    check_spins(y, n)?;
    let bits = n * s as usize;
    if bits > PREIMAGE_BITS_LIMIT {
        return Err(Error::TooLarge { what: "seed space", n: bits, limit: PREIMAGE_BITS_LIMIT });
    }
    let target = mask_from_spins(y);
    let hits = exec::map_range(1usize << bits, |code| {
        let z = Seed::from_code(n, s, code as u128);
        (sampler.sample_mask(&z) == target).then_some(z)
    });
    let seeds: Vec<Seed> = hits.into_iter().flatten().collect();
    let factors = (0..n)
        .map(|i| {
            let p = sampler.conditional(i, y);
            (0..1u64 << s).filter(|&z| threshold(z, s, p) == y[i]).collect()
        })
        .collect();
    Ok(Preimage { seeds, factors })
}

/// `max_σ μ(σ)/Pr(Samp = σ)`, with `0/0 = 1` and `μ > 0 = Pr` giving `∞`.
pub fn likelihood_ratio_audit(sampler: &LocalSampler, model: &IsingModel) -> Result<f64> {
    if model.n() > 12 {
        return Err(Error::TooLarge { what: "likelihood ratio audit", n: model.n(), limit: 12 });
    }
    let mu = exact_distribution(model)?;
    let out = sampler.output_distribution()?;
    Ok(mu
        .probs()
        .iter()
        .zip(out.probs())
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, false) => 1.0,
            (true, false) => f64::INFINITY,
            _ => a / b,
        })
        .fold(0.0, f64::max))
}

/// TV between the empirical law of `inv_samp(y)` over `trials` independent
/// auxiliary streams and the uniform law on the exhaustive preimage.
pub fn preimage_uniformity_audit(
    sampler: &LocalSampler,
    y: &[Spin],
    trials: u64,
    stream: &RngStream,
) -> Result<f64> {
    let pre = preimage_enumerate(sampler, y)?;
    if pre.seeds.is_empty() {
        return Err(Error::InvalidParameter("configuration outside the sampler's image".into()));
    }
    let results = exec::map_range(trials as usize, |t| {
        inv_samp(sampler, y, &stream.substream(t as u64), DEFAULT_ATTEMPT_CAP).map(|r| r.seed)
    });
    let mut counts: BTreeMap<Vec<u64>, u64> = pre.seeds.iter().map(|z| (z.blocks().to_vec(), 0)).collect();
    for r in results {
        let z = r?.ok_or_else(|| Error::Violation("inversion failed on a supported input".into()))?;
        match counts.get_mut(z.blocks()) {
            Some(c) => *c += 1,
            None => return Err(Error::Violation("inverted seed outside the preimage".into())),
        }
    }
    let u = 1.0 / pre.seeds.len() as f64;
    Ok(0.5 * counts.values().map(|&c| (c as f64 / trials as f64 - u).abs()).sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeAudit {
    /// `|T_i|` per coordinate.
    pub sizes: Vec<usize>,
    /// `histogram[k]` = number of coordinates with `|T_i| = k`.
    pub histogram: Vec<usize>,
    pub max: usize,
    pub checks: usize,
}

/// With the auxiliary stream pinned, flips every `y_j` outside
/// `T_i ∪ {i}` for each base configuration and checks that the inverted
/// block `z_i` does not move.
pub fn inverter_degree_audit(
    sampler: &LocalSampler,
    bases: &[Vec<Spin>],
    stream: &RngStream,
) -> Result<DegreeAudit> {
    let n = sampler.n();
    let plan = sampler.plan();
    let per_base = exec::map_slice(bases, |y| -> Result<usize> {
        let mut checks = 0;
        for i in 0..n {
            let (zi, _) = invert_coordinate(sampler, i, y, stream, DEFAULT_ATTEMPT_CAP);
            for j in 0..n {
                if j == i || plan.cond_sets[i].binary_search(&j).is_ok() {
                    continue;
                }
                let mut flipped = y.clone();
                flipped[j] = -flipped[j];
                let (zj, _) = invert_coordinate(sampler, i, &flipped, stream, DEFAULT_ATTEMPT_CAP);
                if zi != zj {
                    return Err(Error::Violation(format!("z_{i} changed when y_{j} flipped")));
                }
                checks += 1;
            }
        }
        Ok(checks)
    });
    let mut checks = 0;
    for c in per_base {
        checks += c?;
    }
    let sizes: Vec<usize> = plan.cond_sets.iter().map(Vec::len).collect();
    let max = sizes.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0; max + 1];
    for &k in &sizes {
        histogram[k] += 1;
    }
    Ok(DegreeAudit { sizes, histogram, max, checks })
}

/// Exact law of `inv_samp(y)` with `y ~ μ`, evaluated at one seed:
/// `μ(Samp(z)) / |Samp⁻¹(Samp(z))|`, the preimage size taken from the
/// factor sets.
pub fn pushforward_density(sampler: &LocalSampler, mu: &ExactTable, z: &Seed) -> f64 {
    let y = sampler.sample_mask(z);
    let spins = spins_from_mask(y, sampler.n());
    let s = sampler.seed_len();
    let size: f64 = (0..sampler.n())
        .map(|i| {
            let plus = plus_count(sampler.conditional(i, &spins), s) as f64;
            if spins[i] > 0 {
                plus
            } else {
                (1u64 << s) as f64 - plus
            }
        })
        .product();
    mu.prob(y) / size
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{build_plan_with_radius, discretized, SamplerPlan};

    fn sampler(model: &IsingModel, r: usize, s: u32) -> LocalSampler {
        LocalSampler::compile(model, &build_plan_with_radius(model, r, s, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn uniform_inversion_fixes_leading_bit() {
        let m = IsingModel::uniform(3);
        let smp = sampler(&m, 1, 4);
        let y = vec![1, -1, 1];
        let stream = RngStream::new(1, "test", "inv");
        for t in 0..200 {
            let z = inv_samp(&smp, &y, &stream.substream(t), 100).unwrap().seed.unwrap();
            for i in 0..3 {
                assert_eq!(z.block_bits(i)[0], -y[i]);
            }
        }
    }

    #[test]
    fn single_variable_preimage() {
        let m = IsingModel::uniform(1);
        let smp = sampler(&m, 1, 2);
        let pre = preimage_enumerate(&smp, &[1]).unwrap();
        let blocks: Vec<u64> = pre.seeds.iter().map(|z| z.block(0)).collect();
        // Leading bit clear: blocks 00 and 01.
        assert_eq!(blocks, vec![0b00, 0b01]);
        assert!(pre.is_product());
    }

    #[test]
    fn unsupported_target_has_empty_preimage() {
        // The field is so strong that p rounds to 1 on a 3-bit grid.
        let m = IsingModel::new(1, vec![], vec![40.0]).unwrap();
        let smp = sampler(&m, 1, 3);
        let pre = preimage_enumerate(&smp, &[-1]).unwrap();
        assert!(pre.seeds.is_empty());
        assert_eq!(pre.factor_product(), 0);
        let r = inv_samp(&smp, &[-1], &RngStream::new(0, "t", "x"), 1000).unwrap();
        assert!(!r.succeeded());
    }

    #[test]
    fn expected_attempts_match_geometric_mean() {
        // One spin with Pr(+1) = 0.3, discretized to 3/8 at s = 3.
        let m = IsingModel::new(1, vec![], vec![0.5 * (0.3f64 / 0.7).ln()]).unwrap();
        let plan = SamplerPlan {
            n: 1,
            radius: 1,
            partition: vec![vec![0]],
            order: vec![0],
            cond_sets: vec![vec![]],
            seed_len: 3,
            eps: 0.5,
        };
        let smp = LocalSampler::compile(&m, &plan).unwrap();
        assert!((discretized(smp.conditional(0, &[1]), 3) - 0.375).abs() < 1e-15);
        let stream = RngStream::new(9, "test", "attempts");
        let trials = 20_000u64;
        let total: u64 = (0..trials).map(|t| inv_samp(&smp, &[1], &stream.substream(t), 1000).unwrap().attempts[0]).sum();
        let mean = total as f64 / trials as f64;
        let sd = ((1.0 - 0.375) / 0.375f64.powi(2) / trials as f64).sqrt();
        assert!((mean - 8.0 / 3.0).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn degree_audit_on_path() {
        let m = IsingModel::path(5, 0.4, 0.1);
        let smp = sampler(&m, 1, 5);
        let bases = vec![vec![1, -1, 1, 1, -1], vec![-1; 5]];
        let audit = inverter_degree_audit(&smp, &bases, &RngStream::new(2, "t", "deg")).unwrap();
        assert!(audit.max <= 2);
        assert!(audit.checks > 0);
    }
}
