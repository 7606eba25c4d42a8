use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{conditional_prob, exact_distribution, ExactTable};
use crate::model::{IsingModel, PartialConfiguration, Spin};
use crate::samplers::{plus_count, threshold, SamplerPlan, SampleTrace, Seed};

/// Largest conditioning set tabulated by [`LocalSampler::compile`].
pub const MAX_COND_SET: usize = 20;
/// Above this size conditional tables are filled by oracle calls instead of
/// one pass over the exact table.
const TABLE_PASS_LIMIT: usize = 20;
const OUTPUT_LIMIT: usize = 20;

/// A plan with its conditionals tabulated: `cond[v][key]` is
/// `Pr(X_v = +1 | X_{T_v})` where bit `k` of `key` is the spin of the
/// `k`-th element of `T_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSampler {
    plan: SamplerPlan,
    cond: Vec<Vec<f64>>,
}

impl LocalSampler {
    pub fn compile(model: &IsingModel, plan: &SamplerPlan) -> Result<Self> {
        if plan.n != model.n() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: plan.n });
        }
        plan.validate(model.graph())?;
        if plan.max_cond_set() > MAX_COND_SET {
            return Err(Error::TooLarge {
                what: "conditioning set",
                n: plan.max_cond_set(),
                limit: MAX_COND_SET,
            });
        }
        let cond = if model.n() <= TABLE_PASS_LIMIT && !model.is_forest() {
            let table = exact_distribution(model)?;
            (0..model.n()).map(|v| table_conditionals(&table, v, &plan.cond_sets[v])).collect()
        } else {
            oracle_conditionals(model, plan)?
        };
        Ok(Self { plan: plan.clone(), cond })
    }

    /// Tables filled by `conditional_prob` for every key, whatever `n` is.
    pub fn compile_with_oracle(model: &IsingModel, plan: &SamplerPlan) -> Result<Self> {
        plan.validate(model.graph())?;
        Ok(Self { plan: plan.clone(), cond: oracle_conditionals(model, plan)? })
    }

    pub fn plan(&self) -> &SamplerPlan {
        &self.plan
    }

    pub fn n(&self) -> usize {
        self.plan.n
    }

    pub fn seed_len(&self) -> u32 {
        self.plan.seed_len
    }

    /// `Pr(X_v = +1 | X_{T_v} = y_{T_v})` as used by the sampler.
    pub fn conditional(&self, v: usize, y: &[Spin]) -> f64 {
        self.cond[v][key(&self.plan.cond_sets[v], y)]
    }

    pub fn conditional_table(&self, v: usize) -> &[f64] {
        &self.cond[v]
    }

    /// Runs the sampler on `seed`.
    pub fn sample(&self, seed: &Seed) -> Result<SampleTrace> {
        self.check_seed(seed)?;
        let n = self.n();
        let s = seed.s();
        let mut y = vec![0 as Spin; n];
        let mut conditionals = vec![0.0; n];
        for &v in &self.plan.order {
            let p = self.conditional(v, &y);
            conditionals[v] = p;
            y[v] = threshold(seed.block(v), s, p);
        }
        Ok(SampleTrace { spins: y, conditionals, blocks: seed.blocks().to_vec(), s, fallback: Vec::new() })
    }

    /// Spins only, as a configuration mask.
    pub fn sample_mask(&self, seed: &Seed) -> u64 {
        let s = seed.s();
        let mut y = vec![0 as Spin; self.n()];
        let mut mask = 0u64;
        for &v in &self.plan.order {
            let p = self.conditional(v, &y);
            y[v] = threshold(seed.block(v), s, p);
            if y[v] > 0 {
                mask |= 1 << v;
            }
        }
        mask
    }

    pub fn sample_batch(&self, seeds: &[Seed]) -> Result<Vec<SampleTrace>> {
        exec::map_slice(seeds, |z| self.sample(z)).into_iter().collect()
    }

    pub(crate) fn check_seed(&self, seed: &Seed) -> Result<()> {
        if seed.n_blocks() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: seed.n_blocks() });
        }
        if seed.s() != self.plan.seed_len {
            return Err(Error::DimensionMismatch {
                expected: self.plan.seed_len as usize,
                got: seed.s() as usize,
            });
        }
        Ok(())
    }

    /// Probability, under a uniform block, that variable `v` outputs `y_v`
    /// given earlier outputs `y`.
    pub fn discretized_conditional(&self, v: usize, y: &[Spin]) -> f64 {
        let s = self.plan.seed_len;
        let plus = plus_count(self.conditional(v, y), s) as f64 / (1u64 << s) as f64;
        if y[v] > 0 {
            plus
        } else {
            1.0 - plus
        }
    }

    /// Exact law of the output under a uniform seed: the product of the
    /// discretized conditionals along the plan order.
    pub fn output_distribution(&self) -> Result<ExactTable> {
        let n = self.n();
        if n > OUTPUT_LIMIT {
            return Err(Error::TooLarge { what: "sampler output table", n, limit: OUTPUT_LIMIT });
        }
        let s = self.plan.seed_len;
        let scale = (1u64 << s) as f64;
        let probs = exec::map_range(1usize << n, |m| {
            let mut p = 1.0;
            for v in 0..n {
                let t = &self.plan.cond_sets[v];
                let k = t.iter().enumerate().fold(0usize, |acc, (b, &j)| acc | (m >> j & 1) << b);
                let plus = plus_count(self.cond[v][k], s) as f64 / scale;
                p *= if m >> v & 1 == 1 { plus } else { 1.0 - plus };
                if p == 0.0 {
                    break;
                }
            }
            p
        });
        ExactTable::new(n, probs)
    }
}

fn key(t: &[usize], y: &[Spin]) -> usize {
    t.iter().enumerate().fold(0, |acc, (b, &j)| if y[j] > 0 { acc | 1 << b } else { acc })
}

fn table_conditionals(table: &ExactTable, v: usize, t: &[usize]) -> Vec<f64> {
    let size = 1usize << t.len();
    let mut plus = vec![0.0; size];
    let mut total = vec![0.0; size];
    for (m, &p) in table.probs().iter().enumerate() {
        let k = t.iter().enumerate().fold(0usize, |acc, (b, &j)| acc | (m >> j & 1) << b);
        total[k] += p;
        if m >> v & 1 == 1 {
            plus[k] += p;
        }
    }
    plus.iter().zip(&total).map(|(&a, &b)| if b > 0.0 { a / b } else { 0.5 }).collect()
}

fn oracle_conditionals(model: &IsingModel, plan: &SamplerPlan) -> Result<Vec<Vec<f64>>> {
    let n = model.n();
    (0..n)
        .map(|v| {
            let t = &plan.cond_sets[v];
            exec::map_range(1usize << t.len(), |k| {
                let pin = PartialConfiguration::from_pairs(
                    n,
                    t.iter().enumerate().map(|(b, &j)| (j, if k >> b & 1 == 1 { 1 } else { -1 })),
                )?;
                conditional_prob(model, v, &pin)
            })
            .into_iter()
            .collect()
        })
        .collect()
}

/// The staged sampler run directly from the model: each `p_v` is computed
/// by `conditional_prob` on `y` restricted to `T_v` at the time it is
/// needed.
pub fn ssm_samp(plan: &SamplerPlan, model: &IsingModel, seed: &Seed) -> Result<SampleTrace> {
    let n = model.n();
    if seed.n_blocks() != n || seed.s() != plan.seed_len || plan.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: seed.n_blocks() });
    }
    let s = seed.s();
    let mut y = vec![0 as Spin; n];
    let mut conditionals = vec![0.0; n];
    for part in &plan.partition {
        // Outputs within a part only read earlier parts.
        let ps = exec::map_slice(part, |&v| {
            let pin = PartialConfiguration::restrict(&y, &plan.cond_sets[v]);
            conditional_prob(model, v, &pin)
        });
        for (&v, p) in part.iter().zip(ps) {
            let p = p?;
            conditionals[v] = p;
            y[v] = threshold(seed.block(v), s, p);
        }
    }
    Ok(SampleTrace { spins: y, conditionals, blocks: seed.blocks().to_vec(), s, fallback: Vec::new() })
}

/// Exact output law of the plan's sampler on `model`.
pub fn sampler_output_distribution(plan: &SamplerPlan, model: &IsingModel) -> Result<ExactTable> {
    LocalSampler::compile(model, plan)?.output_distribution()
}

const ACCURACY_LIMIT: usize = 12;

/// `max` over supported `σ` and positions of
/// `μ(σ_v | σ_{earlier in order}) / p̂_v(σ_v | σ_{T_v})`, the factor by
/// which the sampler's discretized conditional can undershoot the true one.
/// `0/0` counts as 1 and a positive true conditional against a zero sampler
/// conditional as infinity.
pub fn conditional_accuracy_audit(sampler: &LocalSampler, model: &IsingModel) -> Result<f64> {
    let n = model.n();
    if n > ACCURACY_LIMIT {
        return Err(Error::TooLarge { what: "conditional accuracy audit", n, limit: ACCURACY_LIMIT });
    }
    let mu = exact_distribution(model)?;
    let order = &sampler.plan().order;
    // marg[k][m & prefix_k] = μ(X_{order[..k]} = m).
    let mut prefix = vec![0u64; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] | 1 << order[k];
    }
    let marg: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let mut t = vec![0.0; 1usize << n];
            for (m, &p) in mu.probs().iter().enumerate() {
                t[m & prefix[k] as usize] += p;
            }
            t
        })
        .collect();
    let worst = exec::map_range(1usize << n, |m| {
        if mu.probs()[m] == 0.0 {
            return 1.0f64;
        }
        let y = crate::model::spins_from_mask(m as u64, n);
        let mut worst = 1.0f64;
        for (k, &v) in order.iter().enumerate() {
            let truth = marg[k + 1][m & prefix[k + 1] as usize] / marg[k][m & prefix[k] as usize];
            let ours = sampler.discretized_conditional(v, &y);
            worst = worst.max(match (truth > 0.0, ours > 0.0) {
                (false, _) => 1.0,
                (true, false) => f64::INFINITY,
                _ => truth / ours,
            });
        }
        worst
    });
    Ok(worst.into_iter().fold(1.0, f64::max))
}

/// Outcome of flipping single seed bits and watching which outputs move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub seeds_checked: usize,
    pub exhaustive: bool,
    /// Flips that changed an output whose dependency set excludes the
    /// flipped block.
    pub violations: usize,
    pub max_dependency_bits: usize,
    /// `max_v |B_{r(K−1)}(v)| · s`.
    pub ball_bound_bits: usize,
}

impl LocalityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.max_dependency_bits <= self.ball_bound_bits
    }
}

/// Seeds are enumerated when `2^{s·n} ≤ max_seeds`, otherwise `max_seeds`
/// uniform seeds are drawn from `stream`.
pub fn locality_audit(
    sampler: &LocalSampler,
    model: &IsingModel,
    max_seeds: usize,
    stream: &crate::rng::RngStream,
) -> Result<LocalityReport> {
    let n = sampler.n();
    if n != model.n() || n > 64 {
        return Err(Error::DimensionMismatch { expected: model.n(), got: n });
    }
    let plan = sampler.plan();
    let s = plan.seed_len;
    let bits = n * s as usize;
    let dep = plan.dependency_sets();
    // readers[u]: outputs allowed to depend on block u.
    let mut readers = vec![0u64; n];
    for (v, d) in dep.iter().enumerate() {
        for &u in d {
            readers[u] |= 1 << v;
        }
    }
    let exhaustive = bits < 64 && (1u128 << bits) <= max_seeds as u128;
    let count = if exhaustive { 1usize << bits } else { max_seeds };
    let violations: usize = exec::map_range(count, |k| {
        let seed = if exhaustive {
            Seed::from_code(n, s, k as u128)
        } else {
            Seed::uniform(n, s, &mut stream.substream(k as u64).rng())
        };
        let y = sampler.sample_mask(&seed);
        (0..bits)
            .filter(|&t| {
                let changed = y ^ sampler.sample_mask(&seed.with_flipped_bit(t));
                changed & !readers[t / s as usize] != 0
            })
            .count()
    })
    .into_iter()
    .sum();
    let reach = (plan.radius.saturating_mul(plan.num_parts().saturating_sub(1))).min(n);
    let ball = (0..n).map(|v| model.graph().ball_unchecked(v, reach).len()).max().unwrap_or(0);
    Ok(LocalityReport {
        seeds_checked: count,
        exhaustive,
        violations,
        max_dependency_bits: plan.max_dependency_bits(),
        ball_bound_bits: ball * s as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::tv_distance;
    use crate::samplers::{build_plan_with_radius, discretized, SamplerPlan};

    fn two_spin() -> (IsingModel, SamplerPlan) {
        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0; 2]).unwrap();
        let plan = SamplerPlan {
            n: 2,
            radius: 1,
            partition: vec![vec![0], vec![1]],
            order: vec![0, 1],
            cond_sets: vec![vec![], vec![0]],
            seed_len: 8,
            eps: 0.5,
        };
        (m, plan)
    }

    #[test]
    fn uniform_model_reads_leading_bit() {
        let m = IsingModel::uniform(4);
        let plan = build_plan_with_radius(&m, 1, 3, 0.5).unwrap();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        // p = ½ exactly: +1 iff [z]_2 < ½ iff the leading bit is clear.
        let seed = Seed::new(3, vec![0b100, 0b011, 0b111, 0b000]).unwrap();
        assert_eq!(sampler.sample(&seed).unwrap().spins, vec![-1, 1, -1, 1]);
        let out = sampler.output_distribution().unwrap();
        assert_eq!(tv_distance(&out, &ExactTable::uniform(4)).unwrap(), 0.0);
    }

    #[test]
    fn two_spin_threshold() {
        let (m, plan) = two_spin();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let p1 = 1.0 / (1.0 + (-1.0f64).exp());
        // z_0 = 0 forces y_0 = +1 (p = ½).
        for z1 in 0..256u64 {
            let t = sampler.sample(&Seed::new(8, vec![0, z1]).unwrap()).unwrap();
            assert_eq!(t.spins[0], 1);
            assert!((t.conditionals[1] - p1).abs() < 1e-12);
            assert_eq!(t.spins[1] == 1, (z1 as f64) / 256.0 < p1);
            assert_eq!(t.replay(), t.spins);
        }
    }

    #[test]
    fn all_ones_seed_boundary() {
        let m = IsingModel::grid(2, 2, 0.3, 0.2);
        let plan = build_plan_with_radius(&m, 1, 4, 0.5).unwrap();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let t = sampler.sample(&Seed::all_ones(4, 4)).unwrap();
        for v in 0..4 {
            assert_eq!(t.spins[v] == 1, t.conditionals[v] > 1.0 - 1.0 / 16.0);
        }
    }

    #[test]
    fn compile_routes_agree() {
        let m = IsingModel::grid(2, 3, 0.4, -0.1);
        let plan = build_plan_with_radius(&m, 2, 6, 0.5).unwrap();
        let a = LocalSampler::compile(&m, &plan).unwrap();
        let b = LocalSampler::compile_with_oracle(&m, &plan).unwrap();
        for v in 0..6 {
            for (x, y) in a.conditional_table(v).iter().zip(b.conditional_table(v)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn direct_and_compiled_agree() {
        let m = IsingModel::grid(2, 3, 0.4, -0.1);
        let plan = build_plan_with_radius(&m, 1, 5, 0.5).unwrap();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let mut rng = crate::RngStream::new(1, "test", "seeds").rng();
        for _ in 0..200 {
            let z = Seed::uniform(6, 5, &mut rng);
            let a = sampler.sample(&z).unwrap();
            let b = ssm_samp(&plan, &m, &z).unwrap();
            assert_eq!(a.spins, b.spins);
            assert_eq!(sampler.sample_mask(&z), crate::model::mask_from_spins(&a.spins));
        }
    }

    #[test]
    fn output_table_is_product_of_discretized_conditionals() {
        let (m, mut plan) = two_spin();
        plan.seed_len = 3;
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let out = sampler.output_distribution().unwrap();
        let p1 = 1.0 / (1.0 + (-1.0f64).exp());
        let q = discretized(p1, 3);
        assert!((out.prob(0b11) - 0.5 * q).abs() < 1e-15);
        assert!((out.prob(0b01) - 0.5 * (1.0 - q)).abs() < 1e-15);
        // And by brute force over all 2^6 seeds.
        let mut counts = [0usize; 4];
        for code in 0..64u128 {
            counts[sampler.sample_mask(&Seed::from_code(2, 3, code)) as usize] += 1;
        }
        for mask in 0..4u64 {
            assert!((counts[mask as usize] as f64 / 64.0 - out.prob(mask)).abs() < 1e-15);
        }
    }

    #[test]
    fn locality_on_small_grid() {
        let m = IsingModel::grid(2, 3, 0.3, 0.0);
        let plan = build_plan_with_radius(&m, 1, 2, 0.5).unwrap();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let r = locality_audit(&sampler, &m, 1 << 12, &crate::rng::RngStream::new(1, "t", "loc")).unwrap();
        assert!(r.exhaustive && r.passed(), "{r:?}");
        assert!(plan.num_parts() > 1);
    }

    #[test]
    fn conditional_accuracy_within_plan_eps() {
        let m = IsingModel::grid(2, 2, 0.2, 0.0);
        let plan = crate::samplers::build_ssm_plan(&m, 1.0, 0.5, 0.1, None).unwrap();
        let sampler = LocalSampler::compile(&m, &plan).unwrap();
        let r = conditional_accuracy_audit(&sampler, &m).unwrap();
        assert!(r >= 1.0 && r <= 1.0 + 0.1 / 4.0, "{r}");
        let u = IsingModel::uniform(3);
        let s = LocalSampler::compile(&u, &build_plan_with_radius(&u, 1, 2, 0.1).unwrap()).unwrap();
        assert_eq!(conditional_accuracy_audit(&s, &u).unwrap(), 1.0);
    }
}
