use serde::{Deserialize, Serialize};

use crate::concepts::{Concept, MonotoneDnf};
use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{coordinate_influences, exact_distribution, poincare_under_pinnings, tv_distance, ExactTable};
use crate::model::{mask_from_spins, sigmoid, IsingModel, Spin};
use crate::rng::RngStream;
use crate::samplers::{plus_count, ExactSampler, LocalSampler, Seed};

/// Largest `n` for exact μ-influence enumeration.
pub const INFLUENCE_EXACT_LIMIT: usize = 20;
/// Largest `s·n` for the tabulated uniform route.
pub const TABULATE_BITS_LIMIT: usize = 22;
/// Largest `n` for the coupled exact uniform route.
pub const COUPLED_EXACT_LIMIT: usize = 16;

#[derive(Clone, Debug)]
pub enum InfluenceMode {
    Exact,
    MonteCarlo { trials: u64, stream: RngStream },
}

#[derive(Clone, Debug)]
pub enum UniformMode {
    /// Coupled enumeration along the plan order.
    Exact,
    /// Evaluates the composition on every seed.
    Tabulate,
    MonteCarlo { trials: u64, stream: RngStream },
}

/// Total influence and its split over coordinates (over seed blocks for
/// compositions with a sampler).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub total: f64,
    pub per_coordinate: Vec<f64>,
    /// Standard error of `total` for Monte Carlo estimates.
    pub std_error: Option<f64>,
}

impl Influence {
    fn exact(per_coordinate: Vec<f64>) -> Self {
        Self { total: per_coordinate.iter().sum(), per_coordinate, std_error: None }
    }
}

fn check_dim(c: &Concept, n: usize) -> Result<()> {
    if c.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.n() });
    }
    Ok(())
}

/// `I_{j,μ}[f] = ½ E[(f(X) − f(X^j))²]` where `X^j` resamples coordinate `j`
/// from its conditional given the rest.
pub fn mu_influence(c: &Concept, model: &IsingModel, mode: &InfluenceMode) -> Result<Influence> {
    let n = model.n();
    check_dim(c, n)?;
    match mode {
        InfluenceMode::Exact => {
            if n > INFLUENCE_EXACT_LIMIT {
                return Err(Error::TooLarge { what: "exact influence", n, limit: INFLUENCE_EXACT_LIMIT });
            }
            let table = exact_distribution(model)?;
            let f: Vec<f64> = c.values()?.into_iter().map(f64::from).collect();
            Ok(Influence::exact(coordinate_influences(model, &table, &f)?))
        }
        InfluenceMode::MonteCarlo { trials, stream } => mu_influence_mc(c, model, *trials, stream),
    }
}

fn mu_influence_mc(c: &Concept, model: &IsingModel, trials: u64, stream: &RngStream) -> Result<Influence> {
    use rand::Rng;
    if trials < 2 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least two trials".into()));
    }
    let n = model.n();
    let sampler = ExactSampler::new(model)?;
    let draws = exec::map_range(trials as usize, |t| -> Result<Vec<f64>> {
        let mut rng = stream.substream(t as u64).rng();
        let mut x = sampler.sample(&mut rng)?;
        let fx = c.eval(&x)?;
        let mut out = vec![0.0; n];
        for (j, slot) in out.iter_mut().enumerate() {
            let p = sigmoid(2.0 * model.local_field(j, &x));
            let old = x[j];
            x[j] = if rng.random::<f64>() < p { 1 } else { -1 };
            if x[j] != old && c.eval(&x)? != fx {
                *slot = 2.0;
            }
            x[j] = old;
        }
        Ok(out)
    });
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    let t = trials as f64;
    let mut per = vec![0.0; n];
    for d in &draws {
        for (p, v) in per.iter_mut().zip(d) {
            *p += v / t;
        }
    }
    let totals: Vec<f64> = draws.iter().map(|d| d.iter().sum()).collect();
    let (mean, se) = mean_and_se(&totals);
    Ok(Influence { total: mean, per_coordinate: per, std_error: Some(se) })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Same quantity computed from table ratios alone: the resample leaves `x`
/// for `x^{⊕j}` with probability `μ(x^{⊕j}) / (μ(x) + μ(x^{⊕j}))`.
pub fn influence_from_table(table: &ExactTable, f: &[Spin]) -> Result<Vec<f64>> {
    let n = table.n();
    if f.len() != 1usize << n {
        return Err(Error::DimensionMismatch { expected: 1usize << n, got: f.len() });
    }
    let mu = table.probs();
    Ok((0..n)
        .map(|j| {
            exec::sum_range(f.len(), |m| {
                let o = m ^ 1 << j;
                let z = mu[m] + mu[o];
                if f[m] == f[o] || z == 0.0 {
                    0.0
                } else {
                    0.5 * mu[m] * (mu[o] / z) * 4.0
                }
            })
        })
        .collect())
}

/// For monotone `f`: `E[f(X)·(X_j − E[X^j_j | X])]`, which equals the
/// resampling influence exactly.
pub fn monotone_alternative_influence(c: &Concept, model: &IsingModel) -> Result<Vec<f64>> {
    let n = model.n();
    check_dim(c, n)?;
    if n > INFLUENCE_EXACT_LIMIT {
        return Err(Error::TooLarge { what: "exact influence", n, limit: INFLUENCE_EXACT_LIMIT });
    }
    let table = exact_distribution(model)?;
    let f = c.values()?;
    let mu = table.probs();
    Ok((0..n)
        .map(|j| {
            exec::sum_range(f.len(), |m| {
                let xj = if m >> j & 1 == 1 { 1.0 } else { -1.0 };
                let mean = (model.local_field_mask(j, m as u64)).tanh();
                mu[m] * f64::from(f[m]) * (xj - mean)
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneAudit {
    pub max_degree: usize,
    pub bound: f64,
    pub influences: Vec<f64>,
    pub worst_ratio: f64,
}

/// Checks `I_μ[f] ≤ √(2(1+D)n)` for each function; a violation is an error.
pub fn monotone_influence_audit(model: &IsingModel, samples: &[MonotoneDnf]) -> Result<MonotoneAudit> {
    let n = model.n();
    let d = model.diagnostics().max_degree;
    let bound = (2.0 * (1.0 + d as f64) * n as f64).sqrt();
    let mut influences = Vec::with_capacity(samples.len());
    for (k, f) in samples.iter().enumerate() {
        let i = mu_influence(&Concept::MonotoneDnf(f.clone()), model, &InfluenceMode::Exact)?.total;
        if i > bound * (1.0 + 1e-12) {
            return Err(Error::Violation(format!("monotone function {k} has influence {i} > {bound}")));
        }
        influences.push(i);
    }
    let worst_ratio = influences.iter().fold(0.0f64, |a, &i| a.max(i / bound));
    Ok(MonotoneAudit { max_degree: d, bound, influences, worst_ratio })
}

/// Uniform-seed influence of `f ∘ sampler`; each seed bit flips with
/// probability ½ when resampled, so the per-bit influence is
/// `Pr_z[g(z) ≠ g(z ⊕ e_b)]`. Entries of `per_coordinate` sum the bits of
/// one variable's block.
pub fn uniform_influence_of_composition(c: &Concept, sampler: &LocalSampler, mode: &UniformMode) -> Result<Influence> {
    let n = sampler.n();
    check_dim(c, n)?;
    let s = sampler.seed_len();
    match mode {
        UniformMode::Exact => {
            if n > COUPLED_EXACT_LIMIT {
                return Err(Error::TooLarge { what: "coupled influence enumeration", n, limit: COUPLED_EXACT_LIMIT });
            }
            let per = exec::map_range(n, |i| coupled_block_influence(c, sampler, i));
            Ok(Influence::exact(per))
        }
        UniformMode::Tabulate => {
            let bits = n * s as usize;
            if bits > TABULATE_BITS_LIMIT {
                return Err(Error::TooLarge { what: "seed tabulation", n: bits, limit: TABULATE_BITS_LIMIT });
            }
            let g = exec::map_range(1usize << bits, |code| {
                c.eval_mask(sampler.sample_mask(&Seed::from_code(n, s, code as u128)))
            });
            let total = (1usize << bits) as f64;
            let per = (0..n)
                .map(|j| {
                    (0..s as usize)
                        .map(|i| {
                            let b = 1usize << (j * s as usize + i);
                            let diff = exec::sum_range(g.len(), |z| f64::from(u8::from(g[z] != g[z ^ b])));
                            diff / total
                        })
                        .sum()
                })
                .collect();
            Ok(Influence::exact(per))
        }
        UniformMode::MonteCarlo { trials, stream } => {
            if *trials < 2 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least two trials".into()));
            }
            let draws = exec::map_range(*trials as usize, |t| {
                let z = Seed::uniform(n, s, &mut stream.substream(t as u64).rng());
                let g = c.eval_mask(sampler.sample_mask(&z));
                (0..n)
                    .map(|j| {
                        (0..s as usize)
                            .filter(|&i| c.eval_mask(sampler.sample_mask(&z.with_flipped_bit(j * s as usize + i))) != g)
                            .count() as f64
                    })
                    .collect::<Vec<f64>>()
            });
            let t = *trials as f64;
            let mut per = vec![0.0; n];
            for d in &draws {
                for (p, v) in per.iter_mut().zip(d) {
                    *p += v / t;
                }
            }
            let totals: Vec<f64> = draws.iter().map(|d| d.iter().sum()).collect();
            let (mean, se) = mean_and_se(&totals);
            Ok(Influence { total: mean, per_coordinate: per, std_error: Some(se) })
        }
    }
}

/// `#{z ∈ [0, 2^s) : [z < t] ≠ [z ⊕ b < t]}` for a single bit `b`.
pub(crate) fn threshold_flip_count(t: u64, b: u64) -> u64 {
    // Integers in [0, x) with bit b clear.
    let clear = |x: u64| (x / (2 * b)) * b + (x % (2 * b)).min(b);
    2 * (clear(t) - clear(t.saturating_sub(b)))
}

/// Sum over the bits of block `i` of `Pr[g(z) ≠ g(z ⊕ e_b)]`, by enumerating
/// outputs before `i` in plan order and then the coupled pair of runs that
/// differ at `i`.
fn coupled_block_influence(c: &Concept, sampler: &LocalSampler, i: usize) -> f64 {
    let plan = sampler.plan();
    let order = &plan.order;
    let s = plan.seed_len;
    let full = 1u64 << s;
    let pos = order.iter().position(|&v| v == i).expect("variable in order");
    let flip_mass = |t: u64| -> f64 {
        (1..=s).map(|k| threshold_flip_count(t, 1u64 << (s - k)) as f64).sum::<f64>() / full as f64
    };

    fn coupled(
        c: &Concept,
        sampler: &LocalSampler,
        order: &[usize],
        k: usize,
        y: &mut [Spin],
        w: &mut [Spin],
        full: u64,
    ) -> f64 {
        if y == w {
            return 0.0;
        }
        if k == order.len() {
            return f64::from(u8::from(c.eval_mask(mask_from_spins(y)) != c.eval_mask(mask_from_spins(w))));
        }
        let v = order[k];
        let s = sampler.seed_len();
        let t = plus_count(sampler.conditional(v, y), s);
        let u = plus_count(sampler.conditional(v, w), s);
        let cases = [
            (1, 1, t.min(u)),
            (1, -1, t.saturating_sub(u)),
            (-1, 1, u.saturating_sub(t)),
            (-1, -1, full - t.max(u)),
        ];
        let mut acc = 0.0;
        for (a, b, count) in cases {
            if count == 0 {
                continue;
            }
            y[v] = a;
            w[v] = b;
            acc += count as f64 / full as f64 * coupled(c, sampler, order, k + 1, y, w, full);
        }
        y[v] = 0;
        w[v] = 0;
        acc
    }

    fn prefix(
        c: &Concept,
        sampler: &LocalSampler,
        order: &[usize],
        k: usize,
        pos: usize,
        y: &mut Vec<Spin>,
        flip_mass: &dyn Fn(u64) -> f64,
        full: u64,
    ) -> f64 {
        let s = sampler.seed_len();
        let v = order[k];
        let t = plus_count(sampler.conditional(v, y), s);
        if k == pos {
            let f = flip_mass(t);
            if f == 0.0 {
                return 0.0;
            }
            let mut a = y.clone();
            let mut b = y.clone();
            a[v] = 1;
            b[v] = -1;
            return f * coupled(c, sampler, order, k + 1, &mut a, &mut b, full);
        }
        let mut acc = 0.0;
        for (spin, count) in [(1, t), (-1, full - t)] {
            if count == 0 {
                continue;
            }
            y[v] = spin;
            acc += count as f64 / full as f64 * prefix(c, sampler, order, k + 1, pos, y, flip_mass, full);
        }
        y[v] = 0;
        acc
    }

    let mut y = vec![0 as Spin; plan.n];
    prefix(c, sampler, order, 0, pos, &mut y, &flip_mass, full)
}

/// Both sides of `I[f∘Samp] ≤ 2χ·C_PI·I_μ[f] + 4nε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub lhs: f64,
    /// Largest number of seed bits one output depends on.
    pub chi: usize,
    /// Poincaré constant over the conditional laws of each `D_i` given
    /// the rest.
    pub c_pi: f64,
    pub mu_influence: f64,
    /// Measured total variation between the sampler output and μ.
    pub eps: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn influence_transfer_check(c: &Concept, model: &IsingModel, sampler: &LocalSampler) -> Result<TransferReport> {
    let n = model.n();
    let lhs = uniform_influence_of_composition(c, sampler, &UniformMode::Exact)?.total;
    let plan = sampler.plan();
    let chi = plan.max_dependency_bits();
    let dep = plan.dependency_sets();
    // D_u = outputs that read block u.
    let sets: Vec<Vec<usize>> =
        (0..n).map(|u| (0..n).filter(|&v| dep[v].binary_search(&u).is_ok()).collect()).collect();
    let c_pi = poincare_under_pinnings(model, &sets)?;
    let mu_inf = mu_influence(c, model, &InfluenceMode::Exact)?.total;
    let eps = tv_distance(&sampler.output_distribution()?, &exact_distribution(model)?)?;
    let rhs = 2.0 * chi as f64 * c_pi * mu_inf + 4.0 * n as f64 * eps;
    Ok(TransferReport { lhs, chi, c_pi, mu_influence: mu_inf, eps, rhs, holds: lhs <= rhs * (1.0 + 1e-9) + 1e-12 })
}
