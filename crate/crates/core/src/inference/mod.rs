//! Exact and estimated probabilistic oracles.

mod bp;
mod glauber;
mod ssm;

pub use bp::forest_marginal;
pub use glauber::{
    coordinate_influences, glauber_gap, glauber_matrix, poincare_under_pinnings, SpectralGap,
};
pub use ssm::{estimate_ssm, SsmProfile, SSM_PINNING_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{sigmoid, IsingModel, PartialConfiguration};

/// Default guard for dense `2^n` tables.
pub const EXACT_LIMIT: usize = 24;
/// Guard on the number of variables marginalized by brute force.
pub const BRUTE_FORCE_LIMIT: usize = 22;

/// Dense law on `{±1}^n`, indexed by configuration mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactTable {
    n: usize,
    probs: Vec<f64>,
}

impl ExactTable {
    /// Wraps a probability vector; it must have `2^n` nonnegative entries
    /// summing to one.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n >= 64 || probs.len() != 1usize << n {
            return Err(Error::DimensionMismatch { expected: 1usize << n.min(40), got: probs.len() });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        Ok(Self { n, probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(n: usize, mut weights: Vec<f64>) -> Result<Self> {
        let total = exec::sum_range(weights.len(), |i| weights[i]);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(format!("total weight {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(n, weights)
    }

    pub fn uniform(n: usize) -> Self {
        let len = 1usize << n;
        Self { n, probs: vec![1.0 / len as f64; len] }
    }

    pub fn point_mass(n: usize, mask: u64) -> Self {
        let mut probs = vec![0.0; 1usize << n];
        probs[mask as usize] = 1.0;
        Self { n, probs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, mask: u64) -> f64 {
        self.probs[mask as usize]
    }

    /// `Pr(X_i = +1)`.
    pub fn marginal_plus(&self, i: usize) -> f64 {
        exec::sum_range(self.probs.len(), |m| if m >> i & 1 == 1 { self.probs[m] } else { 0.0 })
    }

    /// `E[X_i]` for every coordinate.
    pub fn means(&self) -> Vec<f64> {
        (0..self.n).map(|i| 2.0 * self.marginal_plus(i) - 1.0).collect()
    }

    pub fn expectation(&self, f: impl Fn(u64) -> f64 + Sync + Send) -> f64 {
        exec::sum_range(self.probs.len(), |m| self.probs[m] * f(m as u64))
    }

    /// `Pr(X_v = +1 | pinning)` by summing table entries.
    pub fn conditional_plus(&self, v: usize, pinning: &PartialConfiguration) -> Result<f64> {
        pinning.check(self.n)?;
        if v >= self.n {
            return Err(Error::IndexOutOfRange { index: v, n: self.n });
        }
        if pinning.contains(v) {
            return Err(Error::PinnedQuery(v));
        }
        let (mut care, mut want) = (0u64, 0u64);
        for (i, s) in pinning.iter() {
            care |= 1 << i;
            if s > 0 {
                want |= 1 << i;
            }
        }
        let (mut plus, mut total) = (0.0, 0.0);
        for (m, &p) in self.probs.iter().enumerate() {
            if m as u64 & care == want {
                total += p;
                if m >> v & 1 == 1 {
                    plus += p;
                }
            }
        }
        if total <= 0.0 {
            return Err(Error::InvalidParameter("pinning has zero probability".into()));
        }
        Ok(plus / total)
    }
}

pub fn exact_distribution(model: &IsingModel) -> Result<ExactTable> {
    exact_distribution_with_limit(model, EXACT_LIMIT)
}

pub fn exact_distribution_with_limit(model: &IsingModel, limit: usize) -> Result<ExactTable> {
    let n = model.n();
    if n > limit.min(40) {
        return Err(Error::TooLarge { what: "exact distribution", n, limit });
    }
    let logw = exec::map_range(1usize << n, |m| model.log_weight_mask(m as u64));
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.into_iter().map(|l| (l - max).exp()).collect();
    ExactTable::from_weights(n, w)
}

/// `½ Σ |p − q|`.
pub fn tv_distance(p: &ExactTable, q: &ExactTable) -> Result<f64> {
    if p.n != q.n {
        return Err(Error::DimensionMismatch { expected: p.n, got: q.n });
    }
    Ok(0.5 * exec::sum_range(p.probs.len(), |m| (p.probs[m] - q.probs[m]).abs()))
}

/// Which route `conditional_prob` took.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionalMethod {
    Blanket,
    TreeBp,
    BruteForce,
}

/// Exact `Pr(X_v = +1 | pinning)`: blanket closed form when every neighbor of
/// `v` is pinned, belief propagation on forests, otherwise brute force over
/// the free component of `v`.
pub fn conditional_prob(model: &IsingModel, v: usize, pinning: &PartialConfiguration) -> Result<f64> {
    let method = if blanket_pinned(model, v, pinning) {
        ConditionalMethod::Blanket
    } else if model.is_forest() {
        ConditionalMethod::TreeBp
    } else {
        ConditionalMethod::BruteForce
    };
    conditional_prob_with(model, v, pinning, method)
}

fn blanket_pinned(model: &IsingModel, v: usize, pinning: &PartialConfiguration) -> bool {
    v < model.n() && model.graph().neighbors(v).iter().all(|&j| pinning.contains(j))
}

/// `conditional_prob` with a forced route, for cross-checking the three.
pub fn conditional_prob_with(
    model: &IsingModel,
    v: usize,
    pinning: &PartialConfiguration,
    method: ConditionalMethod,
) -> Result<f64> {
    let n = model.n();
    if v >= n {
        return Err(Error::IndexOutOfRange { index: v, n });
    }
    pinning.check(n)?;
    if pinning.contains(v) {
        return Err(Error::PinnedQuery(v));
    }
    match method {
        ConditionalMethod::Blanket => {
            if !blanket_pinned(model, v, pinning) {
                return Err(Error::InvalidParameter(format!("neighbors of {v} are not all pinned")));
            }
            let field = model.fields()[v]
                + model
                    .weighted_neighbors(v)
                    .iter()
                    .map(|&(j, w)| w * f64::from(pinning.get(j).unwrap()))
                    .sum::<f64>();
            Ok(sigmoid(2.0 * field))
        }
        ConditionalMethod::TreeBp => {
            if !model.is_forest() {
                return Err(Error::NotATree);
            }
            let (cond, free) = model.conditional_model(pinning)?;
            let local = free.binary_search(&v).expect("v is free");
            forest_marginal(&cond, local)
        }
        ConditionalMethod::BruteForce => {
            let (cond, free) = model.conditional_model(pinning)?;
            let local = free.binary_search(&v).expect("v is free");
            let comp = cond.graph().ball_unchecked(local, cond.n());
            if comp.len() > BRUTE_FORCE_LIMIT {
                return Err(Error::TooLarge {
                    what: "brute-force conditional",
                    n: comp.len(),
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
            let sub = cond.induced(&comp)?;
            let at = comp.binary_search(&local).unwrap();
            brute_force_marginal(&sub, at)
        }
    }
}

/// `Pr(X_v = +1)` by summing over all `2^n` configurations.
pub(crate) fn brute_force_marginal(model: &IsingModel, v: usize) -> Result<f64> {
    let n = model.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { what: "brute-force marginal", n, limit: BRUTE_FORCE_LIMIT });
    }
    let len = 1usize << n;
    let logw = exec::map_range(len, |m| model.log_weight_mask(m as u64));
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut plus, mut total) = (0.0, 0.0);
    for (m, l) in logw.iter().enumerate() {
        let w = (l - max).exp();
        total += w;
        if m >> v & 1 == 1 {
            plus += w;
        }
    }
    Ok(plus / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn exact_distribution_examples() {
        let t = exact_distribution(&IsingModel::uniform(3)).unwrap();
        assert!(t.probs().iter().all(|&p| (p - 0.125).abs() < 1e-15));

        let m = IsingModel::new(1, vec![], vec![0.5]).unwrap();
        let t = exact_distribution(&m).unwrap();
        let e = 0.5f64.exp();
        close(t.prob(1), e / (e + 1.0 / e), 1e-15);
        close(t.prob(1), 0.7311, 1e-4);

        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0, 0.0]).unwrap();
        let t = exact_distribution(&m).unwrap();
        let pp = e / (2.0 * e + 2.0 / e);
        close(t.prob(0b11), pp, 1e-15);
        close(t.prob(0b00), pp, 1e-15);
        close(t.prob(0b11), 0.3655, 1e-4);

        let big = IsingModel::uniform(30);
        assert!(matches!(exact_distribution(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn tv_examples() {
        let u = ExactTable::uniform(1);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
        let a = ExactTable::point_mass(1, 0);
        let b = ExactTable::point_mass(1, 1);
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
        let q = ExactTable::new(1, vec![0.25, 0.75]).unwrap();
        close(tv_distance(&u, &q).unwrap(), 0.25, 1e-15);
        assert!(tv_distance(&u, &ExactTable::uniform(2)).is_err());
    }

    #[test]
    fn conditional_examples() {
        let m = IsingModel::uniform(3);
        let p = PartialConfiguration::from_pairs(3, [(1, 1)]).unwrap();
        close(conditional_prob(&m, 0, &p).unwrap(), 0.5, 1e-15);

        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0; 2]).unwrap();
        let p = PartialConfiguration::from_pairs(2, [(1, 1)]).unwrap();
        let blanket = conditional_prob(&m, 0, &p).unwrap();
        close(blanket, 1.0 / (1.0 + (-1.0f64).exp()), 1e-15);
        let table = exact_distribution(&m).unwrap();
        close(table.prob(0b11) / (table.prob(0b11) + table.prob(0b10)), blanket, 1e-14);
        assert!(matches!(conditional_prob(&m, 1, &p), Err(Error::PinnedQuery(1))));

        let path = IsingModel::path(3, 0.5, 0.0);
        let p = PartialConfiguration::from_pairs(3, [(2, 1)]).unwrap();
        let bp = conditional_prob_with(&path, 0, &p, ConditionalMethod::TreeBp).unwrap();
        let brute = conditional_prob_with(&path, 0, &p, ConditionalMethod::BruteForce).unwrap();
        close(bp, brute, 1e-12);
        let t = exact_distribution(&path).unwrap();
        close(t.conditional_plus(0, &p).unwrap(), bp, 1e-12);
    }

    #[test]
    fn brute_force_guard() {
        let m = IsingModel::grid(5, 5, 0.1, 0.0);
        let err = conditional_prob(&m, 0, &PartialConfiguration::new()).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
        // Pinning a separating set shrinks the free component below the guard.
        let cut = PartialConfiguration::from_pairs(25, (0..5).map(|c| (10 + c, 1))).unwrap();
        assert!(conditional_prob(&m, 0, &cut).is_ok());
    }
}
