//! Low-degree polynomial regression over monomial features.

mod budget;
mod fit;

pub use budget::{degree_budget, BudgetParams, DegreeTheorem};
pub use fit::{
    best_weighted_error, fit_l1, fit_l1_weighted, fit_l2, fit_l2_weighted, kkt_audit, learn_and_test, KktReport,
    L1Fit, Labeler, LearnReport, SampleSource, WeightedOptimum,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_spins, mask_from_spins, Spin};

/// Largest basis the enumerator will build.
pub const MAX_MONOMIALS: usize = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
}

/// All subsets `S ⊆ [n]` with `|S| ≤ k`, ordered by size and then
/// lexicographically; subset `S` is the bitmask with bit `i` set for `i ∈ S`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    k: usize,
    subsets: Vec<u64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl MonomialBasis {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n > 64 {
            return Err(Error::TooLarge { what: "monomial basis", n, limit: 64 });
        }
        let k = k.min(n);
        let count: f64 = (0..=k).map(|j| binomial(n, j)).sum();
        if count > MAX_MONOMIALS as f64 {
            return Err(Error::TooLarge { what: "monomial count", n: count as usize, limit: MAX_MONOMIALS });
        }
        let mut subsets = Vec::with_capacity(count as usize);
        for j in 0..=k {
            let mut idx: Vec<usize> = (0..j).collect();
            loop {
                subsets.push(idx.iter().fold(0u64, |m, &i| m | 1 << i));
                // Next combination in lexicographic order.
                let Some(p) = (0..j).rev().find(|&p| idx[p] < n - j + p) else { break };
                idx[p] += 1;
                for q in p + 1..j {
                    idx[q] = idx[q - 1] + 1;
                }
            }
        }
        Ok(Self { n, k, subsets })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[u64] {
        &self.subsets
    }

    pub fn subset_indices(&self, idx: usize) -> Vec<usize> {
        let s = self.subsets[idx];
        (0..self.n).filter(|i| s >> i & 1 == 1).collect()
    }

    /// `χ_S(x) = Π_{i ∈ S} x_i` for the configuration `mask`.
    #[inline]
    pub fn chi(subset: u64, mask: u64) -> f64 {
        if (subset & !mask).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub(crate) fn expand_mask_into(&self, mask: u64, out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(&self.subsets) {
            *o = Self::chi(s, mask);
        }
    }

    fn from_subsets(n: usize, k: usize, subsets: Vec<u64>) -> Self {
        Self { n, k, subsets }
    }
}

pub fn expand_features(x: &[Spin], basis: &MonomialBasis) -> Result<Vec<f64>> {
    check_spins(x, basis.n)?;
    let mut out = vec![0.0; basis.len()];
    basis.expand_mask_into(mask_from_spins(x), &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<Spin>,
    pub y: Spin,
}

/// `x ↦ sign(Σ_S c_S χ_S(x) − t)` with `sign(0) = +1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialHypothesis {
    basis: MonomialBasis,
    coefficients: Vec<f64>,
    threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct HypothesisFile {
    n: usize,
    degree: usize,
    subsets: Vec<Vec<usize>>,
    coefficients: Vec<f64>,
    threshold: f64,
}

impl PolynomialHypothesis {
    pub fn new(basis: MonomialBasis, coefficients: Vec<f64>, threshold: f64) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coefficients.len() });
        }
        Ok(Self { basis, coefficients, threshold })
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn value_mask(&self, mask: u64) -> f64 {
        self.basis.subsets.iter().zip(&self.coefficients).map(|(&s, c)| c * MonomialBasis::chi(s, mask)).sum()
    }

    pub fn value(&self, x: &[Spin]) -> Result<f64> {
        check_spins(x, self.basis.n)?;
        Ok(self.value_mask(mask_from_spins(x)))
    }

    pub fn predict_mask(&self, mask: u64) -> Spin {
        if self.value_mask(mask) - self.threshold >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn predict(&self, x: &[Spin]) -> Result<Spin> {
        check_spins(x, self.basis.n)?;
        Ok(self.predict_mask(mask_from_spins(x)))
    }

    /// Misclassification rate on labeled masks.
    pub fn error_rate(&self, points: &[(u64, Spin)]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let wrong = crate::exec::sum_range(points.len(), |i| {
            f64::from(u8::from(self.predict_mask(points[i].0) != points[i].1))
        });
        wrong / points.len() as f64
    }

    pub fn to_json(&self) -> String {
        let file = HypothesisFile {
            n: self.basis.n,
            degree: self.basis.k,
            subsets: (0..self.basis.len()).map(|i| self.basis.subset_indices(i)).collect(),
            coefficients: self.coefficients.clone(),
            threshold: self.threshold,
        };
        serde_json::to_string_pretty(&file).expect("hypothesis serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: HypothesisFile = serde_json::from_str(text)?;
        let mut subsets = Vec::with_capacity(file.subsets.len());
        for s in &file.subsets {
            let mut m = 0u64;
            for &i in s {
                if i >= file.n || file.n > 64 {
                    return Err(Error::IndexOutOfRange { index: i, n: file.n });
                }
                m |= 1 << i;
            }
            subsets.push(m);
        }
        Self::new(MonomialBasis::from_subsets(file.n, file.degree, subsets), file.coefficients, file.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_and_features() {
        let b = MonomialBasis::new(2, 2).unwrap();
        assert_eq!(b.subsets(), &[0b00, 0b01, 0b10, 0b11]);
        assert_eq!(expand_features(&[1, -1], &b).unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(expand_features(&[1, -1], &MonomialBasis::new(2, 0).unwrap()).unwrap(), vec![1.0]);
        assert!(expand_features(&[1], &b).is_err());
        let b = MonomialBasis::new(5, 5).unwrap();
        assert!(expand_features(&[1; 5], &b).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn basis_counts_and_uniqueness() {
        for n in 0..9 {
            for k in 0..=n {
                let b = MonomialBasis::new(n, k).unwrap();
                let want: f64 = (0..=k).map(|j| binomial(n, j)).sum();
                assert_eq!(b.len(), want as usize);
                let mut s = b.subsets().to_vec();
                s.sort_unstable();
                s.dedup();
                assert_eq!(s.len(), b.len());
                // Degree then lex.
                for w in b.subsets().windows(2) {
                    let (a, c) = (w[0].count_ones(), w[1].count_ones());
                    assert!(a < c || (a == c && w[0].reverse_bits() > w[1].reverse_bits()));
                }
            }
        }
        assert!(MonomialBasis::new(64, 10).is_err());
    }

    #[test]
    fn hypothesis_json_roundtrip() {
        let b = MonomialBasis::new(3, 2).unwrap();
        let h = PolynomialHypothesis::new(b, (0..7).map(|i| i as f64 * 0.25 - 0.5).collect(), 0.1).unwrap();
        let back = PolynomialHypothesis::from_json(&h.to_json()).unwrap();
        assert_eq!(back, h);
    }
}
