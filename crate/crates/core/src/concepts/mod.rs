//! Concept classes on `{±1}^n` and their influences.

mod clique;
mod influence;

pub use clique::CliqueFixture;
pub use influence::{
    influence_from_table, influence_transfer_check, monotone_alternative_influence,
    monotone_influence_audit, mu_influence, uniform_influence_of_composition, Influence,
    InfluenceMode, MonotoneAudit, TransferReport, UniformMode, COUPLED_EXACT_LIMIT, INFLUENCE_EXACT_LIMIT,
    TABULATE_BITS_LIMIT,
};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{check_spins, Spin};

/// One gate; operands refer to earlier gates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Input(usize),
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
}

/// Unbounded fan-in AND/OR/NOT circuit with gates in topological order.
/// True is `+1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
    output: usize,
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<Gate>, output: usize) -> Result<Self> {
        for (k, g) in gates.iter().enumerate() {
            let bad = match g {
                Gate::Input(i) => *i >= n,
                Gate::Not(a) => *a >= k,
                Gate::And(xs) | Gate::Or(xs) => xs.iter().any(|&a| a >= k),
            };
            if bad {
                return Err(Error::InvalidParameter(format!("gate {k} is not topologically ordered")));
            }
        }
        if output >= gates.len() {
            return Err(Error::InvalidParameter("output gate out of range".into()));
        }
        Ok(Self { n, gates, output })
    }

    pub fn dictator(n: usize, i: usize) -> Result<Self> {
        Self::new(n, vec![Gate::Input(i)], 0)
    }

    /// OR of ANDs of positive literals.
    pub fn from_terms(n: usize, terms: &[Vec<usize>]) -> Result<Self> {
        let mut gates: Vec<Gate> = (0..n).map(Gate::Input).collect();
        let mut ands = Vec::new();
        for t in terms {
            gates.push(Gate::And(t.clone()));
            ands.push(gates.len() - 1);
        }
        gates.push(Gate::Or(ands));
        let out = gates.len() - 1;
        Self::new(n, gates, out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of AND/OR gates.
    pub fn size(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::And(_) | Gate::Or(_))).count()
    }

    /// Longest chain of AND/OR gates to the output; negations are free.
    pub fn depth(&self) -> usize {
        let mut d = vec![0usize; self.gates.len()];
        for (k, g) in self.gates.iter().enumerate() {
            d[k] = match g {
                Gate::Input(_) => 0,
                Gate::Not(a) => d[*a],
                Gate::And(xs) | Gate::Or(xs) => 1 + xs.iter().map(|&a| d[a]).max().unwrap_or(0),
            };
        }
        d[self.output]
    }

    fn eval_mask(&self, mask: u64) -> bool {
        let mut v = vec![false; self.output + 1];
        for (k, g) in self.gates[..=self.output].iter().enumerate() {
            v[k] = match g {
                Gate::Input(i) => mask >> i & 1 == 1,
                Gate::Not(a) => !v[*a],
                Gate::And(xs) => xs.iter().all(|&a| v[a]),
                Gate::Or(xs) => xs.iter().any(|&a| v[a]),
            };
        }
        v[self.output]
    }
}

/// `sign(w·x − θ)` with `sign(0) = +1`. Weights are stored normalized and
/// sorted by decreasing magnitude; `perm[k]` is the original index of the
/// `k`-th stored weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    weights: Vec<f64>,
    perm: Vec<usize>,
    theta: f64,
}

impl Halfspace {
    /// Normalizes `(w, θ)` by `‖w‖₂`, which leaves the function unchanged.
    pub fn new(w: &[f64], theta: f64) -> Result<Self> {
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || !theta.is_finite() {
            return Err(Error::InvalidParameter("halfspace needs finite nonzero weights".into()));
        }
        let mut perm: Vec<usize> = (0..w.len()).collect();
        perm.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
        let weights = perm.iter().map(|&i| w[i] / norm).collect();
        Ok(Self { weights, perm, theta: theta / norm })
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn sorted_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Normalized weights in original index order.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.len()];
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = self.weights[k];
        }
        out
    }

    pub fn margin(&self, x: &[Spin]) -> f64 {
        self.weights.iter().zip(&self.perm).map(|(w, &i)| w * f64::from(x[i])).sum::<f64>() - self.theta
    }

    fn eval_mask(&self, mask: u64) -> bool {
        let dot: f64 = self
            .weights
            .iter()
            .zip(&self.perm)
            .map(|(w, &i)| if mask >> i & 1 == 1 { *w } else { -w })
            .sum();
        dot - self.theta >= 0.0
    }
}

/// OR of ANDs of positive literals; monotone by construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneDnf {
    n: usize,
    terms: Vec<Vec<usize>>,
}

impl MonotoneDnf {
    /// Sorts each term and drops duplicate terms.
    pub fn new(n: usize, terms: Vec<Vec<usize>>) -> Result<Self> {
        let mut terms: Vec<Vec<usize>> = terms
            .into_iter()
            .map(|mut t| {
                t.sort_unstable();
                t.dedup();
                t
            })
            .collect();
        if let Some(&i) = terms.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        terms.sort();
        terms.dedup();
        Ok(Self { n, terms })
    }

    /// Term count and term width drawn uniformly from the inclusive ranges.
    pub fn random(
        n: usize,
        terms: (usize, usize),
        width: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if terms.0 > terms.1 || width.0 == 0 || width.0 > width.1 || width.1 > n {
            return Err(Error::InvalidParameter("bad DNF ranges".into()));
        }
        let count = rng.random_range(terms.0..=terms.1);
        let list = (0..count)
            .map(|_| {
                let w = rng.random_range(width.0..=width.1);
                sample(rng, n, w).into_vec()
            })
            .collect();
        Self::new(n, list)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    fn eval_mask(&self, mask: u64) -> bool {
        self.terms.iter().any(|t| t.iter().all(|&i| mask >> i & 1 == 1))
    }
}

/// Explicit truth table; bit `m` (little-endian bytes) is `f(mask m) = +1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthTable {
    n: usize,
    #[serde(with = "hex_bytes")]
    bits: Vec<u8>,
}

pub const TRUTH_TABLE_LIMIT: usize = 20;

impl TruthTable {
    pub fn from_fn(n: usize, f: impl Fn(u64) -> bool) -> Result<Self> {
        if n > TRUTH_TABLE_LIMIT {
            return Err(Error::TooLarge { what: "truth table", n, limit: TRUTH_TABLE_LIMIT });
        }
        let mut bits = vec![0u8; (1usize << n).div_ceil(8)];
        for m in 0..1usize << n {
            if f(m as u64) {
                bits[m / 8] |= 1 << (m % 8);
            }
        }
        Ok(Self { n, bits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn eval_mask(&self, mask: u64) -> bool {
        self.bits[mask as usize / 8] >> (mask % 8) & 1 == 1
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

/// A Boolean concept `{±1}^n → {±1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Concept {
    Circuit(Circuit),
    MonotoneDnf(MonotoneDnf),
    Halfspace(Halfspace),
    TruthTable(TruthTable),
}

impl Concept {
    pub fn n(&self) -> usize {
        match self {
            Concept::Circuit(c) => c.n(),
            Concept::MonotoneDnf(d) => d.n(),
            Concept::Halfspace(h) => h.n(),
            Concept::TruthTable(t) => t.n(),
        }
    }

    pub fn eval(&self, x: &[Spin]) -> Result<Spin> {
        check_spins(x, self.n())?;
        Ok(self.eval_mask(crate::model::mask_from_spins(x)))
    }

    /// Evaluation on the configuration encoded by `mask` (bit `i` set iff
    /// `x_i = +1`).
    pub fn eval_mask(&self, mask: u64) -> Spin {
        let b = match self {
            Concept::Circuit(c) => c.eval_mask(mask),
            Concept::MonotoneDnf(d) => d.eval_mask(mask),
            Concept::Halfspace(h) => h.eval_mask(mask),
            Concept::TruthTable(t) => t.eval_mask(mask),
        };
        if b {
            1
        } else {
            -1
        }
    }

    /// Values on all `2^n` masks.
    pub fn values(&self) -> Result<Vec<Spin>> {
        let n = self.n();
        if n > 24 {
            return Err(Error::TooLarge { what: "concept value table", n, limit: 24 });
        }
        Ok(exec::map_range(1usize << n, |m| self.eval_mask(m as u64)))
    }

    pub fn constant(n: usize, value: bool) -> Self {
        // AND of nothing is true, OR of nothing is false.
        let gate = if value { Gate::And(Vec::new()) } else { Gate::Or(Vec::new()) };
        Concept::Circuit(Circuit::new(n, vec![gate], 0).expect("constant circuit"))
    }

    pub fn majority(n: usize) -> Self {
        Concept::Halfspace(Halfspace::new(&vec![1.0; n], 0.0).expect("nonzero weights"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("concept serializes")
    }
}

/// `(is_regular, H)`: whether `‖w/‖w‖₂‖_∞ ≤ ε`, and the critical index, the
/// smallest 1-based position `i` (after sorting by decreasing `|w|`) whose
/// normalized suffix `w_{≥i}` is ε-regular. An all-zero suffix counts as
/// regular, so `H ≤ n + 1`.
pub fn regularity_and_critical_index(w: &[f64], eps: f64) -> Result<(bool, usize)> {
    if w.iter().all(|&x| x == 0.0) || w.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("weight vector must be finite and nonzero".into()));
    }
    let mut sorted: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    // suffix[i] = Σ_{k ≥ i} w_k² (0-based).
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + sorted[i] * sorted[i];
    }
    let regular_at = |i: usize| suffix[i] == 0.0 || sorted[i] / suffix[i].sqrt() <= eps;
    let h = (0..n).find(|&i| regular_at(i)).map_or(n + 1, |i| i + 1);
    Ok((regular_at(0), h))
}
