use serde::{Deserialize, Serialize};

use crate::concepts::{influence_from_table, Concept, Halfspace};
use crate::error::{Error, Result};
use crate::exec;
use crate::inference::ExactTable;

const TABLE_LIMIT: usize = 20;
const PATTERN_LIMIT: usize = 24;

/// Hardcore law with fugacity `λ = 1/(D+1)` on a disjoint union of cliques
/// of size `D+1`, and `f` = strict majority of the clique occupancy
/// indicators. Vertices of clique `k` are `k·(D+1) ..`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliqueFixture {
    num_cliques: usize,
    clique_size: usize,
    concept: Concept,
}

impl CliqueFixture {
    pub fn new(num_cliques: usize, clique_size: usize) -> Result<Self> {
        if num_cliques == 0 || num_cliques % 2 != 0 {
            return Err(Error::InvalidParameter(format!("num_cliques must be even and positive, got {num_cliques}")));
        }
        if clique_size == 0 {
            return Err(Error::InvalidParameter("clique_size must be positive".into()));
        }
        let n = num_cliques * clique_size;
        // On the support Σx = 2·occupied − n, so occupied > m/2 iff
        // Σx − (m − n + 1) ≥ 0 (the left side is odd, never zero).
        let theta = num_cliques as f64 - n as f64 + 1.0;
        let concept = Concept::Halfspace(Halfspace::new(&vec![1.0; n], theta)?);
        Ok(Self { num_cliques, clique_size, concept })
    }

    pub fn n(&self) -> usize {
        self.num_cliques * self.clique_size
    }

    pub fn num_cliques(&self) -> usize {
        self.num_cliques
    }

    /// `D`, the degree inside a clique.
    pub fn degree(&self) -> usize {
        self.clique_size - 1
    }

    pub fn concept(&self) -> &Concept {
        &self.concept
    }

    pub fn fugacity(&self) -> f64 {
        1.0 / self.clique_size as f64
    }

    /// `(Pr(empty), Pr(one given singleton))` for a single clique.
    pub fn clique_law(&self) -> (f64, f64) {
        let lambda = self.fugacity();
        let z = 1.0 + self.clique_size as f64 * lambda;
        (1.0 / z, lambda / z)
    }

    /// Probability of a configuration (bit set = occupied).
    pub fn prob(&self, mask: u64) -> f64 {
        let (empty, single) = self.clique_law();
        let c = self.clique_size;
        let block = (1u64 << c) - 1;
        (0..self.num_cliques)
            .map(|k| match (mask >> (k * c) & block).count_ones() {
                0 => empty,
                1 => single,
                _ => 0.0,
            })
            .product()
    }

    pub fn exact_table(&self) -> Result<ExactTable> {
        let n = self.n();
        if n > TABLE_LIMIT {
            return Err(Error::TooLarge { what: "clique fixture table", n, limit: TABLE_LIMIT });
        }
        ExactTable::new(n, exec::map_range(1usize << n, |m| self.prob(m as u64)))
    }

    /// `n · 2·piv / (D+2)` with `piv = C(m−1, m/2) / 2^{m−1}`.
    pub fn influence_closed_form(&self) -> f64 {
        let m = self.num_cliques as u64;
        let piv = (0..m / 2).fold(1.0, |acc, i| acc * (m - 1 - i) as f64 / (i + 1) as f64) / 2f64.powi(m as i32 - 1);
        self.n() as f64 * 2.0 * piv / (self.degree() as f64 + 2.0)
    }

    /// Per-vertex influences by enumerating the occupancy patterns of the
    /// other cliques and evaluating `f` on representative configurations.
    pub fn influence_by_patterns(&self) -> Result<Vec<f64>> {
        let m = self.num_cliques;
        if m > PATTERN_LIMIT {
            return Err(Error::TooLarge { what: "clique pattern enumeration", n: m, limit: PATTERN_LIMIT });
        }
        let c = self.clique_size;
        let (empty, single) = self.clique_law();
        let lambda = self.fugacity();
        let occupied = 1.0 - empty;
        let mut out = vec![0.0; self.n()];
        for k in 0..m {
            let others: Vec<usize> = (0..m).filter(|&l| l != k).collect();
            for j in 0..c {
                let v = k * c + j;
                let piv = exec::sum_range(1usize << (m - 1), |pat| {
                    let mut mask = 0u64;
                    let mut p = 1.0;
                    for (b, &l) in others.iter().enumerate() {
                        if pat >> b & 1 == 1 {
                            mask |= 1 << (l * c);
                            p *= occupied;
                        } else {
                            p *= empty;
                        }
                    }
                    if self.concept.eval_mask(mask) != self.concept.eval_mask(mask | 1 << v) {
                        p
                    } else {
                        0.0
                    }
                });
                // Resampling v moves the indicator only if no other vertex of
                // its clique is occupied.
                let change = empty * lambda / (1.0 + lambda) + single / (1.0 + lambda);
                out[v] = 2.0 * change * piv;
            }
        }
        Ok(out)
    }

    /// Per-vertex influences from the full product table.
    pub fn influence_by_table(&self) -> Result<Vec<f64>> {
        influence_from_table(&self.exact_table()?, &self.concept.values()?)
    }

    /// `I_μ[f] / √(D·n)`.
    pub fn tightness_ratio(&self) -> Result<f64> {
        let total: f64 = self.influence_by_patterns()?.iter().sum();
        Ok(total / ((self.degree() * self.n()) as f64).sqrt())
    }
}
