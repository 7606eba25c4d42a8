//! Model generators.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use spinlearn_core::concepts::CliqueFixture;
use spinlearn_core::{IsingModel, ModelFile, ModelKind};

use crate::config::ModelSpec;
use crate::error::{HarnessError, Result};

/// Output of a generator: an Ising model file, or the closed-form
/// hardcore-on-cliques law, which is not an Ising model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratedModel {
    Ising(ModelFile),
    CliqueHardcore { num_cliques: usize, clique_size: usize, fugacity: f64, p_empty: f64, p_singleton: f64 },
}

impl GeneratedModel {
    pub fn into_ising(self) -> Result<IsingModel> {
        match self {
            GeneratedModel::Ising(f) => Ok(IsingModel::from_file(&f)?),
            GeneratedModel::CliqueHardcore { .. } => {
                Err(HarnessError::Config("clique_hardcore is a product law, not an Ising model".into()))
            }
        }
    }

    /// An Ising model is written as a plain model file, loadable through
    /// the `file` generator; the clique law keeps its tag.
    pub fn to_json(&self) -> String {
        match self {
            GeneratedModel::Ising(f) => f.to_json(),
            other => serde_json::to_string_pretty(other).expect("model serializes"),
        }
    }
}

fn check_finite(beta: f64, h: f64) -> Result<()> {
    if beta.is_finite() && h.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("non-finite beta {beta} or h {h}")))
    }
}

fn positive(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(HarnessError::Config(format!("{what} must be positive")));
    }
    Ok(())
}

fn file(n: usize, couplings: Vec<(usize, usize, f64)>, h: f64, kind: ModelKind) -> ModelFile {
    ModelFile { n, couplings, fields: vec![h; n], kind }
}

/// Uniform labeled tree from a random Prüfer sequence.
pub fn random_tree_edges(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &v in &seq {
        degree[v] += 1;
    }
    let mut leaves: std::collections::BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in &seq {
        let leaf = leaves.pop_first().expect("a leaf exists");
        edges.push((leaf.min(v), leaf.max(v)));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let a = leaves.pop_first().expect("two leaves remain");
    let b = leaves.pop_first().expect("two leaves remain");
    edges.push((a, b));
    edges.sort_unstable();
    edges
}

/// Scans all pairs in random order, keeping an edge while both endpoints
/// have degree below `max_degree`.
pub fn random_bounded_degree_edges(n: usize, max_degree: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(rng);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for (i, j) in pairs {
        if degree[i] < max_degree && degree[j] < max_degree {
            degree[i] += 1;
            degree[j] += 1;
            edges.push((i, j));
        }
    }
    edges.sort_unstable();
    edges
}

pub fn generate_model(spec: &ModelSpec, rng: &mut impl Rng) -> Result<GeneratedModel> {
    let out = match spec {
        ModelSpec::Grid2d { rows, cols, beta, h } => {
            positive(*rows, "rows")?;
            positive(*cols, "cols")?;
            check_finite(*beta, *h)?;
            IsingModel::grid(*rows, *cols, *beta, *h).to_file()
        }
        ModelSpec::Path { n, beta, h } => {
            positive(*n, "n")?;
            check_finite(*beta, *h)?;
            IsingModel::path(*n, *beta, *h).to_file()
        }
        ModelSpec::RandomTree { n, beta, h } => {
            positive(*n, "n")?;
            check_finite(*beta, *h)?;
            let edges = random_tree_edges(*n, rng);
            file(*n, edges.into_iter().map(|(i, j)| (i, j, *beta)).collect(), *h, ModelKind::Tree)
        }
        ModelSpec::RandomBoundedDegree { n, max_degree, beta, h } => {
            positive(*n, "n")?;
            check_finite(*beta, *h)?;
            let edges = random_bounded_degree_edges(*n, *max_degree, rng);
            file(*n, edges.into_iter().map(|(i, j)| (i, j, *beta)).collect(), *h, ModelKind::Ising)
        }
        ModelSpec::Product { fields } => {
            ModelFile { n: fields.len(), couplings: Vec::new(), fields: fields.clone(), kind: ModelKind::Ising }
        }
        ModelSpec::Explicit { n, couplings, fields } => {
            ModelFile { n: *n, couplings: couplings.clone(), fields: fields.clone(), kind: ModelKind::Ising }
        }
        ModelSpec::CliqueHardcore { num_cliques, clique_size } => {
            let f = CliqueFixture::new(*num_cliques, *clique_size)?;
            let (p_empty, p_singleton) = f.clique_law();
            return Ok(GeneratedModel::CliqueHardcore {
                num_cliques: *num_cliques,
                clique_size: *clique_size,
                fugacity: f.fugacity(),
                p_empty,
                p_singleton,
            });
        }
        ModelSpec::File { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
            ModelFile::from_json(&text)?
        }
    };
    // Rejects malformed explicit or file models early.
    IsingModel::from_file(&out)?;
    Ok(GeneratedModel::Ising(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinlearn_core::RngStream;

    fn rng(seed: u64) -> impl rand::Rng {
        RngStream::new(seed, "harness", "generate").rng()
    }

    #[test]
    fn grid_and_path() {
        let g = generate_model(&ModelSpec::Grid2d { rows: 3, cols: 3, beta: 0.2, h: 0.0 }, &mut rng(1))
            .unwrap()
            .into_ising()
            .unwrap();
        assert_eq!(g.couplings().len(), 12);
        assert!((g.diagnostics().width - 0.8).abs() < 1e-12);
        let p = generate_model(&ModelSpec::Path { n: 5, beta: 0.3, h: 0.0 }, &mut rng(1)).unwrap().into_ising().unwrap();
        assert_eq!(p.couplings().len(), 4);
        assert_eq!(p.diagnostics().max_degree, 2);
    }

    #[test]
    fn random_tree_is_a_tree() {
        let t = generate_model(&ModelSpec::RandomTree { n: 50, beta: 0.3, h: 0.0 }, &mut rng(7))
            .unwrap()
            .into_ising()
            .unwrap();
        assert_eq!(t.couplings().len(), 49);
        assert!(t.is_forest());
        assert_eq!(t.graph().ball(0, 50).unwrap().len(), 50);
    }

    #[test]
    fn pruefer_is_uniform_on_four_nodes() {
        // Cayley: 16 labeled trees on 4 nodes.
        let mut r = rng(3);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..32_000 {
            *counts.entry(random_tree_edges(4, &mut r)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 16);
        assert!(counts.values().all(|&c| (1700..2300).contains(&c)));
    }

    #[test]
    fn bounded_degree_respects_cap() {
        let m = generate_model(&ModelSpec::RandomBoundedDegree { n: 10, max_degree: 3, beta: 0.2, h: 0.0 }, &mut rng(2))
            .unwrap()
            .into_ising()
            .unwrap();
        assert!(m.diagnostics().max_degree <= 3);
    }

    #[test]
    fn clique_descriptor() {
        let g = generate_model(&ModelSpec::CliqueHardcore { num_cliques: 2, clique_size: 2 }, &mut rng(1)).unwrap();
        assert!(matches!(g, GeneratedModel::CliqueHardcore { p_empty, p_singleton, .. } if p_empty == 0.5 && p_singleton == 0.25));
        assert!(g.into_ising().is_err());
        assert!(generate_model(&ModelSpec::CliqueHardcore { num_cliques: 3, clique_size: 2 }, &mut rng(1)).is_err());
    }
}
