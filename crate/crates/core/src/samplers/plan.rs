use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DependencyGraph, IsingModel};
use crate::samplers::MAX_SEED_LEN;

/// Staged sampler layout: parts `S_1..S_K` processed in order, each
/// variable conditioning on `T_i ⊆ S_{<k} ∩ B_r(i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerPlan {
    pub n: usize,
    pub radius: usize,
    pub partition: Vec<Vec<usize>>,
    /// Concatenation of the parts: the processing order.
    pub order: Vec<usize>,
    /// Sorted conditioning set of every variable.
    pub cond_sets: Vec<Vec<usize>>,
    pub seed_len: u32,
    pub eps: f64,
}

/// `⌈ln(4·c_ssm·n/(η·ε))/δ⌉`, at least 1.
pub fn ssm_radius(c_ssm: f64, delta: f64, n: usize, eta: f64, eps: f64) -> usize {
    let r = ((4.0 * c_ssm * n as f64 / (eta * eps)).ln() / delta).ceil();
    if r.is_finite() && r >= 1.0 {
        r as usize
    } else {
        1
    }
}

/// `⌈log₂(8n/(η·ε))⌉`, so one block's discretization error is at most
/// `η·ε/(8n)`.
pub fn default_seed_len(n: usize, eta: f64, eps: f64) -> u32 {
    let s = (8.0 * n.max(1) as f64 / (eta * eps)).log2().ceil();
    (s.max(1.0) as u32).min(MAX_SEED_LEN)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 2]")));
    }
    Ok(())
}

/// Plan for the staged SSM sampler with radius and seed length from the
/// recipe above, using the model's exact marginal bound as `η`.
pub fn build_ssm_plan(
    model: &IsingModel,
    c_ssm: f64,
    delta: f64,
    eps: f64,
    seed_len_override: Option<u32>,
) -> Result<SamplerPlan> {
    check_eps(eps)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    if !(c_ssm > 0.0 && c_ssm.is_finite()) {
        return Err(Error::InvalidParameter(format!("c_ssm {c_ssm} must be positive")));
    }
    if model.n() == 0 {
        return Err(Error::InvalidModel("no variables".into()));
    }
    let eta = model.diagnostics().marginal_bound;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter("marginal bound is zero".into()));
    }
    let r = ssm_radius(c_ssm, delta, model.n(), eta, eps);
    let s = seed_len_override.unwrap_or_else(|| default_seed_len(model.n(), eta, eps));
    build_plan_with_radius(model, r, s, eps)
}

/// Plan at an explicit radius (greedy distance-`r` partition).
pub fn build_plan_with_radius(model: &IsingModel, r: usize, s: u32, eps: f64) -> Result<SamplerPlan> {
    check_eps(eps)?;
    if r == 0 {
        return Err(Error::InvalidParameter("radius must be at least 1".into()));
    }
    if s == 0 || s > MAX_SEED_LEN {
        return Err(Error::InvalidParameter(format!("seed length {s} outside 1..={MAX_SEED_LEN}")));
    }
    let g = model.graph();
    let n = model.n();
    // Radii beyond n behave like n and keep the BFS cheap.
    let reach = r.min(n);
    let partition = g.greedy_r_partition(reach);
    let mut part_of = vec![0; n];
    for (k, part) in partition.iter().enumerate() {
        for &v in part {
            part_of[v] = k;
        }
    }
    let cond_sets = (0..n)
        .map(|i| {
            g.ball_unchecked(i, reach)
                .into_iter()
                .filter(|&j| part_of[j] < part_of[i])
                .collect()
        })
        .collect();
    let order = partition.concat();
    let plan = SamplerPlan { n, radius: r, partition, order, cond_sets, seed_len: s, eps };
    plan.validate(g)?;
    Ok(plan)
}

/// Breadth-first levels from `root` as parts, each node conditioning on
/// its parent only.
pub fn tree_plan(model: &IsingModel, root: usize, s: u32, eps: f64) -> Result<SamplerPlan> {
    let g = model.graph();
    if !g.is_tree() {
        return Err(Error::NotATree);
    }
    if root >= model.n() {
        return Err(Error::IndexOutOfRange { index: root, n: model.n() });
    }
    let (parent, depth) = rooted(g, root);
    let levels = depth.iter().copied().max().unwrap_or(0) + 1;
    let mut partition = vec![Vec::new(); levels];
    for v in 0..model.n() {
        partition[depth[v]].push(v);
    }
    let cond_sets = parent.iter().map(|p| p.map(|p| vec![p]).unwrap_or_default()).collect();
    let order = partition.concat();
    let plan = SamplerPlan { n: model.n(), radius: 1, partition, order, cond_sets, seed_len: s, eps };
    if !(eps > 0.0) || s == 0 || s > MAX_SEED_LEN {
        return Err(Error::InvalidParameter("bad tree plan parameters".into()));
    }
    plan.validate(g)?;
    Ok(plan)
}

/// Parent pointers and depths of a tree rooted at `root`.
pub(crate) fn rooted(g: &DependencyGraph, root: usize) -> (Vec<Option<usize>>, Vec<usize>) {
    let dist = g.distances_from(root);
    let depth: Vec<usize> = dist.iter().map(|d| d.expect("connected")).collect();
    let parent = (0..g.n())
        .map(|v| {
            (v != root).then(|| {
                *g.neighbors(v).iter().find(|&&u| depth[u] + 1 == depth[v]).expect("tree parent")
            })
        })
        .collect();
    (parent, depth)
}

impl SamplerPlan {
    pub fn num_parts(&self) -> usize {
        self.partition.len()
    }

    pub fn part_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, part) in self.partition.iter().enumerate() {
            for &v in part {
                out[v] = k;
            }
        }
        out
    }

    /// Checks the layout invariants against `graph`.
    pub fn validate(&self, graph: &DependencyGraph) -> Result<()> {
        let n = self.n;
        let mut seen = vec![false; n];
        for &v in self.partition.iter().flatten() {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::Violation(format!("partition repeats or exceeds variable {v}")));
            }
        }
        if seen.iter().any(|s| !s) || self.cond_sets.len() != n {
            return Err(Error::Violation("partition does not cover all variables".into()));
        }
        if self.order != self.partition.concat() {
            return Err(Error::Violation("order is not the concatenated partition".into()));
        }
        let part_of = self.part_of();
        let reach = self.radius.min(n);
        for (i, t) in self.cond_sets.iter().enumerate() {
            let ball = graph.ball_unchecked(i, reach);
            for &j in t {
                if part_of[j] >= part_of[i] || ball.binary_search(&j).is_err() {
                    return Err(Error::Violation(format!("T_{i} contains {j}")));
                }
            }
            if t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Violation(format!("T_{i} is not sorted")));
            }
        }
        Ok(())
    }

    /// Variables whose seed blocks an output can read:
    /// `dep(v) = {v} ∪ ⋃_{u ∈ T_v} dep(u)`.
    pub fn dependency_sets(&self) -> Vec<Vec<usize>> {
        let mut dep: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &v in &self.order {
            let mut d = vec![v];
            for &u in &self.cond_sets[v] {
                d.extend_from_slice(&dep[u]);
            }
            d.sort_unstable();
            d.dedup();
            dep[v] = d;
        }
        dep
    }

    /// Largest number of seed bits one output depends on.
    pub fn max_dependency_bits(&self) -> usize {
        self.dependency_sets().iter().map(Vec::len).max().unwrap_or(0) * self.seed_len as usize
    }

    pub fn max_cond_set(&self) -> usize {
        self.cond_sets.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_formula() {
        assert_eq!(ssm_radius(1.0, 0.3, 16, 0.2, 0.5), 22);
        assert_eq!(((640f64).ln() / 0.3).ceil(), 22.0);
        assert_eq!(ssm_radius(1e-9, 0.5, 1, 0.5, 2.0), 1);
    }

    #[test]
    fn edgeless_is_one_part() {
        let m = IsingModel::uniform(5);
        let plan = build_plan_with_radius(&m, 3, 4, 0.5).unwrap();
        assert_eq!(plan.num_parts(), 1);
        assert!(plan.cond_sets.iter().all(Vec::is_empty));
    }

    #[test]
    fn grid_radius_one() {
        let m = IsingModel::grid(3, 3, 0.2, 0.0);
        let plan = build_plan_with_radius(&m, 1, 6, 0.5).unwrap();
        assert_eq!(plan.num_parts(), 2);
        for i in 0..9 {
            let nb = m.graph().neighbors(i);
            assert!(plan.cond_sets[i].iter().all(|j| nb.contains(j)));
            assert!(plan.cond_sets[i].len() <= 4);
        }
    }

    #[test]
    fn ssm_plan_on_small_grid_is_sequential() {
        let m = IsingModel::grid(3, 3, 0.2, 0.0);
        let plan = build_ssm_plan(&m, 1.0, 0.5, 0.1, None).unwrap();
        assert!(plan.radius >= 4);
        assert_eq!(plan.num_parts(), 9);
        let eta = m.diagnostics().marginal_bound;
        assert_eq!(plan.seed_len, default_seed_len(9, eta, 0.1));
    }

    #[test]
    fn tree_plan_levels() {
        let m = IsingModel::new(4, vec![(0, 1, 0.3), (1, 2, 0.3), (1, 3, 0.3)], vec![0.0; 4]).unwrap();
        let plan = tree_plan(&m, 0, 4, 0.1).unwrap();
        assert_eq!(plan.partition, vec![vec![0], vec![1], vec![2, 3]]);
        assert_eq!(plan.cond_sets, vec![vec![], vec![0], vec![1], vec![1]]);
        assert!(tree_plan(&IsingModel::grid(2, 2, 0.1, 0.0), 0, 4, 0.1).is_err());
    }
}
