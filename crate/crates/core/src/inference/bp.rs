//! Sum-product on forest-structured models.

use crate::error::{Error, Result};
use crate::model::IsingModel;

/// Exact `Pr(X_v = +1)` on a forest by passing messages towards `v`.
pub fn forest_marginal(model: &IsingModel, v: usize) -> Result<f64> {
    let n = model.n();
    if v >= n {
        return Err(Error::IndexOutOfRange { index: v, n });
    }
    if !model.is_forest() {
        return Err(Error::NotATree);
    }
    // Post-order over the component of v, rooted at v.
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut stack = vec![v];
    parent[v] = v;
    while let Some(u) = stack.pop() {
        order.push(u);
        for &(w, _) in model.weighted_neighbors(u) {
            if parent[w] == usize::MAX {
                parent[w] = u;
                stack.push(w);
            }
        }
    }
    // belief[u] = unnormalized (minus, plus) weight of the subtree below u,
    // kept in log form.
    let mut belief = vec![[0.0f64; 2]; n];
    for &u in &order {
        let h = model.fields()[u];
        belief[u] = [-h, h];
    }
    for &u in order.iter().rev() {
        if u == v {
            break;
        }
        let p = parent[u];
        let a = model.coupling(u, p);
        let [bm, bp] = belief[u];
        // message(s_p) = log Σ_{s_u} exp(a·s_u·s_p + belief_u(s_u))
        let msg = |sp: f64| log_add(bm - a * sp, bp + a * sp);
        belief[p][0] += msg(-1.0);
        belief[p][1] += msg(1.0);
    }
    let [bm, bp] = belief[v];
    Ok(1.0 / (1.0 + (bm - bp).exp()))
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::brute_force_marginal;

    #[test]
    fn matches_enumeration_on_trees() {
        let tree = IsingModel::new(
            6,
            vec![(0, 1, 0.7), (1, 2, -0.4), (1, 3, 0.3), (3, 4, 1.1), (0, 5, -0.9)],
            vec![0.2, -0.1, 0.0, 0.5, -0.3, 0.05],
        )
        .unwrap();
        for v in 0..6 {
            let a = forest_marginal(&tree, v).unwrap();
            let b = brute_force_marginal(&tree, v).unwrap();
            assert!((a - b).abs() < 1e-13, "{v}: {a} vs {b}");
        }
        assert!(forest_marginal(&IsingModel::grid(2, 2, 0.1, 0.0), 0).is_err());
    }
}
