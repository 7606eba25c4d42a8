use crate::error::{Error, Result};
use crate::model::{IsingModel, Spin};
use crate::samplers::plan::rooted;
use crate::samplers::{first_bit, threshold, tree_plan, LocalSampler, SampleTrace, Seed};

/// Level-by-level tree sampler: the root thresholds its marginal, every
/// other node thresholds `Pr(X_u = +1 | X_{Pa(u)})`.
pub fn tree_samp(model: &IsingModel, root: usize, seed: &Seed) -> Result<SampleTrace> {
    let plan = tree_plan(model, root, seed.s(), 1.0)?;
    LocalSampler::compile(model, &plan)?.sample(seed)
}

/// `⌈2·ln(n/(2ε'))/η⌉`, at least 1.
pub fn local_tree_radius(n: usize, eps_prime: f64, eta: f64) -> usize {
    let r = (2.0 * (n as f64 / (2.0 * eps_prime)).ln() / eta).ceil();
    if r.is_finite() && r >= 1.0 {
        r as usize
    } else {
        1
    }
}

/// Tree sampler whose outputs look at most `r` ancestors up.
///
/// Nodes at depth `≤ r` are sampled exactly as by [`tree_samp`]. A deeper
/// node `u` looks for the nearest ancestor `w` within distance `r` whose
/// block alone decides its value (`[z_w]_2 < η` when `σ*_w = +1`,
/// `[z_w]_2 ≥ 1 − η` when `σ*_w = −1`), then reruns the chain of
/// thresholds from `w` down to `u`. Without such an ancestor it outputs the
/// leading bit of `z_u`.
#[derive(Clone, Debug)]
pub struct LocalTreeSampler {
    tree: LocalSampler,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    sigma_star: Vec<Spin>,
    eta: f64,
    radius: usize,
}

impl LocalTreeSampler {
    /// Uses the model's exact marginal bound as `η` and the radius from
    /// [`local_tree_radius`].
    pub fn new(model: &IsingModel, root: usize, eps_prime: f64, s: u32) -> Result<Self> {
        if !(eps_prime > 0.0) {
            return Err(Error::InvalidParameter(format!("eps' {eps_prime} must be positive")));
        }
        let eta = model.diagnostics().marginal_bound;
        Self::with_radius(model, root, local_tree_radius(model.n(), eps_prime, eta), eta, s)
    }

    pub fn with_radius(model: &IsingModel, root: usize, radius: usize, eta: f64, s: u32) -> Result<Self> {
        if !(eta > 0.0 && eta <= 0.5) {
            return Err(Error::InvalidParameter(format!("eta {eta} outside (0, 1/2]")));
        }
        if (s as f64) < (4.0 / eta).log2() {
            return Err(Error::InvalidParameter(format!("seed length {s} below log2(4/eta)")));
        }
        if radius == 0 {
            return Err(Error::InvalidParameter("radius must be at least 1".into()));
        }
        let plan = tree_plan(model, root, s, 1.0)?;
        let tree = LocalSampler::compile(model, &plan)?;
        let (parent, depth) = rooted(model.graph(), root);
        let mut sigma_star = Vec::with_capacity(model.n());
        for v in 0..model.n() {
            let worst_plus = tree.conditional_table(v).iter().copied().fold(f64::INFINITY, f64::min);
            let best_plus = tree.conditional_table(v).iter().copied().fold(0.0, f64::max);
            let star = if worst_plus >= eta { 1 } else { -1 };
            if star < 0 && best_plus > 1.0 - eta {
                return Err(Error::InvalidParameter(format!("variable {v} is not {eta}-marginally bounded")));
            }
            sigma_star.push(star);
        }
        Ok(Self { tree, parent, depth, sigma_star, eta, radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma_star(&self) -> &[Spin] {
        &self.sigma_star
    }

    pub fn tree_sampler(&self) -> &LocalSampler {
        &self.tree
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Whether `w`'s block alone fixes its output to `σ*_w`.
    pub fn is_determined(&self, w: usize, seed: &Seed) -> bool {
        let f = seed.fraction(w);
        if self.sigma_star[w] > 0 {
            f < self.eta
        } else {
            f >= 1.0 - self.eta
        }
    }

    /// Every node deeper than `r` has a determined strict ancestor within
    /// distance `r`.
    pub fn is_nice(&self, seed: &Seed) -> bool {
        (0..self.depth.len()).all(|u| self.depth[u] <= self.radius || self.anchor(u, seed).is_some())
    }

    fn anchor(&self, u: usize, seed: &Seed) -> Option<(usize, Vec<usize>)> {
        let mut chain = vec![u];
        let mut w = self.parent[u];
        for _ in 0..self.radius {
            let a = w?;
            if self.is_determined(a, seed) {
                chain.reverse();
                return Some((a, chain));
            }
            chain.push(a);
            w = self.parent[a];
        }
        None
    }

    pub fn sample(&self, seed: &Seed) -> Result<SampleTrace> {
        self.tree.check_seed(seed)?;
        let n = self.depth.len();
        let s = seed.s();
        let mut y = vec![0 as Spin; n];
        let mut conditionals = vec![0.0; n];
        let mut fallback = Vec::new();
        for &u in &self.tree.plan().order {
            if self.depth[u] <= self.radius {
                let p = self.tree.conditional(u, &y);
                conditionals[u] = p;
                y[u] = threshold(seed.block(u), s, p);
                continue;
            }
            match self.anchor(u, seed) {
                Some((w, chain)) => {
                    // chain runs from the child of w down to u.
                    let mut prev = (w, self.sigma_star[w]);
                    let mut value = 0;
                    for &c in &chain {
                        let table = self.tree.conditional_table(c);
                        let p = table[usize::from(prev.1 > 0)];
                        value = threshold(seed.block(c), s, p);
                        if c == u {
                            conditionals[u] = p;
                        }
                        prev = (c, value);
                    }
                    y[u] = value;
                }
                None => {
                    fallback.push(u);
                    conditionals[u] = 0.5;
                    y[u] = first_bit(seed.block(u), s);
                }
            }
        }
        fallback.sort_unstable();
        Ok(SampleTrace { spins: y, conditionals, blocks: seed.blocks().to_vec(), s, fallback })
    }
}
