use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{conditional_prob, exact_distribution, ExactTable};
use crate::model::{sigmoid, IsingModel, PartialConfiguration, Spin};
use crate::rng::RngStream;

const PREFIX_LIMIT: usize = 22;

/// Sequential sampler drawing `x_1`, then `x_2 | x_1`, and so on, from exact
/// conditionals.
///
/// Up to 22 variables the chain-rule conditionals come from prefix
/// marginals of the exact table; beyond that each step calls
/// `conditional_prob` with the prefix pinned.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    model: IsingModel,
    /// `prefix[i][m]` = `Pr(X_0..X_{i-1} = m)`.
    prefix: Option<Vec<Vec<f64>>>,
}

impl ExactSampler {
    pub fn new(model: &IsingModel) -> Result<Self> {
        let prefix = if model.n() <= PREFIX_LIMIT {
            Some(prefix_marginals(&exact_distribution(model)?))
        } else {
            None
        };
        Ok(Self { model: model.clone(), prefix })
    }

    pub fn from_table(model: &IsingModel, table: &ExactTable) -> Result<Self> {
        if table.n() != model.n() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: table.n() });
        }
        Ok(Self { model: model.clone(), prefix: Some(prefix_marginals(table)) })
    }

    pub fn model(&self) -> &IsingModel {
        &self.model
    }

    /// `Pr(X_i = +1 | x_0..x_{i-1})`.
    pub fn step_prob(&self, i: usize, x: &[Spin]) -> Result<f64> {
        match &self.prefix {
            Some(prefix) => {
                let m = (0..i).fold(0usize, |acc, j| if x[j] > 0 { acc | 1 << j } else { acc });
                let denom = prefix[i][m];
                Ok(if denom > 0.0 { prefix[i + 1][m | 1 << i] / denom } else { 0.5 })
            }
            None => {
                let pin = PartialConfiguration::restrict(x, &(0..i).collect::<Vec<_>>());
                conditional_prob(&self.model, i, &pin)
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<Spin>> {
        let n = self.model.n();
        let mut x = vec![-1 as Spin; n];
        for i in 0..n {
            let p = self.step_prob(i, &x)?;
            x[i] = if rng.random::<f64>() < p { 1 } else { -1 };
        }
        Ok(x)
    }

    /// Draw `index` of the stream: reproducible independently of other draws.
    pub fn sample_indexed(&self, stream: &RngStream, index: u64) -> Result<Vec<Spin>> {
        self.sample(&mut stream.substream(index).rng())
    }
}

fn prefix_marginals(table: &ExactTable) -> Vec<Vec<f64>> {
    let n = table.n();
    let mut out = vec![Vec::new(); n + 1];
    out[n] = table.probs().to_vec();
    for i in (0..n).rev() {
        let next = &out[i + 1];
        out[i] = (0..1usize << i).map(|m| next[m] + next[m | 1 << i]).collect();
    }
    out
}

/// One draw of the exact sequential sampler.
pub fn exact_iterative_sample(model: &IsingModel, stream: &RngStream) -> Result<Vec<Spin>> {
    ExactSampler::new(model)?.sample(&mut stream.rng())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GlauberStart {
    #[default]
    AllMinus,
    Random,
}

/// Glauber dynamics: each step picks a uniform site and resamples it from
/// its blanket conditional.
pub fn glauber_chain(model: &IsingModel, steps: usize, stream: &RngStream, start: GlauberStart) -> Vec<Spin> {
    let n = model.n();
    let mut rng = stream.rng();
    let mut x: Vec<Spin> = match start {
        GlauberStart::AllMinus => vec![-1; n],
        GlauberStart::Random => (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
    };
    if n == 0 {
        return x;
    }
    for _ in 0..steps {
        let i = rng.random_range(0..n);
        let p = sigmoid(2.0 * model.local_field(i, &x));
        x[i] = if rng.random::<f64>() < p { 1 } else { -1 };
    }
    x
}
