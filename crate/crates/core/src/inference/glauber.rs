//! Glauber dynamics: spectral gap, Poincaré constants and coordinate
//! influences against exact tables.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{exact_distribution, ExactTable};
use crate::model::{sigmoid, IsingModel, PartialConfiguration};
use crate::rng::RngStream;

pub const GAP_LIMIT: usize = 14;
const DENSE_LIMIT: usize = 10;
const BLOCK: usize = 8;
const MAX_ITER: usize = 200_000;
const TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub gap: f64,
    pub poincare: f64,
    pub iterations: usize,
}

/// `pplus[i][x] = Pr(X_i = +1 | x_{-i})`.
fn blanket_tables(model: &IsingModel) -> Vec<Vec<f64>> {
    let n = model.n();
    (0..n)
        .map(|i| exec::map_range(1usize << n, |m| sigmoid(2.0 * model.local_field_mask(i, m as u64))))
        .collect()
}

fn apply(pplus: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    let n = pplus.len();
    exec::map_range(f.len(), |m| {
        let mut acc = 0.0;
        for (i, p) in pplus.iter().enumerate() {
            let hi = m | 1 << i;
            let lo = m & !(1 << i);
            acc += p[m] * f[hi] + (1.0 - p[m]) * f[lo];
        }
        acc / n as f64
    })
}

/// Dense Glauber transition matrix `P = (1/n) Σ_i P_i`, row = current state.
pub fn glauber_matrix(model: &IsingModel) -> Result<DMatrix<f64>> {
    let n = model.n();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { what: "dense Glauber matrix", n, limit: DENSE_LIMIT });
    }
    let pplus = blanket_tables(model);
    let len = 1usize << n;
    let mut p = DMatrix::zeros(len, len);
    for m in 0..len {
        for (i, pp) in pplus.iter().enumerate() {
            p[(m, m | 1 << i)] += pp[m] / n as f64;
            p[(m, m & !(1 << i))] += (1.0 - pp[m]) / n as f64;
        }
    }
    Ok(p)
}

/// Spectral gap of Glauber dynamics on mean-zero functions in `L²(μ)` and
/// the Poincaré constant `1/(n·gap)`.
///
/// Block power iteration with Rayleigh–Ritz; `P` is a mean of projections,
/// so its spectrum lies in `[0, 1]` and the top Ritz value after removing
/// constants is `1 − gap`.
pub fn glauber_gap(model: &IsingModel) -> Result<SpectralGap> {
    let n = model.n();
    if n > GAP_LIMIT {
        return Err(Error::TooLarge { what: "Glauber spectral gap", n, limit: GAP_LIMIT });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty model".into()));
    }
    let table = exact_distribution(model)?;
    let mu = table.probs();
    let pplus = blanket_tables(model);
    let len = 1usize << n;
    let b = BLOCK.min(len - 1);
    let mut rng = RngStream::new(0, "inference", "glauber-init").rng();
    let mut basis: Vec<Vec<f64>> =
        (0..b).map(|_| (0..len).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    orthonormalize(&mut basis, mu, &mut rng);

    let mut prev = f64::NAN;
    for it in 1..=MAX_ITER {
        let images: Vec<Vec<f64>> = basis.iter().map(|v| apply(&pplus, v)).collect();
        let h = DMatrix::from_fn(b, b, |a, c| {
            0.5 * (inner(&basis[a], &images[c], mu) + inner(&basis[c], &images[a], mu))
        });
        let eig = SymmetricEigen::new(h);
        let (top, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let coef = eig.eigenvectors.column(top);
        let residual: Vec<f64> = (0..len)
            .map(|m| (0..b).map(|a| coef[a] * (images[a][m] - theta * basis[a][m])).sum())
            .collect();
        let res = inner(&residual, &residual, mu).sqrt();
        if (theta - prev).abs() < TOL && res < 1e-9 {
            let gap = 1.0 - theta.clamp(0.0, 1.0);
            return Ok(SpectralGap { gap, poincare: 1.0 / (n as f64 * gap), iterations: it });
        }
        prev = theta;
        basis = images;
        orthonormalize(&mut basis, mu, &mut rng);
    }
    Err(Error::NoConvergence { what: "Glauber gap", iterations: MAX_ITER })
}

fn inner(f: &[f64], g: &[f64], mu: &[f64]) -> f64 {
    exec::sum_range(f.len(), |m| mu[m] * f[m] * g[m])
}

const COLLAPSE: f64 = 1e-12;

/// Removes the μ-mean and runs two-pass Gram–Schmidt in `L²(μ)`; vectors
/// that collapse are replaced by fresh random ones.
fn orthonormalize(vs: &mut [Vec<f64>], mu: &[f64], rng: &mut impl Rng) {
    for k in 0..vs.len() {
        for attempt in 0..4 {
            for _ in 0..2 {
                let mean = inner(&vs[k], &vec![1.0; mu.len()], mu);
                vs[k].iter_mut().for_each(|x| *x -= mean);
                for j in 0..k {
                    let c = inner(&vs[k], &vs[j], mu);
                    let (head, tail) = vs.split_at_mut(k);
                    tail[0].iter_mut().zip(&head[j]).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = inner(&vs[k], &vs[k], mu).sqrt();
            // Block vectors have unit norm, so images this small are
            // rounding noise, not a direction.
            if norm > COLLAPSE {
                vs[k].iter_mut().for_each(|x| *x /= norm);
                break;
            }
            // Degenerate: the image vanished on this direction.
            assert!(attempt < 3, "cannot complete an orthonormal block");
            vs[k] = (0..mu.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        }
    }
}

/// `I_j = ½ E_μ[(f(X) − f(X^j))²]` with `X^j` resampled at `j` from the
/// exact conditional, for a real function given by its values on masks.
pub fn coordinate_influences(model: &IsingModel, table: &ExactTable, f: &[f64]) -> Result<Vec<f64>> {
    let n = model.n();
    if table.n() != n || f.len() != 1usize << n {
        return Err(Error::DimensionMismatch { expected: 1usize << n, got: f.len() });
    }
    let mu = table.probs();
    Ok((0..n)
        .map(|j| {
            exec::sum_range(f.len(), |m| {
                let other = m ^ 1 << j;
                let d = f[m] - f[other];
                if d == 0.0 {
                    return 0.0;
                }
                let s = if m >> j & 1 == 1 { 1.0 } else { -1.0 };
                // Probability that the resampled value differs from x_j.
                let q = sigmoid(-2.0 * s * model.local_field_mask(j, m as u64));
                0.5 * mu[m] * q * d * d
            })
        })
        .collect())
}

/// Largest Poincaré constant over the conditional laws of each set in
/// `sets` given every pinning of its complement, together with the
/// unpinned model.
pub fn poincare_under_pinnings(model: &IsingModel, sets: &[Vec<usize>]) -> Result<f64> {
    let n = model.n();
    let mut worst = glauber_gap(model)?.poincare;
    let mut seen = std::collections::BTreeSet::new();
    for set in sets {
        let mut set = set.clone();
        set.sort_unstable();
        set.dedup();
        if set.is_empty() || set.len() == n || !seen.insert(set.clone()) {
            continue;
        }
        let rest: Vec<usize> = (0..n).filter(|v| set.binary_search(v).is_err()).collect();
        if rest.len() > 20 {
            return Err(Error::TooLarge { what: "pinning enumeration", n: rest.len(), limit: 20 });
        }
        let values = exec::map_range(1usize << rest.len(), |m| -> Result<f64> {
            let pin = PartialConfiguration::from_pairs(
                n,
                rest.iter().enumerate().map(|(k, &v)| (v, if m >> k & 1 == 1 { 1 } else { -1 })),
            )?;
            let (cond, _) = model.conditional_model(&pin)?;
            Ok(glauber_gap(&cond)?.poincare)
        });
        for v in values {
            worst = worst.max(v?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_gap(model: &IsingModel) -> f64 {
        let p = glauber_matrix(model).unwrap();
        let mu = exact_distribution(model).unwrap();
        let len = p.nrows();
        let s = DMatrix::from_fn(len, len, |a, b| {
            (mu.probs()[a] / mu.probs()[b]).sqrt() * p[(a, b)]
        });
        let sym = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        1.0 - ev[1]
    }

    #[test]
    fn gap_examples() {
        let g = glauber_gap(&IsingModel::new(1, vec![], vec![0.7]).unwrap()).unwrap();
        assert!((g.gap - 1.0).abs() < 1e-9 && (g.poincare - 1.0).abs() < 1e-9);

        // P annihilates mean-zero functions of one spin.
        for h in [0.0, 0.3, -0.3, 0.9] {
            let g = glauber_gap(&IsingModel::new(1, vec![], vec![h]).unwrap()).unwrap();
            assert!((g.poincare - 1.0).abs() < 1e-9, "h = {h}: {g:?}");
        }

        let g = glauber_gap(&IsingModel::uniform(3)).unwrap();
        assert!((g.gap - 1.0 / 3.0).abs() < 1e-9);
        assert!((g.poincare - 1.0).abs() < 1e-8);

        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0; 2]).unwrap();
        let g = glauber_gap(&m).unwrap();
        assert!(g.poincare >= 1.0 && g.poincare.is_finite());
        assert!((g.gap - dense_gap(&m)).abs() < 1e-9);
        assert!((g.poincare - 1.0 / (2.0 * g.gap)).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolve() {
        let models = [
            IsingModel::grid(2, 3, 0.3, 0.1),
            IsingModel::path(5, -0.6, 0.2),
            IsingModel::new(4, vec![(0, 1, 0.9), (1, 2, 0.4), (0, 3, -0.5), (2, 3, 0.2)], vec![0.3, 0.0, -0.2, 0.1])
                .unwrap(),
        ];
        for m in &models {
            let g = glauber_gap(m).unwrap();
            assert!((g.gap - dense_gap(m)).abs() < 1e-8, "{} vs {}", g.gap, dense_gap(m));
        }
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let p = glauber_matrix(&IsingModel::grid(2, 2, 0.4, -0.2)).unwrap();
        for r in 0..p.nrows() {
            assert!((p.row(r).sum() - 1.0).abs() < 1e-14);
        }
    }
}
