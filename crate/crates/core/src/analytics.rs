//! Ising-specific analysis: PSD shifts, Hubbard–Stratonovich fields,
//! anti-concentration of linear forms and subgaussian tails.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::{exact_distribution, ExactTable};
use crate::model::{IsingModel, Spin};
use crate::rng::RngStream;
use crate::samplers::ExactSampler;

/// Negative eigenvalues of magnitude below this are treated as 0.
const PSD_SLACK: f64 = 1e-9;
const MIXTURE_LIMIT: usize = 10;
const DENSE_TABLE_LIMIT: usize = 20;
/// Draws per substream in the Monte Carlo loops.
const MC_CHUNK: usize = 1 << 12;

#[derive(Clone, Debug, PartialEq)]
pub struct PsdShift {
    /// `A − λ_min(A)·I`.
    pub matrix: DMatrix<f64>,
    /// `λ_min(A)` (never positive, since `A` has zero trace).
    pub lambda_min: f64,
}

pub fn psd_shift(model: &IsingModel) -> Result<PsdShift> {
    let a = model.dense_couplings();
    let n = model.n();
    if n == 0 {
        return Ok(PsdShift { matrix: a, lambda_min: 0.0 });
    }
    let eig = SymmetricEigen::try_new(a.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolve failed".into()))?;
    let lambda_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let mut m = a;
    for i in 0..n {
        m[(i, i)] -= lambda_min;
    }
    Ok(PsdShift { matrix: m, lambda_min })
}

/// Law on `{±1}^n` proportional to `exp(½xᵀMx + hᵀx)` including the
/// diagonal of `M`.
pub fn dense_exact_table(m: &DMatrix<f64>, h: &[f64]) -> Result<ExactTable> {
    let n = h.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
    }
    if n > DENSE_TABLE_LIMIT {
        return Err(Error::TooLarge { what: "dense exact table", n, limit: DENSE_TABLE_LIMIT });
    }
    let logw = exec::map_range(1usize << n, |mask| {
        let x: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += m[(i, j)] * x[i] * x[j];
            }
        }
        0.5 * q + h.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
    });
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ExactTable::from_weights(n, logw.into_iter().map(|l| (l - top).exp()).collect())
}

/// Symmetric square root with eigenvalues in `[−PSD_SLACK, 0)` clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolve failed".into()))?;
    let mut d = eig.eigenvalues.clone();
    for v in d.iter_mut() {
        if *v < -PSD_SLACK {
            return Err(Error::Numerical(format!("matrix is not PSD (eigenvalue {v})")));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// A draw `z = A'σ + A'^{1/2}g + h` with `A'` the shifted couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsField {
    pub z: Vec<f64>,
    pub sigma: Vec<Spin>,
    pub g: Vec<f64>,
}

/// Samples Hubbard–Stratonovich fields for one model.
#[derive(Clone, Debug)]
pub struct HsSampler {
    shifted: DMatrix<f64>,
    root: DMatrix<f64>,
    fields: DVector<f64>,
    sigma: ExactSampler,
}

impl HsSampler {
    pub fn new(model: &IsingModel) -> Result<Self> {
        let shifted = psd_shift(model)?.matrix;
        let root = psd_sqrt(&shifted)?;
        Ok(Self {
            shifted,
            root,
            fields: DVector::from_column_slice(model.fields()),
            sigma: ExactSampler::new(model)?,
        })
    }

    pub fn shifted(&self) -> &DMatrix<f64> {
        &self.shifted
    }

    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<HsField> {
        let sigma = self.sigma.sample(rng)?;
        let n = sigma.len();
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let z = self.field(&sigma, &g);
        Ok(HsField { z, sigma, g })
    }

    /// `A'σ + A'^{1/2}g + h`.
    pub fn field(&self, sigma: &[Spin], g: &[f64]) -> Vec<f64> {
        let s = DVector::from_iterator(sigma.len(), sigma.iter().map(|&v| f64::from(v)));
        let g = DVector::from_column_slice(g);
        (&self.shifted * s + &self.root * g + &self.fields).iter().copied().collect()
    }
}

/// One draw of `σ ~ μ`, `g ~ N(0, I)` and the resulting field.
pub fn hs_field_sample(model: &IsingModel, rng: &mut impl Rng) -> Result<HsField> {
    HsSampler::new(model)?.sample(rng)
}

/// Total variation between the empirical law of `x ~ μ_{0,z}` over
/// `samples` field draws and the exact law of the model.
pub fn hs_mixture_audit(model: &IsingModel, samples: usize, stream: &RngStream) -> Result<f64> {
    let n = model.n();
    if n > MIXTURE_LIMIT {
        return Err(Error::TooLarge { what: "mixture audit", n, limit: MIXTURE_LIMIT });
    }
    let hs = HsSampler::new(model)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let counts = exec::map_range(chunks, |c| -> Result<Vec<u64>> {
        let mut rng = stream.substream(c as u64).rng();
        let mut hist = vec![0u64; 1usize << n];
        let hi = ((c + 1) * MC_CHUNK).min(samples);
        for _ in c * MC_CHUNK..hi {
            let f = hs.sample(&mut rng)?;
            let mut mask = 0usize;
            for (i, z) in f.z.iter().enumerate() {
                // Pr(x_i = +1) = e^z / (e^z + e^{−z}).
                if rng.random::<f64>() < crate::model::sigmoid(2.0 * z) {
                    mask |= 1 << i;
                }
            }
            hist[mask] += 1;
        }
        Ok(hist)
    });
    let mut hist = vec![0u64; 1usize << n];
    for c in counts {
        for (h, v) in hist.iter_mut().zip(c?) {
            *h += v;
        }
    }
    let exact = exact_distribution(model)?;
    let t = samples as f64;
    Ok(0.5 * hist.iter().zip(exact.probs()).map(|(&c, p)| (c as f64 / t - p).abs()).sum::<f64>())
}

/// Largest mass of a closed interval of length `width` under the atoms
/// `(value, weight)`; `atoms` must be sorted by value.
pub fn band_sup(atoms: &[(f64, f64)], width: f64) -> f64 {
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut hi = 0;
    for lo in 0..atoms.len() {
        if lo > 0 && atoms[lo].0 == atoms[lo - 1].0 {
            continue;
        }
        while hi < atoms.len() && atoms[hi].0 <= atoms[lo].0 + width + 1e-12 {
            mass += atoms[hi].1;
            hi += 1;
        }
        best = best.max(mass);
        // Drop every atom at the current left end.
        let mut k = lo;
        while k < atoms.len() && atoms[k].0 == atoms[lo].0 {
            mass -= atoms[k].1;
            k += 1;
        }
    }
    best
}

/// Atoms of `w·σ` under the exact law of the model.
pub fn exact_linear_atoms(model: &IsingModel, w: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = model.n();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    let table = exact_distribution(model)?;
    let mut atoms: Vec<(f64, f64)> = (0..1usize << n)
        .map(|m| (linear(w, m as u64), table.probs()[m]))
        .filter(|a| a.1 > 0.0)
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(atoms)
}

fn linear(w: &[f64], mask: u64) -> f64 {
    w.iter().enumerate().map(|(i, wi)| if mask >> i & 1 == 1 { *wi } else { -wi }).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnticoncentrationProfile {
    pub widths: Vec<f64>,
    pub bands: Vec<f64>,
    /// Smallest `C` with `band ≤ C·(width + ε)` at every width.
    pub fitted_c: f64,
    pub eps: f64,
    /// Whether `w` was ε-regular; the profile is computed either way.
    pub regular: bool,
    pub samples: usize,
}

impl AnticoncentrationProfile {
    /// Least-squares line `band ≈ a + b·width` and the largest relative
    /// deviation of a band from it.
    pub fn linear_fit(&self) -> (f64, f64, f64) {
        let k = self.widths.len() as f64;
        let mx = self.widths.iter().sum::<f64>() / k;
        let my = self.bands.iter().sum::<f64>() / k;
        let sxx: f64 = self.widths.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = self.widths.iter().zip(&self.bands).map(|(x, y)| (x - mx) * (y - my)).sum();
        let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let a = my - b * mx;
        let dev = self
            .widths
            .iter()
            .zip(&self.bands)
            .map(|(x, y)| ((a + b * x) - y).abs() / y.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        (a, b, dev)
    }
}

/// Band probabilities `sup_c Pr(w·σ ∈ [c − L/2, c + L/2])` from `samples`
/// exact draws of `σ`, maximized exactly over centers.
pub fn anticoncentration_profile(
    model: &IsingModel,
    w: &[f64],
    widths: &[f64],
    eps: f64,
    samples: usize,
    stream: &RngStream,
) -> Result<AnticoncentrationProfile> {
    let n = model.n();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    if samples == 0 || widths.is_empty() {
        return Err(Error::InvalidParameter("need samples and widths".into()));
    }
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let regular = norm > 0.0 && w.iter().all(|x| x.abs() / norm <= eps + 1e-12);
    let sampler = ExactSampler::new(model)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let values = exec::map_range(chunks, |c| -> Result<Vec<f64>> {
        let mut rng = stream.substream(c as u64).rng();
        let hi = ((c + 1) * MC_CHUNK).min(samples);
        (c * MC_CHUNK..hi)
            .map(|_| {
                let x = sampler.sample(&mut rng)?;
                Ok(w.iter().zip(&x).map(|(a, &b)| a * f64::from(b)).sum())
            })
            .collect()
    });
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(samples);
    for v in values {
        atoms.extend(v?.into_iter().map(|x| (x, 1.0 / samples as f64)));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bands: Vec<f64> = widths.iter().map(|&l| band_sup(&atoms, l)).collect();
    let fitted_c = widths.iter().zip(&bands).map(|(l, b)| b / (l + eps)).fold(0.0, f64::max);
    Ok(AnticoncentrationProfile { widths: widths.to_vec(), bands, fitted_c, eps, regular, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgaussianReport {
    /// Fitted `C_SG` per direction.
    pub constants: Vec<f64>,
    pub worst: f64,
    pub worst_direction: usize,
}

/// Number of tail thresholds scanned per direction.
const TAIL_GRID: usize = 64;

/// Smallest `C` with `T(t) ≤ 2·exp(−t²/(2C²))` on the grid, where `T(t)` is
/// the tail of `|v|` strictly above `t`.
pub fn fit_subgaussian(values: &[f64]) -> f64 {
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let top = abs.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0.0;
    }
    let n = abs.len() as f64;
    let mut c = 0.0f64;
    for k in 1..=TAIL_GRID {
        let t = top * k as f64 / TAIL_GRID as f64;
        let above = abs.len() - abs.partition_point(|&v| v <= t);
        if above == 0 {
            continue;
        }
        let tail = above as f64 / n;
        c = c.max(t / (2.0 * (2.0 / tail).ln()).sqrt());
    }
    c
}

/// Fits `C_SG` for `zᵀ(σ − Eσ)` along each direction from exact draws.
/// The mean is exact when the model is enumerable and empirical otherwise.
pub fn subgaussian_tail_audit(
    model: &IsingModel,
    directions: &[Vec<f64>],
    samples: usize,
    stream: &RngStream,
) -> Result<SubgaussianReport> {
    let n = model.n();
    if directions.is_empty() || samples < 2 {
        return Err(Error::InvalidParameter("need directions and at least two samples".into()));
    }
    if let Some(d) = directions.iter().find(|d| d.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: d.len() });
    }
    let sampler = ExactSampler::new(model)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let draws = exec::map_range(chunks, |c| -> Result<Vec<Vec<Spin>>> {
        let mut rng = stream.substream(c as u64).rng();
        let hi = ((c + 1) * MC_CHUNK).min(samples);
        (c * MC_CHUNK..hi).map(|_| sampler.sample(&mut rng)).collect()
    });
    let mut xs = Vec::with_capacity(samples);
    for d in draws {
        xs.extend(d?);
    }
    let mean = if n <= DENSE_TABLE_LIMIT {
        exact_distribution(model)?.means()
    } else {
        (0..n).map(|i| xs.iter().map(|x| f64::from(x[i])).sum::<f64>() / samples as f64).collect()
    };
    let constants: Vec<f64> = exec::map_slice(directions, |z| {
        let proj: Vec<f64> =
            xs.iter().map(|x| z.iter().zip(x).zip(&mean).map(|((a, &b), m)| a * (f64::from(b) - m)).sum()).collect();
        fit_subgaussian(&proj)
    });
    let (worst_direction, worst) =
        constants.iter().copied().enumerate().fold((0, 0.0), |acc, (i, c)| if c > acc.1 { (i, c) } else { acc });
    Ok(SubgaussianReport { constants, worst, worst_direction })
}

/// `width ≤ 1 − ζ`.
pub fn dobrushin_check(model: &IsingModel, zeta: f64) -> Result<bool> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidParameter(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    Ok(model.diagnostics().width <= 1.0 - zeta + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::tv_distance;

    #[test]
    fn shift_examples() {
        let s = psd_shift(&IsingModel::uniform(3)).unwrap();
        assert_eq!(s.lambda_min, 0.0);
        assert!(s.matrix.iter().all(|&v| v == 0.0));
        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0, 0.0]).unwrap();
        let s = psd_shift(&m).unwrap();
        assert!((s.lambda_min + 0.5).abs() < 1e-12);
        assert!((s.matrix[(0, 0)] - 0.5).abs() < 1e-12);
        let mut ev: Vec<f64> = s.matrix.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_keeps_distribution() {
        let m = IsingModel::grid(3, 3, 0.2, 0.1);
        let s = psd_shift(&m).unwrap();
        let min_ev = s.matrix.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min_ev >= -1e-9);
        let a = dense_exact_table(&s.matrix, m.fields()).unwrap();
        let b = exact_distribution(&m).unwrap();
        assert!(tv_distance(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn zero_couplings_give_constant_field() {
        let m = IsingModel::new(3, vec![], vec![0.3, -0.1, 0.0]).unwrap();
        let f = hs_field_sample(&m, &mut RngStream::new(1, "t", "hs").rng()).unwrap();
        assert_eq!(f.z, vec![0.3, -0.1, 0.0]);
    }

    #[test]
    fn field_reconstructs() {
        let m = IsingModel::path(4, 0.3, 0.1);
        let hs = HsSampler::new(&m).unwrap();
        let f = hs.sample(&mut RngStream::new(2, "t", "hs").rng()).unwrap();
        assert_eq!(hs.field(&f.sigma, &f.g), f.z);
    }

    #[test]
    fn band_examples() {
        let m = IsingModel::uniform(4);
        let atoms = exact_linear_atoms(&m, &[0.5; 4]).unwrap();
        assert!((band_sup(&atoms, 0.5) - 0.375).abs() < 1e-12);
        assert!((band_sup(&atoms, 0.0) - 0.375).abs() < 1e-12);
        assert!((band_sup(&atoms, 1.0) - 10.0 / 16.0).abs() < 1e-12);
        assert!((band_sup(&atoms, 100.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_coordinate_tail() {
        let c = fit_subgaussian(&[1.0, -1.0, 1.0, -1.0]);
        let t = 63.0 / 64.0;
        assert!((c - t / (2.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert_eq!(fit_subgaussian(&[0.0; 5]), 0.0);
    }

    #[test]
    fn dobrushin_examples() {
        assert!(dobrushin_check(&IsingModel::uniform(3), 0.99).unwrap());
        let g = IsingModel::grid(3, 3, 0.2, 0.0);
        assert!(dobrushin_check(&g, 0.2).unwrap());
        assert!(!dobrushin_check(&g, 0.25).unwrap());
        let f = IsingModel::new(1, vec![], vec![2.0]).unwrap();
        assert!(!dobrushin_check(&f, 0.01).unwrap());
        assert!(dobrushin_check(&f, 1.5).is_err());
    }
}
