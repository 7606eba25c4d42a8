//! Empirical strong-spatial-mixing profiles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::inference::conditional_prob;
use crate::model::{IsingModel, PartialConfiguration};
use crate::rng::RngStream;

/// Maximum number of boundary pinnings scanned per radius.
pub const SSM_PINNING_CAP: usize = 1 << 16;

/// Per-radius worst observed discrepancy of the law of `X_v`.
///
/// For radius `r` the boundary is the sphere at distance `r + 1` from `v`;
/// the discrepancy is the largest `|Pr(X_v=+1|σ) − Pr(X_v=+1|τ)|` over
/// boundary pinnings. This is a lower-bound witness for the true SSM
/// profile, which quantifies over every boundary set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmProfile {
    pub vertex: usize,
    pub radii: Vec<usize>,
    pub discrepancies: Vec<f64>,
    pub pinnings_scanned: Vec<usize>,
    /// `(C_SSM, δ)` from regressing `ln disc` on distance `r + 1`.
    pub fit: Option<(f64, f64)>,
    /// Radii (index into `radii`) where the discrepancy increased.
    pub monotonicity_violations: Vec<usize>,
}

pub fn estimate_ssm(model: &IsingModel, v: usize, radii: &[usize]) -> Result<SsmProfile> {
    let n = model.n();
    if v >= n {
        return Err(Error::IndexOutOfRange { index: v, n });
    }
    let mut discrepancies = Vec::with_capacity(radii.len());
    let mut scanned = Vec::with_capacity(radii.len());
    for &r in radii {
        let boundary = model.graph().sphere(v, r + 1);
        if boundary.is_empty() {
            discrepancies.push(0.0);
            scanned.push(0);
            continue;
        }
        let masks = boundary_masks(boundary.len(), v, r);
        let probs = exec::map_slice(&masks, |&m| -> Result<f64> {
            let pin = PartialConfiguration::from_pairs(
                n,
                boundary.iter().enumerate().map(|(k, &u)| (u, if m >> k & 1 == 1 { 1 } else { -1 })),
            )?;
            conditional_prob(model, v, &pin)
        });
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in probs {
            let p = p?;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        discrepancies.push((hi - lo).clamp(0.0, 1.0));
        scanned.push(masks.len());
    }
    let monotonicity_violations = (1..discrepancies.len())
        .filter(|&k| radii[k] > radii[k - 1] && discrepancies[k] > discrepancies[k - 1] + 1e-12)
        .collect();
    let fit = fit_profile(radii, &discrepancies);
    Ok(SsmProfile {
        vertex: v,
        radii: radii.to_vec(),
        discrepancies,
        pinnings_scanned: scanned,
        fit,
        monotonicity_violations,
    })
}

/// All boundary pinnings when there are at most `SSM_PINNING_CAP`, else the
/// two constant pinnings plus a fixed pseudo-random subsample.
fn boundary_masks(size: usize, v: usize, r: usize) -> Vec<u64> {
    if size < 64 && (1usize << size) <= SSM_PINNING_CAP {
        return (0..1u64 << size).collect();
    }
    let full = if size >= 64 { u64::MAX } else { (1u64 << size) - 1 };
    let mut rng = RngStream::new(0, "inference", "ssm-subsample")
        .substream(v as u64)
        .substream(r as u64)
        .rng();
    let mut out = vec![0, full];
    while out.len() < SSM_PINNING_CAP {
        out.push(rng.random::<u64>() & full);
    }
    out
}

fn fit_profile(radii: &[usize], disc: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(disc)
        .filter(|(_, &d)| d > 1e-300)
        .map(|(&r, &d)| ((r + 1) as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let delta = 1.0 - slope.exp();
    if !(delta > 0.0 && delta <= 1.0) {
        return None;
    }
    Some(((my - slope * mx).exp(), delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_measure_has_no_discrepancy() {
        let m = IsingModel::new(5, vec![], vec![0.3; 5]).unwrap();
        let p = estimate_ssm(&m, 2, &[0, 1, 2]).unwrap();
        assert!(p.discrepancies.iter().all(|&d| d == 0.0));
        assert!(p.fit.is_none());
    }

    #[test]
    fn single_edge_closed_form() {
        let m = IsingModel::new(2, vec![(0, 1, 0.5)], vec![0.0; 2]).unwrap();
        let p = estimate_ssm(&m, 0, &[0]).unwrap();
        let s = |t: f64| 1.0 / (1.0 + (-t).exp());
        assert!((p.discrepancies[0] - (s(1.0) - s(-1.0))).abs() < 1e-14);
        assert!((p.discrepancies[0] - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn path_profile_decreases() {
        let m = IsingModel::path(11, 0.3, 0.0);
        let p = estimate_ssm(&m, 5, &[0, 1, 2, 3]).unwrap();
        assert!(p.discrepancies.windows(2).all(|w| w[1] < w[0]), "{:?}", p.discrepancies);
        assert!(p.monotonicity_violations.is_empty());
        // A spin at distance d acts on v like a field atanh(tanh(a)^d); the two
        // boundary spins add up, so disc = tanh(2·atanh(tanh(a)^d)).
        for (r, d) in p.radii.iter().zip(&p.discrepancies) {
            let b = 0.3f64.tanh().powi(*r as i32 + 1).atanh();
            assert!((d - (2.0 * b).tanh()).abs() < 1e-12);
        }
        let (c, delta) = p.fit.unwrap();
        assert!(c > 0.0 && delta > 0.0 && delta <= 1.0);
    }
}
