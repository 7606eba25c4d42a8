use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::concepts::Concept;
use crate::error::{Error, Result};
use crate::exec;
use crate::inference::exact_distribution;
use crate::learner::{LabeledSample, MonomialBasis, Norm, PolynomialHypothesis};
use crate::model::{mask_from_spins, IsingModel, Spin};
use crate::rng::RngStream;
use crate::samplers::{ExactSampler, LocalSampler, Seed};

const RIDGE: f64 = 1e-10;
/// Largest basis for which a Gram matrix is formed.
pub const GRAM_LIMIT: usize = 4096;
const HUBER_SCHEDULE: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
const STAGE_CAP: usize = 100;
/// Residuals at or below this are treated as zero by the KKT audit.
const ZERO_RESIDUAL: f64 = 1e-6;
/// Allowed subgradient violation, relative to the total weight.
const KKT_TOL: f64 = 1e-4;
const ORACLE_LIMIT: usize = 16;

/// Weighted regression problem with `(mask, label)` pairs merged.
struct Points {
    masks: Vec<u64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Points {
    fn aggregate(items: impl IntoIterator<Item = (u64, f64, f64)>) -> Self {
        let mut map: BTreeMap<(u64, i64), (f64, f64)> = BTreeMap::new();
        for (m, y, w) in items {
            if w > 0.0 {
                map.entry((m, (y * 1e9).round() as i64)).or_insert((y, 0.0)).1 += w;
            }
        }
        let mut p = Points { masks: Vec::new(), y: Vec::new(), w: Vec::new() };
        for ((m, _), (y, w)) in map {
            p.masks.push(m);
            p.y.push(y);
            p.w.push(w);
        }
        p
    }

    fn len(&self) -> usize {
        self.masks.len()
    }

    fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    fn residuals(&self, h: &PolynomialHypothesis) -> Vec<f64> {
        exec::map_range(self.len(), |i| h.value_mask(self.masks[i]) - self.y[i])
    }

    fn objective(&self, h: &PolynomialHypothesis, norm: Norm) -> f64 {
        let r = self.residuals(h);
        let total: f64 = r
            .iter()
            .zip(&self.w)
            .map(|(r, w)| match norm {
                Norm::L1 => w * r.abs(),
                Norm::L2 => w * r * r,
            })
            .sum();
        total / self.total_weight()
    }
}

/// Solves the normal equations `(ΦᵀUΦ/ΣU + ridge·I) c = ΦᵀUy/ΣU`.
fn weighted_lsq(basis: &MonomialBasis, pts: &Points, u: &[f64]) -> Result<Vec<f64>> {
    let b = basis.len();
    if b > GRAM_LIMIT {
        return Err(Error::TooLarge { what: "Gram matrix", n: b, limit: GRAM_LIMIT });
    }
    let total: f64 = u.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical(format!("total regression weight {total}")));
    }
    // Fixed partition of the rows, so the sum does not depend on threads.
    let budget = (1usize << 25) / (b * b).max(1);
    let parts = pts.len().div_ceil(256).clamp(1, budget.clamp(1, 16));
    let rows_per = pts.len().div_ceil(parts).max(1);
    let partial = exec::map_range(parts, |p| {
        let lo = (p * rows_per).min(pts.len());
        let hi = ((p + 1) * rows_per).min(pts.len());
        let mut phi = DMatrix::<f64>::zeros(hi - lo, b);
        let mut rhs = DVector::<f64>::zeros(hi - lo);
        let mut row = vec![0.0; b];
        for (r, i) in (lo..hi).enumerate() {
            let scale = (u[i] / total).sqrt();
            basis.expand_mask_into(pts.masks[i], &mut row);
            for (c, v) in row.iter().enumerate() {
                phi[(r, c)] = v * scale;
            }
            rhs[r] = pts.y[i] * scale;
        }
        (phi.tr_mul(&phi), phi.tr_mul(&rhs))
    });
    let mut gram = DMatrix::<f64>::zeros(b, b);
    let mut rhs = DVector::<f64>::zeros(b);
    for (g, r) in partial {
        gram += g;
        rhs += r;
    }
    let mut ridge = RIDGE;
    while ridge <= 1e-4 {
        let mut m = gram.clone();
        for i in 0..b {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let c = ch.solve(&rhs);
            if c.iter().all(|v| v.is_finite()) {
                return Ok(c.iter().copied().collect());
            }
        }
        ridge *= 100.0;
    }
    Err(Error::Numerical("normal equations are not positive definite".into()))
}

/// Subgradient optimality check for weighted L1 regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max_S (|Σ_{r_i≠0} w_i sign(r_i) χ_S(x_i)| − Σ_{r_i=0} w_i) / Σ w`,
    /// clipped at 0.
    pub max_violation: f64,
    pub zero_residuals: usize,
    pub holds: bool,
}

/// Checks that some choice of subgradients on the zero residuals can cancel
/// the signed feature sums of the nonzero ones, basis element by element.
pub fn kkt_audit(h: &PolynomialHypothesis, points: &[(u64, f64, f64)]) -> KktReport {
    let pts = Points::aggregate(points.iter().copied());
    kkt_on(h, &pts)
}

fn kkt_on(h: &PolynomialHypothesis, pts: &Points) -> KktReport {
    let r = pts.residuals(h);
    let total = pts.total_weight();
    let slack: f64 = r.iter().zip(&pts.w).filter(|(r, _)| r.abs() <= ZERO_RESIDUAL).map(|(_, w)| w).sum();
    let zero_residuals = r.iter().filter(|r| r.abs() <= ZERO_RESIDUAL).count();
    let subsets = h.basis().subsets();
    let worst = exec::map_range(subsets.len(), |k| {
        let s = subsets[k];
        let g: f64 = (0..pts.len())
            .filter(|&i| r[i].abs() > ZERO_RESIDUAL)
            .map(|i| pts.w[i] * r[i].signum() * MonomialBasis::chi(s, pts.masks[i]))
            .sum();
        ((g.abs() - slack) / total).max(0.0)
    })
    .into_iter()
    .fold(0.0f64, f64::max);
    KktReport { max_violation: worst, zero_residuals, holds: worst <= KKT_TOL }
}

/// Result of a smoothed L1 minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct L1Fit {
    pub hypothesis: PolynomialHypothesis,
    /// Weighted mean absolute residual on the fitting set.
    pub objective: f64,
    /// Whether the last smoothing stage met the tolerance before the cap.
    pub converged: bool,
    pub iterations: usize,
    pub kkt: KktReport,
}

/// IRLS on the Huber-smoothed objective, started from the L2 solution;
/// returns the best iterate seen.
fn l1_minimize(basis: &MonomialBasis, pts: &Points, tol: f64) -> Result<(Vec<f64>, f64, bool, usize)> {
    let total = pts.total_weight();
    let objective = |c: &[f64]| -> f64 {
        let r = exec::map_range(pts.len(), |i| {
            let v: f64 = basis.subsets().iter().zip(c).map(|(&s, c)| c * MonomialBasis::chi(s, pts.masks[i])).sum();
            pts.w[i] * (v - pts.y[i]).abs()
        });
        r.iter().sum::<f64>() / total
    };
    let mut c = weighted_lsq(basis, pts, &pts.w)?;
    let mut best_obj = objective(&c);
    let mut best = c.clone();
    let mut iterations = 0;
    let mut converged = false;
    for &delta in &HUBER_SCHEDULE {
        let mut prev = objective(&c);
        converged = false;
        for _ in 0..STAGE_CAP {
            let u: Vec<f64> = (0..pts.len())
                .map(|i| {
                    let v: f64 =
                        basis.subsets().iter().zip(&c).map(|(&s, c)| c * MonomialBasis::chi(s, pts.masks[i])).sum();
                    pts.w[i] / (v - pts.y[i]).abs().max(delta)
                })
                .collect();
            c = weighted_lsq(basis, pts, &u)?;
            iterations += 1;
            let o = objective(&c);
            if o < best_obj {
                best_obj = o;
                best = c.clone();
            }
            if (prev - o).abs() < tol {
                converged = true;
                break;
            }
            prev = o;
        }
    }
    // IRLS creeps toward a vertex of the L1 problem. Interpolating the
    // basis-size points with the smallest residuals lands on it exactly.
    let r: Vec<f64> = (0..pts.len())
        .map(|i| basis.subsets().iter().zip(&best).map(|(&s, c)| c * MonomialBasis::chi(s, pts.masks[i])).sum::<f64>() - pts.y[i])
        .collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()).then(a.cmp(&b)));
    let mut u = vec![0.0; pts.len()];
    for &i in order.iter().take(basis.len()) {
        u[i] = 1.0;
    }
    if let Ok(snap) = weighted_lsq(basis, pts, &u) {
        let o = objective(&snap);
        if o <= best_obj + 1e-12 {
            best_obj = best_obj.min(o);
            best = snap;
        }
    }
    Ok((best, best_obj, converged, iterations))
}

fn labeled_points(data: &[LabeledSample], n: usize) -> Result<Vec<(u64, Spin)>> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    data.iter()
        .map(|s| {
            crate::model::check_spins(&s.x, n)?;
            Ok((mask_from_spins(&s.x), s.y))
        })
        .collect()
}

/// Least squares on the sample, threshold 0.
pub fn fit_l2(data: &[LabeledSample], basis: &MonomialBasis) -> Result<PolynomialHypothesis> {
    let pts = labeled_points(data, basis.n())?;
    let pts = Points::aggregate(pts.into_iter().map(|(m, y)| (m, f64::from(y), 1.0)));
    let c = weighted_lsq(basis, &pts, &pts.w)?;
    PolynomialHypothesis::new(basis.clone(), c, 0.0)
}

/// Least squares for weighted `(mask, target, weight)` points.
pub fn fit_l2_weighted(basis: &MonomialBasis, points: &[(u64, f64, f64)]) -> Result<PolynomialHypothesis> {
    let pts = Points::aggregate(points.iter().copied());
    let c = weighted_lsq(basis, &pts, &pts.w)?;
    PolynomialHypothesis::new(basis.clone(), c, 0.0)
}

/// Weighted L1 regression with threshold 0.
pub fn fit_l1_weighted(basis: &MonomialBasis, points: &[(u64, f64, f64)], tol: f64) -> Result<L1Fit> {
    let pts = Points::aggregate(points.iter().copied());
    let (c, objective, converged, iterations) = l1_minimize(basis, &pts, tol)?;
    let hypothesis = PolynomialHypothesis::new(basis.clone(), c, 0.0)?;
    let kkt = kkt_on(&hypothesis, &pts);
    Ok(L1Fit { hypothesis, objective, converged, iterations, kkt })
}

/// L1 regression on four fifths of the sample (indices `i % 5 != 4`); the
/// threshold is the best cut on the remaining fifth.
pub fn fit_l1(data: &[LabeledSample], basis: &MonomialBasis, tol: f64) -> Result<L1Fit> {
    let all = labeled_points(data, basis.n())?;
    let (train, hold): (Vec<_>, Vec<_>) = if all.len() >= 5 {
        let (a, b): (Vec<_>, Vec<_>) = all.iter().enumerate().partition(|(i, _)| i % 5 != 4);
        (a.into_iter().map(|(_, p)| *p).collect(), b.into_iter().map(|(_, p)| *p).collect())
    } else {
        (all.clone(), Vec::new())
    };
    let pts = Points::aggregate(train.iter().map(|&(m, y)| (m, f64::from(y), 1.0)));
    let (c, objective, converged, iterations) = l1_minimize(basis, &pts, tol)?;
    let mut hypothesis = PolynomialHypothesis::new(basis.clone(), c, 0.0)?;
    if !hold.is_empty() {
        let scored: Vec<(f64, Spin)> = hold.iter().map(|&(m, y)| (hypothesis.value_mask(m), y)).collect();
        hypothesis = PolynomialHypothesis::new(basis.clone(), hypothesis.coefficients().to_vec(), best_cut(&scored))?;
    }
    let kkt = kkt_on(&hypothesis, &pts);
    Ok(L1Fit { hypothesis, objective, converged, iterations, kkt })
}

/// Threshold `t` minimizing the errors of `sign(v − t)`; ties go to the
/// candidate closest to 0.
fn best_cut(scored: &[(f64, Spin)]) -> f64 {
    let mut s = scored.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Cut below everything: all predictions +1.
    let mut errors = s.iter().filter(|(_, y)| *y < 0).count();
    let mut best = (errors, s[0].0 - 1.0);
    let mut i = 0;
    while i < s.len() {
        let v = s[i].0;
        while i < s.len() && s[i].0 == v {
            // Moving the cut above v turns these into −1 predictions.
            if s[i].1 > 0 {
                errors += 1;
            } else {
                errors -= 1;
            }
            i += 1;
        }
        let t = if i < s.len() { 0.5 * (v + s[i].0) } else { v + 1.0 };
        if errors < best.0 || (errors == best.0 && t.abs() < best.1.abs()) {
            best = (errors, t);
        }
    }
    best.1
}

/// Population optimum of the degree-`k` regression problem under μ.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedOptimum {
    /// `E_μ[(p − f)²]` or `E_μ|p − f|` at the optimizer.
    pub error: f64,
    pub hypothesis: PolynomialHypothesis,
    pub kkt: Option<KktReport>,
}

pub fn best_weighted_error(model: &IsingModel, c: &Concept, k: usize, norm: Norm) -> Result<WeightedOptimum> {
    let n = model.n();
    if n > ORACLE_LIMIT {
        return Err(Error::TooLarge { what: "weighted optimum", n, limit: ORACLE_LIMIT });
    }
    if c.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.n() });
    }
    let table = exact_distribution(model)?;
    let f = c.values()?;
    let points: Vec<(u64, f64, f64)> =
        (0..1usize << n).map(|m| (m as u64, f64::from(f[m]), table.probs()[m])).collect();
    let basis = MonomialBasis::new(n, k)?;
    let pts = Points::aggregate(points.iter().copied());
    match norm {
        Norm::L2 => {
            let h = fit_l2_weighted(&basis, &points)?;
            Ok(WeightedOptimum { error: pts.objective(&h, Norm::L2), hypothesis: h, kkt: None })
        }
        Norm::L1 => {
            let fit = fit_l1_weighted(&basis, &points, 1e-12)?;
            Ok(WeightedOptimum { error: fit.objective, hypothesis: fit.hypothesis, kkt: Some(fit.kkt) })
        }
    }
}

/// Where training and test inputs come from.
#[derive(Clone, Copy, Debug)]
pub enum SampleSource<'a> {
    Exact(&'a ExactSampler),
    Local(&'a LocalSampler),
}

impl SampleSource<'_> {
    fn n(&self) -> usize {
        match self {
            SampleSource::Exact(s) => s.model().n(),
            SampleSource::Local(s) => s.n(),
        }
    }

    fn draw(&self, rng: &mut impl rand::Rng) -> Result<Vec<Spin>> {
        match self {
            SampleSource::Exact(s) => s.sample(rng),
            SampleSource::Local(s) => Ok(s.sample(&Seed::uniform(s.n(), s.seed_len(), rng))?.spins),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Labeler {
    Clean(Concept),
    /// Labels flipped independently with probability `flip`.
    Noisy { concept: Concept, flip: f64 },
}

impl Labeler {
    fn label(&self, x: &[Spin], rng: &mut impl rand::Rng) -> Result<Spin> {
        match self {
            Labeler::Clean(c) => c.eval(x),
            Labeler::Noisy { concept, flip } => {
                let y = concept.eval(x)?;
                Ok(if rng.random::<f64>() < *flip { -y } else { y })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnReport {
    pub hypothesis: PolynomialHypothesis,
    pub degree: usize,
    pub train_error: f64,
    /// Mean squared (L2) or absolute (L1) residual on the fitting data.
    pub train_objective: f64,
    pub test_error: f64,
    pub kkt: Option<KktReport>,
    pub converged: bool,
}

/// Draws `n_train` labeled samples from `stream.child("train")`, fits, and
/// measures misclassification on `n_test` draws from `stream.child("test")`.
#[allow(clippy::too_many_arguments)]
pub fn learn_and_test(
    source: SampleSource<'_>,
    labeler: &Labeler,
    k: usize,
    n_train: usize,
    n_test: usize,
    norm: Norm,
    tol: f64,
    stream: &RngStream,
) -> Result<LearnReport> {
    let draw = |label: &str, count: usize| -> Result<Vec<LabeledSample>> {
        let s = stream.child(label);
        exec::map_range(count, |i| {
            let mut rng = s.substream(i as u64).rng();
            let x = source.draw(&mut rng)?;
            let y = labeler.label(&x, &mut rng)?;
            Ok(LabeledSample { x, y })
        })
        .into_iter()
        .collect()
    };
    let train = draw("train", n_train)?;
    let test = draw("test", n_test)?;
    let basis = MonomialBasis::new(source.n(), k)?;
    let (hypothesis, train_objective, kkt, converged) = match norm {
        Norm::L2 => {
            let h = fit_l2(&train, &basis)?;
            let pts = Points::aggregate(train.iter().map(|s| (mask_from_spins(&s.x), f64::from(s.y), 1.0)));
            let obj = pts.objective(&h, Norm::L2);
            (h, obj, None, true)
        }
        Norm::L1 => {
            let fit = fit_l1(&train, &basis, tol)?;
            (fit.hypothesis, fit.objective, Some(fit.kkt), fit.converged)
        }
    };
    let as_points = |d: &[LabeledSample]| d.iter().map(|s| (mask_from_spins(&s.x), s.y)).collect::<Vec<_>>();
    Ok(LearnReport {
        train_error: hypothesis.error_rate(&as_points(&train)),
        test_error: hypothesis.error_rate(&as_points(&test)),
        degree: basis.degree(),
        hypothesis,
        train_objective,
        kkt,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{Circuit, MonotoneDnf};
    use crate::model::spins_from_mask;

    fn uniform_data(n: usize, count: usize, f: impl Fn(&[Spin]) -> Spin, seed: u64) -> Vec<LabeledSample> {
        use rand::Rng;
        let mut rng = RngStream::new(seed, "test", "data").rng();
        (0..count)
            .map(|_| {
                let x = spins_from_mask(rng.random::<u64>() & ((1 << n) - 1), n);
                let y = f(&x);
                LabeledSample { x, y }
            })
            .collect()
    }

    #[test]
    fn l2_recovers_dictator_and_constant() {
        let data = uniform_data(4, 1000, |x| x[0], 1);
        let h = fit_l2(&data, &MonomialBasis::new(4, 1).unwrap()).unwrap();
        assert!((h.coefficients()[1] - 1.0).abs() < 0.1);
        assert!(data.iter().all(|s| h.predict(&s.x).unwrap() == s.y));
        let data = uniform_data(3, 200, |_| 1, 2);
        let h = fit_l2(&data, &MonomialBasis::new(3, 2).unwrap()).unwrap();
        assert!((h.coefficients()[0] - 1.0).abs() < 1e-6);
        assert!(h.coefficients()[1..].iter().all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn l2_parity_is_chance() {
        let data = uniform_data(4, 4000, |x| x[0] * x[1], 3);
        let h = fit_l2(&data, &MonomialBasis::new(4, 1).unwrap()).unwrap();
        let test = uniform_data(4, 4000, |x| x[0] * x[1], 4);
        let pts: Vec<_> = test.iter().map(|s| (mask_from_spins(&s.x), s.y)).collect();
        let e = h.error_rate(&pts);
        // No degree-1 function correlates with the parity; sign patterns can
        // still land well above ½.
        assert!(e > 0.45, "{e}");
    }

    #[test]
    fn l1_realizable_and_kkt() {
        let data = uniform_data(5, 400, |x| if x[0] + x[1] + x[2] > 0 { 1 } else { -1 }, 5);
        let fit = fit_l1(&data, &MonomialBasis::new(5, 3).unwrap(), 1e-10).unwrap();
        assert!(fit.objective < 1e-6, "{}", fit.objective);
        assert!(fit.kkt.holds, "{:?}", fit.kkt);
    }

    #[test]
    fn l1_with_noise_passes_kkt() {
        use rand::Rng;
        let mut rng = RngStream::new(7, "test", "noise").rng();
        let mut data = uniform_data(6, 2000, |x| x[0] * x[1], 6);
        for s in &mut data {
            if rng.random::<f64>() < 0.1 {
                s.y = -s.y;
            }
        }
        let fit = fit_l1(&data, &MonomialBasis::new(6, 2).unwrap(), 1e-10).unwrap();
        assert!(fit.kkt.holds, "{:?}", fit.kkt);
        let pts: Vec<_> = data.iter().map(|s| (mask_from_spins(&s.x), s.y)).collect();
        assert!(fit.hypothesis.error_rate(&pts) < 0.15);
    }

    #[test]
    fn best_cut_examples() {
        assert_eq!(best_cut(&[(-1.0, -1), (1.0, 1)]), 0.0);
        let t = best_cut(&[(0.1, -1), (0.2, -1), (0.3, 1)]);
        assert!(t > 0.2 && t <= 0.3);
    }

    #[test]
    fn oracle_examples() {
        let m = IsingModel::uniform(3);
        let parity = Concept::TruthTable(crate::concepts::TruthTable::from_fn(3, |x| (x & 3).count_ones() % 2 == 0).unwrap());
        let e = best_weighted_error(&m, &parity, 1, Norm::L2).unwrap().error;
        assert!((e - 1.0).abs() < 1e-8);
        let g = IsingModel::grid(2, 3, 0.3, 0.2);
        let d = Concept::Circuit(Circuit::dictator(6, 2).unwrap());
        assert!(best_weighted_error(&g, &d, 1, Norm::L2).unwrap().error < 1e-8);
        let dnf = Concept::MonotoneDnf(MonotoneDnf::new(6, vec![vec![0, 1], vec![3, 4, 5]]).unwrap());
        let mut prev = f64::INFINITY;
        for k in 0..=6 {
            let e2 = best_weighted_error(&g, &dnf, k, Norm::L2).unwrap().error;
            let e1 = best_weighted_error(&g, &dnf, k, Norm::L1).unwrap();
            assert!(e2 <= prev + 1e-9);
            assert!(e1.error <= e2.sqrt() + 1e-6);
            assert!(e1.kkt.unwrap().holds);
            prev = e2;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn learn_dictator_end_to_end() {
        let m = IsingModel::grid(2, 2, 0.2, 0.0);
        let s = ExactSampler::new(&m).unwrap();
        let lab = Labeler::Clean(Concept::Circuit(Circuit::dictator(4, 1).unwrap()));
        let r = learn_and_test(SampleSource::Exact(&s), &lab, 1, 500, 500, Norm::L2, 1e-9, &RngStream::new(1, "t", "l"))
            .unwrap();
        assert_eq!(r.test_error, 0.0);
    }
}
