use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spinlearn_core::concepts::{Concept, TruthTable};
use spinlearn_core::inference::exact_distribution;
use spinlearn_core::learner::{best_weighted_error, fit_l2_weighted, MonomialBasis, Norm};
use spinlearn_core::IsingModel;

mod common;

fn table_concept(n: usize, bits: u64) -> Concept {
    Concept::TruthTable(TruthTable::from_fn(n, |m| bits >> m & 1 == 1).unwrap())
}

fn value(bits: u64, m: u64) -> f64 {
    if bits >> m & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn chi(s: u64, m: u64) -> f64 {
    // χ_S(x) = Π_{i∈S} x_i with x_i = +1 iff bit i of m is set.
    if (s & !m).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_l2_optimum_is_the_fourier_tail(n in 1usize..=6, bits: u64, k in 0usize..=6) {
        let k = k.min(n);
        let size = 1u64 << n;
        let tail: f64 = (0..size)
            .filter(|s| s.count_ones() as usize > k)
            .map(|s| {
                let coef = (0..size).map(|m| value(bits, m) * chi(s, m)).sum::<f64>() / size as f64;
                coef * coef
            })
            .sum();
        let opt = best_weighted_error(&IsingModel::uniform(n), &table_concept(n, bits), k, Norm::L2).unwrap();
        prop_assert!((opt.error - tail).abs() <= 1e-9, "{} vs {tail}", opt.error);
    }

    #[test]
    fn weighted_l2_matches_an_svd_solve(m in common::model(1, 6), bits: u64, k in 0usize..=3) {
        let n = m.n();
        let table = exact_distribution(&m).unwrap();
        let basis = MonomialBasis::new(n, k).unwrap();
        let points: Vec<(u64, f64, f64)> =
            (0..1u64 << n).map(|x| (x, value(bits, x), table.prob(x))).collect();
        let h = fit_l2_weighted(&basis, &points).unwrap();

        let rows = points.len();
        let design = DMatrix::from_fn(rows, basis.len(), |r, c| points[r].2.sqrt() * chi(basis.subsets()[c], points[r].0));
        let rhs = DVector::from_fn(rows, |r, _| points[r].2.sqrt() * points[r].1);
        let coef = design.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
        let objective = |c: &dyn Fn(u64) -> f64| points.iter().map(|(x, y, w)| w * (c(*x) - y).powi(2)).sum::<f64>();
        let ours = objective(&|x| h.value_mask(x));
        let svd = objective(&|x| basis.subsets().iter().zip(coef.iter()).map(|(s, c)| c * chi(*s, x)).sum());
        prop_assert!((ours - svd).abs() <= 1e-7, "{ours} vs {svd}");
    }

    #[test]
    fn oracle_curves_are_monotone_and_ordered(m in common::model(2, 6), bits: u64) {
        let n = m.n();
        let c = table_concept(n, bits);
        let mut last = (f64::INFINITY, f64::INFINITY);
        for k in 0..=n {
            let l2 = best_weighted_error(&m, &c, k, Norm::L2).unwrap().error;
            let l1 = best_weighted_error(&m, &c, k, Norm::L1).unwrap();
            prop_assert!(l1.kkt.as_ref().unwrap().holds);
            prop_assert!(l1.error <= l2.sqrt() + 1e-6);
            prop_assert!(l2 <= last.0 + 1e-9 && l1.error <= last.1 + 1e-6);
            last = (l2, l1.error);
        }
        prop_assert!(last.0 <= 1e-9 && last.1 <= 1e-6);
    }
}
