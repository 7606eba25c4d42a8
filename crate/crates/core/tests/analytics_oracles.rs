use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spinlearn_core::analytics::{band_sup, dense_exact_table, exact_linear_atoms, psd_shift, HsSampler};
use spinlearn_core::concepts::{influence_from_table, mu_influence, Concept, InfluenceMode, MonotoneDnf};
use spinlearn_core::inference::{exact_distribution, tv_distance};
use spinlearn_core::{IsingModel, RngStream};

mod common;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifted_diagonal_leaves_the_law_unchanged(m in common::model(1, 8)) {
        let shift = psd_shift(&m).unwrap();
        prop_assert!(shift.lambda_min <= 0.0);
        let shifted = dense_exact_table(&shift.matrix, m.fields()).unwrap();
        prop_assert!(tv_distance(&shifted, &exact_distribution(&m).unwrap()).unwrap() <= 1e-12);
    }

    #[test]
    fn influence_ignores_the_diagonal(m in common::model(2, 7), diag in proptest::collection::vec(-2.0f64..2.0, 7)) {
        let n = m.n();
        let mut a = m.dense_couplings();
        for i in 0..n {
            a[(i, i)] = diag[i];
        }
        let with_diag = IsingModel::from_dense(&a, m.fields().to_vec()).unwrap();
        let c = Concept::MonotoneDnf(MonotoneDnf::new(n, vec![vec![0, 1], vec![n - 1]]).unwrap());
        let base = mu_influence(&c, &m, &InfluenceMode::Exact).unwrap();
        let other = mu_influence(&c, &with_diag, &InfluenceMode::Exact).unwrap();
        let by_table = influence_from_table(&dense_exact_table(&a, m.fields()).unwrap(), &c.values().unwrap()).unwrap();
        for j in 0..n {
            prop_assert!((base.per_coordinate[j] - other.per_coordinate[j]).abs() <= 1e-12);
            prop_assert!((base.per_coordinate[j] - by_table[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn band_sup_matches_a_scan_over_left_ends(values in proptest::collection::vec((-5i32..5, 1u32..10), 1..30), width in 0.0f64..4.0) {
        let total: u32 = values.iter().map(|v| v.1).sum();
        let mut atoms: Vec<(f64, f64)> =
            values.iter().map(|&(x, w)| (f64::from(x) * 0.5, f64::from(w) / f64::from(total))).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let naive = atoms
            .iter()
            .map(|&(lo, _)| atoms.iter().filter(|a| a.0 >= lo && a.0 <= lo + width + 1e-12).map(|a| a.1).sum::<f64>())
            .fold(0.0, f64::max);
        prop_assert!((band_sup(&atoms, width) - naive).abs() <= 1e-12);
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn uniform_bands_are_central_binomial_masses() {
    // Under the uniform law, Σσ_i/√n sits on a lattice of spacing 2/√n with
    // binomial weights; a band of width below 2/√n holds one atom, a band
    // just above holds two.
    for n in [4u64, 7, 10] {
        let w = vec![1.0 / (n as f64).sqrt(); n as usize];
        let atoms = exact_linear_atoms(&IsingModel::uniform(n as usize), &w).unwrap();
        let pmf: Vec<f64> = (0..=n).map(|k| binomial(n, k) / 2f64.powi(n as i32)).collect();
        let one = pmf.iter().copied().fold(0.0, f64::max);
        let two = pmf.windows(2).map(|p| p[0] + p[1]).fold(0.0, f64::max);
        let step = 2.0 / (n as f64).sqrt();
        assert!((band_sup(&atoms, 0.5 * step) - one).abs() <= 1e-12);
        assert!((band_sup(&atoms, 1.5 * step) - two).abs() <= 1e-12);
    }
}

#[test]
fn hs_field_moments() {
    // E[z] = A'E[σ] + h and Cov(z) = A'Cov(σ)A' + A', with σ moments exact.
    for m in [IsingModel::grid(2, 3, 0.3, 0.1), IsingModel::path(5, -0.4, 0.2)] {
        let n = m.n();
        let hs = HsSampler::new(&m).unwrap();
        let a = hs.shifted().clone();
        let table = exact_distribution(&m).unwrap();
        let x = |mask: usize, i: usize| if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        let mean_s = DVector::from_fn(n, |i, _| (0..1 << n).map(|k| table.probs()[k] * x(k, i)).sum());
        let second = DMatrix::from_fn(n, n, |i, j| (0..1 << n).map(|k| table.probs()[k] * x(k, i) * x(k, j)).sum());
        let cov_s = &second - &mean_s * mean_s.transpose();
        let mean_z = &a * &mean_s + DVector::from_column_slice(m.fields());
        let cov_z = &a * cov_s * &a + &a;

        let trials = 200_000;
        let mut rng = RngStream::new(9, "test", "hs").rng();
        let draws: Vec<Vec<f64>> = (0..trials).map(|_| hs.sample(&mut rng).unwrap().z).collect();
        let t = trials as f64;
        for i in 0..n {
            let avg = draws.iter().map(|z| z[i]).sum::<f64>() / t;
            assert!((avg - mean_z[i]).abs() <= 4.0 * (cov_z[(i, i)] / t).sqrt(), "mean {i}: {avg} vs {}", mean_z[i]);
            for j in i..n {
                let prods: Vec<f64> = draws.iter().map(|z| (z[i] - mean_z[i]) * (z[j] - mean_z[j])).collect();
                let c = prods.iter().sum::<f64>() / t;
                let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / t;
                assert!((c - cov_z[(i, j)]).abs() <= 4.0 * (var / t).sqrt(), "cov {i},{j}: {c} vs {}", cov_z[(i, j)]);
            }
        }
    }
}
