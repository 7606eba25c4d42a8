use proptest::prelude::*;
use spinlearn_core::inference::{exact_distribution, tv_distance};
use spinlearn_core::inverter::{
    inv_samp, likelihood_ratio_audit, preimage_enumerate, pushforward_density, DEFAULT_ATTEMPT_CAP,
};
use spinlearn_core::model::spins_from_mask;
use spinlearn_core::samplers::{
    build_plan_with_radius, conditional_accuracy_audit, default_seed_len, locality_audit, tree_plan, ExactSampler,
    LocalSampler, Seed,
};
use spinlearn_core::{IsingModel, RngStream};

mod common;

fn model() -> impl Strategy<Value = IsingModel> {
    common::model(2, 6)
}

fn sampler(m: &IsingModel, r: usize, s: u32) -> LocalSampler {
    LocalSampler::compile(m, &build_plan_with_radius(m, r, s, 1.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_read_only_their_dependency_sets(m in model(), r in 1usize..4, s in 2u32..5) {
        let sp = sampler(&m, r, s);
        let rep = locality_audit(&sp, &m, 256, &RngStream::new(1, "test", "locality")).unwrap();
        prop_assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn inversion_round_trips(m in model(), r in 1usize..4, s in 2u32..8, seed in 0u64..1000) {
        let sp = sampler(&m, r, s);
        // Coarse seeds can round some outputs out of the support, so invert the
        // sampler's own outputs.
        let mut rng = RngStream::new(seed, "test", "draws").rng();
        for t in 0..8 {
            let y = sp.sample(&Seed::uniform(m.n(), s, &mut rng)).unwrap().spins;
            let inv = inv_samp(&sp, &y, &RngStream::new(seed, "test", "aux").substream(t), DEFAULT_ATTEMPT_CAP).unwrap();
            let z = inv.seed.expect("supported input inverts");
            prop_assert_eq!(sp.sample(&z).unwrap().spins, y);
        }
    }

    #[test]
    fn preimages_factorize_and_partition_the_seeds(m in model(), r in 1usize..3, s in 1u32..3) {
        let n = m.n();
        let sp = sampler(&m, r, s);
        let mut total = 0u128;
        for mask in 0..1u64 << n {
            let pre = preimage_enumerate(&sp, &spins_from_mask(mask, n)).unwrap();
            prop_assert!(pre.is_product());
            total += pre.seeds.len() as u128;
        }
        prop_assert_eq!(total, 1u128 << (n * s as usize));
    }

    #[test]
    fn pushforward_equals_the_likelihood_ratio(m in model(), r in 1usize..3, s in 1u32..3) {
        // μ(Samp z)/|Samp⁻¹(Samp z)| · 2^{sn} is μ/Pr_Samp evaluated at Samp z.
        let n = m.n();
        let sp = sampler(&m, r, s);
        let mu = exact_distribution(&m).unwrap();
        let bits = n * s as usize;
        let worst = (0..1u128 << bits)
            .map(|c| pushforward_density(&sp, &mu, &Seed::from_code(n, s, c)) * 2f64.powi(bits as i32))
            .fold(0.0, f64::max);
        let ratio = likelihood_ratio_audit(&sp, &m).unwrap();
        prop_assert!((worst - ratio).abs() <= 1e-9 * ratio.max(1.0), "{worst} vs {ratio}");
    }

    #[test]
    fn full_radius_plans_meet_their_accuracy(m in model(), eps in 0.02f64..0.5) {
        // At radius n every conditional is exact, leaving the discretization.
        let n = m.n();
        let eta = m.diagnostics().marginal_bound;
        let sp = LocalSampler::compile(&m, &build_plan_with_radius(&m, n, default_seed_len(n, eta, eps), eps).unwrap()).unwrap();
        let tv = tv_distance(&sp.output_distribution().unwrap(), &exact_distribution(&m).unwrap()).unwrap();
        prop_assert!(tv <= eps);
        prop_assert!(likelihood_ratio_audit(&sp, &m).unwrap() <= eps.exp());
        prop_assert!(conditional_accuracy_audit(&sp, &m).unwrap() <= 1.0 + eps / n as f64);
    }

    #[test]
    fn tree_sampler_is_exact_up_to_discretization(n in 2usize..9, beta in -0.6f64..0.6, s in 4u32..12) {
        let m = IsingModel::path(n, beta, 0.1);
        let sp = LocalSampler::compile(&m, &tree_plan(&m, n / 2, s, 0.1).unwrap()).unwrap();
        let tv = tv_distance(&sp.output_distribution().unwrap(), &exact_distribution(&m).unwrap()).unwrap();
        prop_assert!(tv <= n as f64 * 0.5f64.powi(s as i32));
    }
}

#[test]
fn exact_sampler_frequencies_match_the_table() {
    let m = IsingModel::grid(2, 2, 0.4, -0.1);
    let table = exact_distribution(&m).unwrap();
    let exact = ExactSampler::new(&m).unwrap();
    let stream = RngStream::new(3, "test", "freq");
    let trials = 40_000u64;
    let mut counts = [0u64; 16];
    for t in 0..trials {
        counts[spinlearn_core::model::mask_from_spins(&exact.sample_indexed(&stream, t).unwrap()) as usize] += 1;
    }
    for (c, p) in counts.iter().zip(table.probs()) {
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((*c as f64 / trials as f64 - p).abs() <= 4.5 * se);
    }
}
