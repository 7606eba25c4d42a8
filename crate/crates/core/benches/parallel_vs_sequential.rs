//! The same workloads on the default rayon pool and on a one-thread pool.
//! Build with `--no-default-features` for the fully sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spinlearn_core::concepts::{mu_influence, Concept, InfluenceMode};
use spinlearn_core::inference::exact_distribution;
use spinlearn_core::samplers::{build_ssm_plan, LocalSampler};
use spinlearn_core::IsingModel;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().expect("default pool");
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single pool");
    vec![("rayon", default), ("one_thread", single)]
}

fn bench(c: &mut Criterion) {
    let grid = IsingModel::grid(4, 4, 0.2, 0.0);
    let small = IsingModel::grid(3, 3, 0.2, 0.0);
    let plan = build_ssm_plan(&small, 1.0, 0.5, 0.1, None).expect("plan");
    let sampler = LocalSampler::compile(&small, &plan).expect("sampler");
    let path = IsingModel::path(14, 0.3, 0.1);
    let maj = Concept::majority(14);

    let mut g = c.benchmark_group("parallel_vs_sequential");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("exact_distribution_16", name), |b| {
            b.iter(|| pool.install(|| exact_distribution(&grid).expect("table")))
        });
        g.bench_function(BenchmarkId::new("sampler_output_table_9", name), |b| {
            b.iter(|| pool.install(|| sampler.output_distribution().expect("table")))
        });
        g.bench_function(BenchmarkId::new("mu_influence_14", name), |b| {
            b.iter(|| pool.install(|| mu_influence(&maj, &path, &InfluenceMode::Exact).expect("influence")))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
