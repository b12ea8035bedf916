use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dpfim::dp::{self, NoiseSource};
use dpfim::miner;
use dpfim::privbasis::{basis_freq, privbasis_main, BasisSet, PrivBasisConfig};
use dpfim::tf::{tf_select_and_release, TfConfig};

use dpfim_bench::{benchmark_dataset, wide_basis};

fn bench_miner(c: &mut Criterion) {
    let d = benchmark_dataset(5_000, 60, 7);
    c.bench_function("exact_top_k/n5000_k100", |b| {
        b.iter(|| miner::exact_top_k(&d, 100).unwrap())
    });
}

fn bench_basis_freq(c: &mut Criterion) {
    let d = benchmark_dataset(2_000, 40, 11);
    let mut group = c.benchmark_group("basis_freq_by_length");
    for len in [6usize, 10, 14, 16] {
        let basis = BasisSet::new(vec![wide_basis(d.universe(), len)]).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(len), &basis, |b, basis| {
            b.iter(|| {
                let mut src = NoiseSource::from_seed(3);
                basis_freq(&d, basis, 100, 1.0, &mut src).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_mechanisms(c: &mut Criterion) {
    let qualities: Vec<f64> = (0..1_000).map(|i| (i % 97) as f64).collect();
    c.bench_function("exp_mechanism/1000_candidates", |b| {
        let mut src = NoiseSource::from_seed(5);
        b.iter(|| dp::exp_mechanism(&qualities, 1.0, 1.0, false, &mut src).unwrap())
    });
    c.bench_function("laplace/10000_draws", |b| {
        let mut src = NoiseSource::from_seed(5);
        b.iter(|| {
            let mut acc = 0.0;
            for _ in 0..10_000 {
                acc += dp::laplace(2.0, &mut src).unwrap();
            }
            acc
        })
    });
}

fn bench_pipelines(c: &mut Criterion) {
    let d = benchmark_dataset(3_000, 50, 13);
    c.bench_function("privbasis/n3000_k40", |b| {
        let cfg = PrivBasisConfig::new(40, 1.0);
        b.iter(|| {
            let src = NoiseSource::from_seed(17);
            privbasis_main(&d, &cfg, &src).unwrap()
        })
    });
    c.bench_function("tf_pruning/n3000_k40_m2", |b| {
        let cfg = TfConfig::new(40, 1.0, 2, 0.05);
        b.iter(|| {
            let src = NoiseSource::from_seed(17);
            tf_select_and_release(&d, &cfg, &src).unwrap()
        })
    });
}

criterion_group!(benches, bench_miner, bench_basis_freq, bench_mechanisms, bench_pipelines);
criterion_main!(benches);
