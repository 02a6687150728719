use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fsobolev::heat_kernel::{HeatKernelEvaluator, DEFAULT_TAIL_TOL};
use fsobolev::manifold::random_family;
use fsobolev::{
    FracParams, KernelEvaluator, ManifoldSpec, PairQuadrature, SpectralManifold, SubordinationQuad, WspParams,
};

fn manifolds() -> Vec<SpectralManifold> {
    [ManifoldSpec::unit_circle(), ManifoldSpec::standard_torus(2), ManifoldSpec::unit_sphere()]
        .into_iter()
        .map(|s| SpectralManifold::new(s).unwrap())
        .collect()
}

fn heat_kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("heat_kernel");
    for m in manifolds() {
        let ev = HeatKernelEvaluator::for_min_time(&m, 0.1, DEFAULT_TAIL_TOL).unwrap();
        let x = m.point(&vec![0.3; m.coord_len()]).unwrap();
        let y = m.point(&vec![1.7; m.coord_len()]).unwrap();
        g.bench_with_input(BenchmarkId::new("pair", m.id()), &(x, y), |b, (x, y)| {
            b.iter(|| ev.heat_kernel(black_box(0.5), x, y).unwrap())
        });
    }
    g.finish();
}

fn frac_kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("frac_kernel");
    for m in manifolds() {
        let p = FracParams::new(0.4).unwrap();
        let ev = KernelEvaluator::fractional(&m, &p, SubordinationQuad::default()).unwrap();
        let x = m.point(&vec![0.3; m.coord_len()]).unwrap();
        let y = m.point(&vec![0.9; m.coord_len()]).unwrap();
        g.bench_with_input(BenchmarkId::new("pair", m.id()), &(x, y), |b, (x, y)| b.iter(|| ev.kernel(x, y).unwrap()));
    }
    g.finish();
}

fn pair_energy(c: &mut Criterion) {
    let mut g = c.benchmark_group("pair_energy");
    g.sample_size(10);
    for (m, order) in manifolds().into_iter().zip([128usize, 16, 16]) {
        let wp = WspParams::for_manifold(&m, 0.3, 1.5).unwrap();
        let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default()).unwrap();
        let b = Arc::new(m.basis(9).unwrap());
        let u = random_family(&b, 1, 5).remove(0);
        g.bench_with_input(BenchmarkId::new("energy", m.id()), &u, |bch, u| bch.iter(|| pq.energy(u)));
    }
    g.finish();
}

criterion_group!(benches, heat_kernel, frac_kernel, pair_energy);
criterion_main!(benches);
