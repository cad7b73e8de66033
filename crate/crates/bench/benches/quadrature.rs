use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use sumsq_core::quadrature::rules::gauss_legendre;
use sumsq_core::quadrature::{pairwise_sum, pairwise_sum_par, InteriorLevels};
use sumsq_core::{Domain, FundamentalSolution, QuadratureScheme};

fn rules(c: &mut Criterion) {
    let mut g = c.benchmark_group("gauss_legendre");
    for n in [8, 16, 32] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| gauss_legendre(black_box(n)))
        });
    }
    g.finish();
}

fn sums(c: &mut Criterion) {
    let values: Vec<f64> = (0..1 << 20).map(|i| ((i as f64) * 0.37).sin()).collect();
    c.bench_function("pairwise_sum 1M", |b| b.iter(|| pairwise_sum(black_box(&values))));
    c.bench_function("pairwise_sum_par 1M", |b| {
        b.iter(|| pairwise_sum_par(black_box(&values)))
    });
}

fn excised_ball(c: &mut Criterion) {
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    let scheme = QuadratureScheme::default();
    let excised = ball.excise_pole(&fs, 0.05).unwrap();
    c.bench_function("interior nodes, excised unit ball", |b| {
        b.iter(|| InteriorLevels::build(black_box(&excised), &scheme).unwrap())
    });
    let levels = InteriorLevels::build(&excised, &scheme).unwrap();
    c.bench_function("integrate 1/|x|² over excised ball", |b| {
        b.iter(|| {
            levels
                .integrate(|x| 1.0 / x.iter().map(|v| v * v).sum::<f64>())
                .unwrap()
        })
    });
}

criterion_group!(benches, rules, sums, excised_ball);
criterion_main!(benches);
