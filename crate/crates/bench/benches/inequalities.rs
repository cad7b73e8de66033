use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use sumsq_core::inequalities::check;
use sumsq_core::sharpness::power_cutoff_field;
use sumsq_core::{
    rayleigh_ratio, standard_battery, Domain, FundamentalSolution, InequalityId, QuadratureScheme, RPolicy, Workspace,
};

fn workspace(c: &mut Criterion) {
    let scheme = QuadratureScheme::default();
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    c.bench_function("workspace euclid3 ball", |b| {
        b.iter(|| Workspace::new(&fs, &ball, &scheme).unwrap())
    });

    let h = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
    let gb = Domain::build_gauge_ball(&h, 1.0).unwrap();
    c.bench_function("workspace heisenberg1 gauge ball", |b| {
        b.iter(|| Workspace::new(&h, &gb, &scheme).unwrap())
    });
}

fn checks(c: &mut Criterion) {
    let scheme = QuadratureScheme::default();
    let fs = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
    let d = Domain::build_gauge_ball(&fs, 1.0).unwrap();
    let ws = Workspace::new(&fs, &d, &scheme).unwrap();
    let battery = standard_battery(&d);
    c.bench_function("sample battery (second order)", |b| {
        b.iter(|| battery.iter().map(|u| ws.sample(u, true).unwrap()).collect::<Vec<_>>())
    });
    let s = ws.sample(&battery[3], false).unwrap();
    c.bench_function("LH2 check", |b| {
        b.iter(|| check(&ws, InequalityId::Lh2, &s, 1.0, 4.0, RPolicy::Auto).unwrap())
    });
    let u = power_cutoff_field(Arc::new(fs.clone()), 1.0, 0.9);
    c.bench_function("rayleigh ratio, power trial", |b| {
        b.iter(|| rayleigh_ratio(&ws, InequalityId::Lh2a, &u, 0.0, 4.0).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = workspace, checks
}
criterion_main!(benches);
