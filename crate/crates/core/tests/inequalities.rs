use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sumsq_core::inequalities::check;
use sumsq_core::sharpness::power_cutoff_field;
use sumsq_core::{
    rayleigh_ratio, standard_battery, Domain, FundamentalSolution, InequalityId, InequalityReport, QuadratureScheme,
    RPolicy, Workspace,
};

fn euclid3() -> (FundamentalSolution, Domain) {
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
    let d = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    (fs, d)
}

fn heisenberg1() -> (FundamentalSolution, Domain) {
    let fs = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
    let d = Domain::build_gauge_ball(&fs, 1.0).unwrap();
    (fs, d)
}

fn euclid5() -> (FundamentalSolution, Domain) {
    let fs = FundamentalSolution::euclidean(5, vec![0.0; 5]).unwrap();
    let d = Domain::build_euclidean_ball(vec![0.0; 5], 1.0).unwrap();
    (fs, d)
}

fn run_all(
    fs: &FundamentalSolution,
    d: &Domain,
    cases: &[(InequalityId, f64, f64)],
    members: &[&str],
) -> Vec<InequalityReport> {
    let scheme = QuadratureScheme::default();
    let ws = Workspace::new(fs, d, &scheme).unwrap();
    let mut out = Vec::new();
    for u in standard_battery(d).iter().filter(|u| members.contains(&u.name())) {
        let s = ws.sample(u, true).unwrap();
        for &(id, alpha, beta) in cases {
            out.push(check(&ws, id, &s, alpha, beta, RPolicy::Auto).unwrap());
        }
    }
    out
}

fn assert_scaling_invariant(fs: &FundamentalSolution, d: &Domain, cases: &[(InequalityId, f64, f64)]) {
    let members = ["quadratic", "gaussian_shifted", "bump", "trig"];
    let base = run_all(fs, d, cases, &members);
    for lambda in [0.1, 10.0] {
        let scaled = run_all(&fs.scaled(lambda).unwrap(), d, cases, &members);
        for (a, b) in base.iter().zip(&scaled) {
            for ((la, va), (_, vb)) in a.breakdown().iter().zip(b.breakdown()) {
                let rel = (va - vb).abs() / va.abs().max(1e-300);
                assert!(
                    rel < 1e-10 || (va - vb).abs() < 1e-300,
                    "{} {} α={} β={} {la}: {va} vs {vb} (λ = {lambda})",
                    a.name,
                    a.function,
                    a.alpha,
                    a.beta
                );
            }
            assert_eq!(a.verdict, b.verdict);
        }
    }
}

#[test]
fn terms_do_not_depend_on_the_constant_euclidean() {
    let (fs, d) = euclid3();
    assert_scaling_invariant(
        &fs,
        &d,
        &[
            (InequalityId::Lh2a, 0.5, 3.0),
            (InequalityId::Lh2, -0.25, 4.0),
            (InequalityId::Up1a, 0.0, 3.0),
            (InequalityId::Up2, 0.0, 3.0),
        ],
    );
}

#[test]
fn terms_do_not_depend_on_the_constant_heisenberg() {
    let (fs, d) = heisenberg1();
    assert_scaling_invariant(
        &fs,
        &d,
        &[
            (InequalityId::Lh2a, 1.0, 4.0),
            (InequalityId::Lh2, 0.0, 4.0),
            (InequalityId::Up2a, 0.0, 4.0),
        ],
    );
}

#[test]
fn terms_do_not_depend_on_the_constant_rellich() {
    let (fs, d) = euclid5();
    assert_scaling_invariant(
        &fs,
        &d,
        &[
            (InequalityId::Lr2a, 0.0, 5.0),
            (InequalityId::Lr2, 1.0, 5.0),
            (InequalityId::TwoLr2a, 1.5, 5.0),
            (InequalityId::TwoLr2, 2.0, 5.0),
        ],
    );
}

#[test]
fn rellich_constant_in_five_dimensions() {
    let n = 5.0;
    let c = InequalityId::Lr2a.constant(0.0, n);
    assert_eq!(c, 25.0 / 16.0);
    // Reciprocal of 4/(n(n−4)), squared.
    let k = 4.0 / (n * (n - 4.0));
    assert_eq!(c, (1.0 / k) * (1.0 / k));
    assert_eq!(InequalityId::Lr2.constant(0.0, n), c);
}

#[test]
fn hardy_constants() {
    assert_eq!(InequalityId::Lh2a.constant(0.0, 3.0), 0.25);
    assert_eq!(InequalityId::Lh2a.constant(0.0, 4.0), 1.0);
    assert_eq!(InequalityId::Up1a.constant(0.0, 5.0), 2.25);
}

fn random_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.2 {
            out.push(x);
        }
    }
    out
}

#[test]
fn key_identity_at_random_points() {
    for fs in [
        FundamentalSolution::euclidean(5, vec![0.0; 5]).unwrap(),
        FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap(),
    ] {
        for alpha in [1.0, 2.0, 3.0] {
            for x in random_points(fs.dim(), 100, 11) {
                let r = fs.key_identity_residual(alpha, &x).unwrap();
                assert!(r.abs() < 1e-6, "{:?} α={alpha} at {x:?}: {r:e}", fs.kind());
            }
        }
    }
}

/// `∫_a^b f` by composite 16-point Gauss–Legendre on 64 panels.
fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre_16();
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let c = a + (p as f64 + 0.5) * h;
            x.iter().zip(&w).map(|(xi, wi)| wi * f(c + 0.5 * h * xi)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Nodes from Newton iteration on P_16.
fn gauss_legendre_16() -> (Vec<f64>, Vec<f64>) {
    let n = 16;
    let mut x = Vec::new();
    let mut w = Vec::new();
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                x.push(z);
                w.push(2.0 / ((1.0 - z * z) * dp * dp));
                break;
            }
        }
    }
    (x, w)
}

/// Quintic smoothstep cutoff: 1 below 0.6, 0 above 1.
fn chi(s: f64) -> (f64, f64) {
    let t = ((s - 0.6) / 0.4).clamp(0.0, 1.0);
    let v = 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d = if t > 0.0 && t < 1.0 {
        -30.0 * t * t * (1.0 - t) * (1.0 - t) / 0.4
    } else {
        0.0
    };
    (v, d)
}

#[test]
fn hardy_ratio_matches_radial_integrals() {
    // u = r^{−γ}χ(r) in the unit ball of ℝ³: ratio ∫|u'|²r² / ∫u².
    let (fs, d) = euclid3();
    let ws = Workspace::new(&fs, &d, &QuadratureScheme::default()).unwrap();
    let fs = Arc::new(fs);
    for gamma in [0.1, 0.3, 0.45] {
        let u = |r: f64| r.powf(-gamma) * chi(r).0;
        let du = |r: f64| -gamma * r.powf(-gamma - 1.0) * chi(r).0 + r.powf(-gamma) * chi(r).1;
        let inner = 0.6f64.powf(1.0 - 2.0 * gamma) / (1.0 - 2.0 * gamma);
        let num = gamma * gamma * inner + gauss(|r| du(r) * du(r) * r * r, 0.6, 1.0);
        let den = inner + gauss(|r| u(r) * u(r), 0.6, 1.0);
        let expected = num / den;
        let got = rayleigh_ratio(
            &ws,
            InequalityId::Lh2a,
            &power_cutoff_field(fs.clone(), 1.0, gamma),
            0.0,
            3.0,
        )
        .unwrap();
        assert!((got / expected - 1.0).abs() < 1e-4, "γ={gamma}: {got} vs {expected}");
        assert!(got > 0.25);
    }
}

#[test]
fn hardy_holds_on_small_grids() {
    for (fs, d) in [euclid3(), heisenberg1()] {
        let beta = fs.beta();
        let cases: Vec<_> = [2.5 - beta, 0.0, 1.0, beta]
            .iter()
            .flat_map(|&a| [(InequalityId::Lh2a, a, beta), (InequalityId::Lh2, a, beta)])
            .collect();
        let names: Vec<String> = standard_battery(&d).iter().map(|u| u.name().to_string()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        for r in run_all(&fs, &d, &cases, &names) {
            assert!(
                r.holds(),
                "{} {} α={} β={}: slack {} error {}",
                r.name,
                r.function,
                r.alpha,
                r.beta,
                r.slack,
                r.error_total
            );
            assert!((r.slack - r.recompute_slack()).abs() <= 1e-12 * r.lhs.value.abs().max(1.0));
        }
    }
}

#[test]
fn rellich_holds_in_five_dimensions() {
    let (fs, d) = euclid5();
    let cases = [
        (InequalityId::Lr2a, 0.0, 5.0),
        (InequalityId::Lr2, 2.0, 5.0),
        (InequalityId::TwoLr2a, 1.5, 5.0),
        (InequalityId::TwoLr2, 4.5, 5.0),
    ];
    for r in run_all(&fs, &d, &cases, &["const", "quadratic", "gaussian", "bump_shifted"]) {
        assert!(
            r.holds(),
            "{} {} α={}: slack {} error {}",
            r.name,
            r.function,
            r.alpha,
            r.slack,
            r.error_total
        );
    }
}

#[test]
fn parameters_outside_the_wedge_are_rejected() {
    let (fs, d) = euclid5();
    let ws = Workspace::new(&fs, &d, &QuadratureScheme::default()).unwrap();
    let u = ws.sample(&standard_battery(&d)[2], true).unwrap();
    let e = check(&ws, InequalityId::Lr2a, &u, -1.5, 5.0, RPolicy::Auto)
        .unwrap_err()
        .to_string();
    assert!(e.contains("4 − β"), "{e}");
    let e = check(&ws, InequalityId::TwoLr2a, &u, 0.5, 5.0, RPolicy::Auto)
        .unwrap_err()
        .to_string();
    assert!(e.contains("(8 − β)/3"), "{e}");
    assert!(check(&ws, InequalityId::Lh2, &u, 0.0, 5.0, RPolicy::Fixed(0.5)).is_err());
}
