//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion and
//! fails if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sumsq_core::inequalities::{check, normalization_check};
use sumsq_core::scenario::Outcome;
use sumsq_core::{
    standard_battery, Domain, FundamentalSolution, InequalityId, InequalityReport, QuadratureScheme, RPolicy,
    RunRecord, Scenario, SchemeSpec, Workspace,
};

struct Line {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

struct Runs {
    records: BTreeMap<String, (RunRecord, Duration, bool)>,
}

impl Runs {
    fn new() -> Runs {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        names.sort();
        let mut records = BTreeMap::new();
        for path in names {
            let s = Scenario::load(&path).unwrap();
            let t = Instant::now();
            let record = s.run(&SchemeSpec::default()).unwrap();
            let passed = s.passed(&record);
            records.insert(s.name.clone(), (record, t.elapsed(), passed));
        }
        Runs { records }
    }

    fn get(&self, name: &str) -> &(RunRecord, Duration, bool) {
        self.records
            .get(name)
            .unwrap_or_else(|| panic!("bundled scenario {name} missing"))
    }

    fn reports(&self, name: &str) -> &[InequalityReport] {
        match &self.get(name).0.outcome {
            Outcome::Inequalities(r) => r,
            _ => panic!("{name} is not an inequality scenario"),
        }
    }
}

fn timed(f: impl FnOnce() -> (bool, String)) -> (bool, String, Duration) {
    let t = Instant::now();
    let (p, d) = f();
    (p, d, t.elapsed())
}

fn normalization(runs: &Runs) -> (bool, String, Duration) {
    let t = Instant::now();
    let scheme = QuadratureScheme::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, tol) in [("euclid3_calibrate", 1e-3), ("heisenberg1_calibrate", 1e-2)] {
        let (record, _, _) = runs.get(name);
        let Outcome::Calibration(row) = &record.outcome else {
            panic!()
        };
        let ok = (row.check_flux + 1.0).abs() < tol;
        pass &= ok;
        detail.push(format!("{name} flux {:.6}", row.check_flux));
    }
    // Closed-form constants, independent of the calibration.
    let e = FundamentalSolution::euclidean(3, vec![0.0; 3])
        .unwrap()
        .with_constant(1.0 / (4.0 * PI))
        .unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    let fe = normalization_check(&e, &ball, &scheme).unwrap().value;
    let h = FundamentalSolution::heisenberg(1, vec![0.0; 3])
        .unwrap()
        .with_constant(1.0 / (8.0 * PI))
        .unwrap();
    let gb = Domain::build_gauge_ball(&h, 1.0).unwrap();
    let fh = normalization_check(&h, &gb, &scheme).unwrap().value;
    pass &= (fe + 1.0).abs() < 1e-3 && (fh + 1.0).abs() < 1e-2;
    detail.push(format!("c = 1/(4π): {fe:.6}, c = 1/(8π): {fh:.6}"));
    let took = t.elapsed() + runs.get("euclid3_calibrate").1 + runs.get("heisenberg1_calibrate").1;
    (pass && took < Duration::from_secs(20), detail.join("; "), took)
}

fn green(runs: &Runs) -> (bool, String, Duration) {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut took = Duration::ZERO;
    for name in ["euclid3_green", "heisenberg1_green"] {
        let (record, t, _) = runs.get(name);
        let Outcome::Green(rows) = &record.outcome else {
            panic!()
        };
        let pairs: std::collections::BTreeSet<_> = rows.iter().map(|r| (&r.u, &r.v)).collect();
        pass &= pairs.len() >= 6 && rows.iter().all(|r| r.relative < 1e-6);
        worst = rows.iter().map(|r| r.relative).fold(worst, f64::max);
        took += *t;
    }
    (
        pass && took < Duration::from_secs(30),
        format!("6 pairs × 2 frames, worst relative residual {worst:.2e}"),
        took,
    )
}

fn stokes(runs: &Runs) -> (bool, String, Duration) {
    let (record, t, passed) = runs.get("r3_nonsmooth_stokes");
    let Outcome::Stokes(rows) = &record.outcome else {
        panic!()
    };
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let mc = rows
        .iter()
        .map(|r| {
            let m = r.mc_interior.unwrap_or(f64::NAN);
            (m - r.boundary).abs() / r.mc_sigma.unwrap_or(f64::NAN)
        })
        .fold(0.0, f64::max);
    let pass = *passed && rows.len() == 3 && worst < 1e-4 && mc <= 5.0 && *t < Duration::from_secs(60);
    (
        pass,
        format!("3 sets, worst residual {worst:.2e}, Monte-Carlo within {mc:.2}σ"),
        *t,
    )
}

fn grid_suite(runs: &Runs, names: &[&str], limit: Duration) -> (bool, String, Duration) {
    let mut total = 0;
    let mut bad = 0;
    let mut took = Duration::ZERO;
    for name in names {
        let r = runs.reports(name);
        total += r.len();
        bad += r.iter().filter(|r| !r.holds()).count();
        took += runs.get(name).1;
    }
    (
        bad == 0 && total > 0 && took < limit,
        format!("{total} reports, {bad} violations"),
        took,
    )
}

fn hardy_grid(runs: &Runs) -> (bool, String, Duration) {
    let (pass, detail, took) = grid_suite(runs, &["euclid3_hardy", "heisenberg1_hardy"], Duration::from_secs(600));
    // α ∈ [2 − β + 0.25, β] step 0.25, β ∈ {3, 4, 5}, two inequalities, 12 functions.
    let points: usize = [3.0f64, 4.0, 5.0]
        .iter()
        .map(|b| ((2.0 * b - 2.0) / 0.25) as usize)
        .sum();
    let expected = 2 * 2 * points * 12;
    let got = runs.reports("euclid3_hardy").len() + runs.reports("heisenberg1_hardy").len();
    (pass && got == expected, format!("{detail} (expected {expected})"), took)
}

fn sharpness(runs: &Runs) -> (bool, String, Duration) {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut took = Duration::ZERO;
    for (name, target, within) in [("euclid3_sharpness", 0.25, 0.05), ("heisenberg1_sharpness", 1.0, 0.10)] {
        let (record, t, _) = runs.get(name);
        let Outcome::Sharpness(r) = &record.outcome else {
            panic!()
        };
        let gap = (r.best_ratio - target) / target;
        pass &= r.constant == target && gap.abs() < within && r.lower_bound_violations == 0;
        pass &= *t < Duration::from_secs(300);
        detail.push(format!("{name} ratio {:.5} ({:+.2}%)", r.best_ratio, 100.0 * gap));
        took += *t;
    }
    (pass, detail.join("; "), took)
}

fn rellich(runs: &Runs) -> (bool, String, Duration) {
    let (pass, detail, took) = grid_suite(
        runs,
        &[
            "euclid5_rellich",
            "euclid9_rellich",
            "euclid5_rellich_grad",
            "euclid9_rellich_grad",
        ],
        Duration::from_secs(900),
    );
    let n = 5.0;
    let c = InequalityId::Lr2a.constant(0.0, n);
    let k = 4.0 / (n * (n - 4.0));
    let exact = c == 25.0 / 16.0 && c == (1.0 / k) * (1.0 / k);
    let at_zero: Vec<_> = runs
        .reports("euclid5_rellich")
        .iter()
        .filter(|r| r.name == InequalityId::Lr2a && r.alpha == 0.0)
        .collect();
    let stored = !at_zero.is_empty() && at_zero.iter().all(|r| r.constant == 25.0 / 16.0);
    (
        pass && exact && stored,
        format!("{detail}; n = 5, α = 0 constant {c}"),
        took,
    )
}

fn key_identity() -> (bool, String, Duration) {
    timed(|| {
        let mut worst: f64 = 0.0;
        for fs in [
            FundamentalSolution::euclidean(5, vec![0.0; 5]).unwrap(),
            FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap(),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            for alpha in [1.0, 2.0, 3.0] {
                let mut count = 0;
                while count < 100 {
                    let x: Vec<f64> = (0..fs.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if fs.gauge(&x) < 0.1 {
                        continue;
                    }
                    worst = worst.max(fs.key_identity_residual(alpha, &x).unwrap().abs());
                    count += 1;
                }
            }
        }
        (worst < 1e-6, format!("600 points, worst residual {worst:.2e}"))
    })
}

type ScalingSetup = (FundamentalSolution, Domain, Vec<(InequalityId, f64, f64)>);

fn scaling() -> (bool, String, Duration) {
    timed(|| {
        let scheme = QuadratureScheme::default();
        let setups: Vec<ScalingSetup> = vec![
            (
                FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap(),
                Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap(),
                vec![
                    (InequalityId::Lh2a, 0.0, 3.0),
                    (InequalityId::Lh2, 1.5, 4.0),
                    (InequalityId::Up1a, 0.0, 3.0),
                    (InequalityId::Up2a, 0.0, 3.0),
                    (InequalityId::Up1, 0.0, 3.0),
                    (InequalityId::Up2, 0.0, 3.0),
                ],
            ),
            {
                let fs = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
                let d = Domain::build_gauge_ball(&fs, 1.0).unwrap();
                (
                    fs,
                    d,
                    vec![(InequalityId::Lh2a, 1.0, 4.0), (InequalityId::Lh2, -1.5, 4.0)],
                )
            },
            (
                FundamentalSolution::euclidean(5, vec![0.0; 5]).unwrap(),
                Domain::build_euclidean_ball(vec![0.0; 5], 1.0).unwrap(),
                vec![
                    (InequalityId::Lr2a, 0.0, 5.0),
                    (InequalityId::Lr2, 2.0, 5.0),
                    (InequalityId::TwoLr2a, 1.5, 5.0),
                    (InequalityId::TwoLr2, 3.0, 5.0),
                ],
            ),
        ];
        let mut worst: f64 = 0.0;
        let mut terms = 0;
        for (fs, d, cases) in &setups {
            let battery = standard_battery(d);
            let run = |f: &FundamentalSolution| -> Vec<InequalityReport> {
                let ws = Workspace::new(f, d, &scheme).unwrap();
                let mut out = Vec::new();
                for u in &battery {
                    let s = ws.sample(u, true).unwrap();
                    for &(id, a, b) in cases {
                        out.push(check(&ws, id, &s, a, b, RPolicy::Auto).unwrap());
                    }
                }
                out
            };
            let base = run(fs);
            for lambda in [0.1, 10.0] {
                for (a, b) in base.iter().zip(run(&fs.scaled(lambda).unwrap())) {
                    for ((_, va), (_, vb)) in a.breakdown().iter().zip(b.breakdown()) {
                        terms += 1;
                        if *va != vb {
                            worst = worst.max((va - vb).abs() / va.abs());
                        }
                    }
                }
            }
        }
        (
            worst < 1e-10,
            format!("{terms} terms, worst relative change {worst:.2e}"),
        )
    })
}

fn determinism(runs: &Runs) -> (bool, String, Duration) {
    timed(|| {
        let again = Runs::new();
        let mut differing = Vec::new();
        for (name, (record, _, _)) in &runs.records {
            if record.to_csv().unwrap() != again.get(name).0.to_csv().unwrap() {
                differing.push(name.clone());
            }
        }
        let n = runs.records.len();
        if differing.is_empty() {
            (true, format!("{n} bundled scenarios reproduce byte-identical CSV"))
        } else {
            (false, format!("differing: {}", differing.join(", ")))
        }
    })
}

#[test]
fn acceptance() {
    let t = Instant::now();
    let runs = Runs::new();
    eprintln!("bundled scenarios ran in {:.1}s", t.elapsed().as_secs_f64());

    let mut lines = Vec::new();
    let mut push = |id, title, (pass, detail, elapsed): (bool, String, Duration)| {
        lines.push(Line {
            id,
            title,
            pass,
            detail,
            elapsed,
        })
    };
    push(1, "normalization identity", normalization(&runs));
    push(2, "Green formulae", green(&runs));
    push(3, "Stokes on the non-smooth frame", stokes(&runs));
    push(4, "Hardy property suite", hardy_grid(&runs));
    push(5, "sharp Hardy constant", sharpness(&runs));
    push(6, "Rellich suites", rellich(&runs));
    push(7, "key identity", key_identity());
    push(8, "scaling invariance", scaling());
    push(9, "determinism", determinism(&runs));

    for l in &lines {
        println!(
            "{} [{}] {}: {} ({:.2}s)",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.title,
            l.detail,
            l.elapsed.as_secs_f64()
        );
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
