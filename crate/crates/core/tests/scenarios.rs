use std::path::PathBuf;

use sumsq_core::scenario::{emit_report, Format, Outcome};
use sumsq_core::{InequalityReport, RunRecord, Scenario, SchemeSpec, Task};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bundled(name: &str) -> Scenario {
    Scenario::load(&scenario_dir().join(format!("{name}.toml"))).unwrap()
}

const UNCERTAINTY: &str = r#"
name = "small_uncertainty"
task = "uncertainty"

[frame]
kind = "heisenberg"
m = 1

[domain]
shape = "gauge_ball"
radius = 1.0

[battery]
members = ["quadratic", "bump", "trig"]
"#;

#[test]
fn every_bundled_scenario_validates() {
    let mut count = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let s = Scenario::load(&path).unwrap();
            s.validate(&SchemeSpec::default())
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(path.file_stem().unwrap().to_str().unwrap(), s.name);
            count += 1;
        }
    }
    assert!(count >= 9);
}

#[test]
fn csv_rows_are_grid_times_battery() {
    let s = bundled("euclid3_hardy");
    let points = s.grid_points(Some(3.0)).unwrap();
    let record = s.run(&SchemeSpec::default()).unwrap();
    let csv = record.to_csv().unwrap();
    assert_eq!(csv.lines().count() - 1, points.len() * 12);
    assert!(record.all_hold);

    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (a, b, c) = (col("alpha"), col("beta"), col("constant"));
    let mut seen = 0;
    for row in reader.records() {
        let row = row.unwrap();
        if &row[a] == "0" && &row[b] == "3" {
            assert_eq!(&row[c], "0.25");
            seen += 1;
        }
    }
    assert_eq!(seen, 2 * 12);
}

#[test]
fn reruns_produce_identical_csv() {
    let s = Scenario::from_toml_str(UNCERTAINTY).unwrap();
    let over = SchemeSpec {
        order: Some(6),
        ..SchemeSpec::default()
    };
    let a = s.run(&over).unwrap().to_csv().unwrap();
    let b = s.run(&over).unwrap().to_csv().unwrap();
    assert_eq!(a, b);

    let sharp = bundled("euclid3_sharpness");
    let a = sharp.run(&over).unwrap().to_csv().unwrap();
    let b = sharp.run(&over).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_record_round_trips_through_json() {
    let s = Scenario::from_toml_str(UNCERTAINTY).unwrap();
    let record = s.run(&SchemeSpec::default()).unwrap();
    let back: RunRecord = serde_json::from_str(&record.to_json().unwrap()).unwrap();
    assert_eq!(back, record);

    let Outcome::Inequalities(reports) = &record.outcome else {
        panic!("wrong outcome")
    };
    let one = &reports[0];
    let mut buf = Vec::new();
    emit_report(std::slice::from_ref(one), Format::Json, &record.scheme, &mut buf).unwrap();
    let back: Vec<InequalityReport> = serde_json::from_slice(&buf).unwrap();
    assert_eq!(&back[0], one);
}

#[test]
fn scheme_overrides_change_the_hash() {
    let s = Scenario::from_toml_str(UNCERTAINTY).unwrap();
    let a = s.run(&SchemeSpec::default()).unwrap();
    let b = s
        .run(&SchemeSpec {
            seed: Some(3),
            ..SchemeSpec::default()
        })
        .unwrap();
    assert_ne!(a.scheme_hash, b.scheme_hash);
    assert_eq!(b.seed, 3);
}

#[test]
fn alpha_outside_wedge_fails_before_integration() {
    let src = r#"
name = "bad"
task = "rellich"

[frame]
kind = "euclidean"
n = 5

[domain]
shape = "ball"
radius = 1.0

[grid]
inequalities = ["LR2a"]
alpha = [0.5, -2.0]
"#;
    let s = Scenario::from_toml_str(src).unwrap();
    let e = s.validate(&SchemeSpec::default()).unwrap_err().to_string();
    assert!(e.contains("α > 4 − β"), "{e}");
    assert!(s.run(&SchemeSpec::default()).is_err());
}

#[test]
fn unknown_keys_are_errors() {
    let src = UNCERTAINTY.replace("radius = 1.0", "radius = 1.0\nradus = 2.0");
    assert!(Scenario::from_toml_str(&src).is_err());
}

#[test]
fn identity_tasks_report_rows() {
    let over = SchemeSpec::default();
    let green = bundled("heisenberg1_green");
    let record = green.run(&over).unwrap();
    let Outcome::Green(rows) = &record.outcome else {
        panic!("wrong outcome")
    };
    assert_eq!(rows.len(), 12);
    assert!(green.passed(&record));

    let cal = bundled("heisenberg1_calibrate");
    assert_eq!(cal.task, Task::Calibrate);
    let record = cal.run(&over).unwrap();
    let Outcome::Calibration(row) = &record.outcome else {
        panic!("wrong outcome")
    };
    assert!((row.check_flux + 1.0).abs() < 1e-2);
    assert!(cal.passed(&record));
}
