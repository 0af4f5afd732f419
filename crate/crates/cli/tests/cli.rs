use std::path::Path;
use std::process::{Command, Output};

fn fmpols(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmpols")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_presets_names_every_preset() {
    let out = fmpols(&["list-presets"]);
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(str::to_owned).collect();
    assert_eq!(names, fmpols::config::PRESETS);
}

#[test]
fn run_writes_one_csv_per_variant_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = fmpols(&["run", "--preset", "exp2", "--set", "horizon=50", "--out", out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["luenberger", "two_lag", "kalman", "hinf"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("exp2_{label}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("t,y_norm,learner_loss"));
        assert_eq!(lines.count(), 50);
    }
    assert!(Path::new(&dir.path().join("summary.txt")).exists());
    assert!(stdout(&out).contains("experiment: exp2"));
}

#[test]
fn identical_runs_produce_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = fmpols(&["run", "--preset", "expA3", "--set", "horizon=80", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success());
    }
    let file = "expA3_two_lag.csv";
    assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap());
}

#[test]
fn config_file_round_trips_through_show_config() {
    let dir = tempfile::tempdir().unwrap();
    let shown = fmpols(&["show-config", "--preset", "exp1", "--set", "horizon=40"]);
    assert!(shown.status.success());
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, &shown.stdout).unwrap();
    let again = fmpols(&["show-config", "--config", path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(shown.stdout, again.stdout);
    assert!(stdout(&again).contains("horizon = 40"));
}

#[test]
fn bounds_reports_residual_bounds_for_the_swap_system() {
    let out = fmpols(&["bounds", "--preset", "exp2", "--set", "horizon=300"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    let two_lag = text.lines().find(|l| l.starts_with("two_lag")).unwrap();
    let cols: Vec<&str> = two_lag.split_whitespace().collect();
    let (delta, bound): (f64, f64) = (cols[1].parse().unwrap(), cols[2].parse().unwrap());
    assert!(delta <= bound);
}

#[test]
fn bad_input_is_reported_with_nonzero_exit() {
    let unknown = fmpols(&["run", "--preset", "nope", "--out", "unused"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("nope"));
    let neither = fmpols(&["show-config"]);
    assert_eq!(neither.status.code(), Some(2));
    let bad_override = fmpols(&["show-config", "--preset", "exp1", "--set", "lambda=-1"]);
    assert_eq!(bad_override.status.code(), Some(2));
}
