use std::path::PathBuf;
use std::process::{Command, Output};

fn hbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbn")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hbn-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn bounds_at_three() {
    let o = hbn(&["bounds", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("n,paper_bound,stapelkamp_bound,spectrum_bottom,ratio\n"));
    let row: Vec<f64> = csv_rows(&text)[0].iter().map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[1], 0.9);
    assert_eq!(row[2], 0.75);
    assert_eq!(row[3], 1.0);
}

#[test]
fn eigen_on_a_ball_of_radius_pi() {
    let o = hbn(&["eigen", "--n", "3", "--radius", "3.14159265358979"]);
    assert_eq!(o.status.code(), Some(0));
    let l: f64 = csv_rows(&stdout(&o))[0][2].parse().unwrap();
    assert!((l - 2.0).abs() < 1e-6, "{l}");
}

#[test]
fn lemma_accepts_n_above_four_and_rejects_two() {
    let o = hbn(&["lemma", "--n", "5", "--x-max", "10", "--points", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("true,true"));
    assert_eq!(hbn(&["lemma", "--n", "2", "--x-max", "10", "--points", "1000"]).status.code(), Some(1));
}

#[test]
fn validation_errors_exit_with_one() {
    for args in [
        &["bounds"][..],
        &["bounds", "--n", "abc"],
        &["frobnicate"],
        &["eigen", "--n", "3", "--radius", "-1"],
        &["solve", "--n", "3", "--lambda", "10", "--radius", "1", "--tol", "1e-3"],
        &["scan", "--n", "3", "--radius", "1", "--lambda-min", "1", "--lambda-max", "0", "--steps", "5"],
        &["surface", "--n-grid", "3,x", "--r-grid", "1"],
        &["surface", "--n-grid", "", "--r-grid", "1"],
        &["lemma", "--n", "3", "--points", "1"],
        &["bounds", "--n", "3", "--format", "xml"],
    ] {
        let o = hbn(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(hbn(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_then_verify_round_trip() {
    let csv = scratch("profile.csv");
    let path = csv.to_str().unwrap();
    let o = hbn(&["solve", "--n", "3", "--lambda", "10", "--radius", "1", "--output", path]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,u,du,G,Iu2,Idu2,Iup1,IL,IH\n"));
    assert!(!text.contains('\r'));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{path}.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config"]["tol"], 1e-10);
    assert_eq!(manifest["config"]["lambda"], 10.0);

    let o = hbn(&["verify", "--input", path, "--n", "3", "--lambda", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert!(rows.iter().all(|r| r[6] == "true"));
    assert!(rows.iter().any(|r| r[0] == "po1"));

    // A profile checked against the wrong λ fails the identities.
    assert_eq!(hbn(&["verify", "--input", path, "--n", "3", "--lambda", "7"]).status.code(), Some(3));
    assert_eq!(hbn(&["verify", "--input", path]).status.code(), Some(1));

    let json = scratch("solution.json");
    let o = hbn(&["solve", "--n", "3", "--lambda", "10", "--radius", "1", "--format", "json"]);
    let outcome: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(outcome["kind"], "found");
    let profile = serde_json::to_string(&outcome["solutions"][0]["profile"]).unwrap();
    std::fs::write(&json, profile).unwrap();
    let o = hbn(&["verify", "--input", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn truncated_profile_fails_verification() {
    let csv = scratch("truncated.csv");
    let o = hbn(&["solve", "--n", "3", "--lambda", "10", "--radius", "1"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let kept = lines[..lines.len() / 2].join("\n") + "\n";
    std::fs::write(&csv, kept).unwrap();
    let o = hbn(&["verify", "--input", csv.to_str().unwrap(), "--n", "3", "--lambda", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_profile_is_a_validation_error() {
    let csv = scratch("bad.csv");
    std::fs::write(&csv, "x,u,du\n0,1,0\n").unwrap();
    let o = hbn(&["verify", "--input", csv.to_str().unwrap(), "--n", "3", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_runs_are_byte_identical() {
    let run = |name: &str| {
        let p = scratch(name);
        let s = p.to_str().unwrap();
        let o = hbn(&["solve", "--n", "2.5", "--lambda", "8", "--radius", "1", "--format", "json", "--output", s]);
        assert_eq!(o.status.code(), Some(0));
        (std::fs::read(&p).unwrap(), std::fs::read(format!("{s}.manifest.json")).unwrap())
    };
    let (a, ma) = run("a.json");
    let (b, mb) = run("b.json");
    assert_eq!(a, b);
    // Manifests differ only in the output path they record.
    let strip = |m: Vec<u8>| {
        let mut v: serde_json::Value = serde_json::from_slice(&m).unwrap();
        v["config"]["output"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(ma), strip(mb));
}

#[test]
fn scan_below_zero_finds_nothing() {
    let o = hbn(&["scan", "--n", "3", "--radius", "1", "--lambda-min", "-2", "--lambda-max", "0", "--steps", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == "false" && r[2] == "not_found"));
}

#[test]
fn surface_cell_records_the_closed_form_eigenvalue() {
    let o = hbn(&["surface", "--n-grid", "3", "--r-grid", "3.141592653589793"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("n,R,lambda_no,lambda_yes,paper_bound,stapelkamp_bound,lambda1\n"));
    let row = &csv_rows(&text)[0];
    let l1: f64 = row[6].parse().unwrap();
    assert!((l1 - 2.0).abs() < 1e-8);
    let no: f64 = row[2].parse().unwrap();
    assert!(no >= 0.9);
}
