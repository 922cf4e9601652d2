use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[rbm]
lengths = 1, 3, 6, 10
randomizations = 5
shots = 20
resamples = 20

[pst]
gate_shots = 3000
calibration_shots = 1000
";

fn mixgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixgate")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mixgate(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.conf");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let out = mixgate(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mixgate(&[]).status.code(), Some(2));
    assert_eq!(mixgate(&["rbm"]).status.code(), Some(2));
}

#[test]
fn budget_lists_rows_and_total() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["budget", "--out", dir.path().to_str().unwrap()]);
    for row in ["heating", "scattering", "stray field", "kerr cross-coupling", "spectator modes", "total"] {
        assert!(text.contains(row), "missing {row}:\n{text}");
    }
    let csv = fs::read_to_string(dir.path().join("budget.csv")).unwrap();
    assert!(csv.starts_with("source,error\n"));
}

#[test]
fn dynamics_writes_population_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dynamics", "--out", dir.path().to_str().unwrap()]);
    let csv = fs::read_to_string(dir.path().join("fig2b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_us,p_dd,p_du,p_ud,p_uu"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[1] - 0.5).abs() < 1e-6 && (last[4] - 0.5).abs() < 1e-6);
}

#[test]
fn rbm_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap();
        for step in ["gen", "run", "fit"] {
            ok(&["rbm", step, "--seed", "1", "--config", &cfg, "--out", out]);
        }
        let files: Vec<Vec<u8>> = ["rbm_sequences.json", "rbm_counts.txt", "fig3b.csv", "fig3c.csv", "rbm_report.json"]
            .iter()
            .map(|f| fs::read(Path::new(out).join(f)).unwrap())
            .collect();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
    let other = dir.path().join("c");
    let other = other.to_str().unwrap();
    ok(&["rbm", "gen", "--seed", "2", "--config", &cfg, "--out", other]);
    assert_ne!(fs::read(Path::new(other).join("rbm_sequences.json")).unwrap(), runs[0][0]);
}

#[test]
fn pst_pipeline_and_dataset_backend() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let a = a.to_str().unwrap();
    ok(&["pst", "run", "--config", &cfg, "--out", a]);
    let text = ok(&["pst", "report", "--config", &cfg, "--out", a]);
    assert!(text.contains("corrected error"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(a).join("pst.json")).unwrap()).unwrap();
    assert!(report["raw_fidelity"].as_f64().unwrap() > 0.9);

    let counts = Path::new(a).join("pst_counts.txt");
    let b = dir.path().join("b");
    let b = b.to_str().unwrap();
    ok(&["pst", "run", "--backend", "dataset", "--dataset", counts.to_str().unwrap(), "--out", b]);
    assert_eq!(fs::read(&counts).unwrap(), fs::read(Path::new(b).join("pst_counts.txt")).unwrap());
}

#[test]
fn operation_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let r = mixgate(&["rbm", "fit", "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("rbm_sequences.json"));

    let r = mixgate(&["pst", "run", "--backend", "dataset", "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--dataset"));

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[rbm]\nshots = lots\n").unwrap();
    let r = mixgate(&["budget", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));

    let odd = dir.path().join("odd.conf");
    fs::write(&odd, "[drive]\nloops = 3\n").unwrap();
    let r = mixgate(&["dynamics", "--config", odd.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn config_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["config", "--seed", "9"]);
    assert!(text.contains("seed = 9"));
    let p = dir.path().join("c.conf");
    fs::write(&p, &text).unwrap();
    assert_eq!(ok(&["config", "--config", p.to_str().unwrap()]), text);
}

#[test]
fn gst_design_lists_circuits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["gst", "design", "--out", out]);
    let n = fs::read_to_string(dir.path().join("gst_circuits.txt")).unwrap().lines().count();
    assert_eq!(n, 2752);
}
