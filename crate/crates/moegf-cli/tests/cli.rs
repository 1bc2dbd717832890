use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use moegf::diagnostics::{SolveReport, SolveStatus};
use moegf_cli::{parse_instance, BUNDLED_INSTANCES};

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("instances").join(format!("{name}.json"))
}

fn moegf(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moegf"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).expect("stderr carries error JSON")
}

fn read_report(path: &Path) -> SolveReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_instances_parse() {
    for (name, text) in BUNDLED_INSTANCES {
        let (si, inst) = parse_instance(text).unwrap();
        assert_eq!(si.name, name);
        assert_eq!(inst.name, name);
    }
}

#[test]
fn validate_reports_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(BUNDLED_INSTANCES[0].1).unwrap();
    doc["nodes"][0].as_object_mut().unwrap().remove("pressure_min_pa");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = moegf(&[bad.to_str().unwrap(), "--method", "validate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "validation");
    assert_eq!(e["error"]["field"], "pressure_min_pa");
}

#[test]
fn validate_reports_dangling_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(BUNDLED_INSTANCES[0].1).unwrap();
    doc["pipes"][0]["to"] = "NX".into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = moegf(&[bad.to_str().unwrap(), "--method", "validate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["field"], "P0");
}

#[test]
fn validate_accepts_bundled_instance() {
    let out = moegf(&[instance("case_a").to_str().unwrap(), "--method", "validate"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["buses"], 5);
    assert_eq!(v["nodes"], 7);
    assert_eq!(v["pipes"], 4);
}

#[test]
fn missing_file_is_hard_error() {
    let out = moegf(&["/nonexistent/instance.json"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "hard");
}

#[test]
fn parameter_override_out_of_range() {
    let out = moegf(&[instance("nano").to_str().unwrap(), "--epsilon", "0.5"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["field"], "epsilon");
}

#[test]
fn environment_overrides_mirror_flags() {
    let out = moegf(&[instance("nano").to_str().unwrap()], &[("MOEGF_KF", "0")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["field"], "kf");
    let out = moegf(&[instance("nano").to_str().unwrap()], &[("MOEGF_METHOD", "nonsense")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn alg2_warm_gives_integral_z() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "alg2", "--start", "warm", "--out", out_dir], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_report(&dir.path().join("nano.alg2.json"));
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.c_max <= 1e-4);
    for zt in &r.z {
        for &z in zt {
            assert!(z.min(1.0 - z).abs() <= 1e-4, "z = {z}");
        }
    }
}

#[test]
fn non_convergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "alg1", "--max-iters", "1", "--out", out_dir], &[]);
    assert_eq!(out.status.code(), Some(3));
    let r = read_report(&dir.path().join("nano.alg1.json"));
    assert_eq!(r.status, SolveStatus::NonConvergence);
}

#[test]
fn compare_orders_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "compare", "--out", out_dir], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(methods, ["poly-relax", "micp-lb", "alg1", "alg2"]);
    let mut rdr = csv::Reader::from_path(dir.path().join("nano.compare.csv")).unwrap();
    let col: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(col, ["poly-relax", "micp-lb", "alg1", "alg2"]);
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "alg1", "--out", d.path().to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(0));
    }
    let mut ra = read_report(&a.path().join("nano.alg1.json"));
    let mut rb = read_report(&b.path().join("nano.alg1.json"));
    ra.wall_time_s = 0.0;
    rb.wall_time_s = 0.0;
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    let back: SolveReport = serde_json::from_str(&serde_json::to_string(&ra).unwrap()).unwrap();
    assert_eq!(back, ra);
    for f in ["nano.alg1.trace.csv", "nano.alg1.linepack.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn linepack_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "phase1", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("nano.phase1.linepack.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "pipe", "m3", "tj"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let m3: f64 = r[2].parse().unwrap();
        let tj: f64 = r[3].parse().unwrap();
        assert!((tj - m3 * 38.07e-6).abs() <= 1e-9 * tj.abs().max(1.0));
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("nano.phase1.trace.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().get(0), Some("k"));
}

#[test]
fn check_passes_with_seed() {
    let out = moegf(&[instance("nano").to_str().unwrap(), "--method", "check", "--seed", "7", "--samples", "20"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 7);
}
