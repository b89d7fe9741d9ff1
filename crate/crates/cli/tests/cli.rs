use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gqlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqlab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("GQLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}

#[test]
fn bs_lists_k_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = gqlab(dir.path(), &["bs", "--k", "3"]);
    assert!(out.status.success());
    let r = rows(&dir.path().join("bs.csv"));
    assert_eq!(r, vec!["0,1", "0.333333333333,3", "0.666666666667,3"]);
}

#[test]
fn bs_n2_counts_k_squared() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gqlab(dir.path(), &["bs", "--k", "2", "--n", "2"]).status.success());
    assert_eq!(rows(&dir.path().join("bs.csv")).len(), 4);
}

#[test]
fn limit_table_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[bundle]\nk = 2\n[analysis]\nn_max = 3\n").unwrap();
    let out = gqlab(dir.path(), &["limit", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let r = rows(&dir.path().join("limit.csv"));
    assert_eq!(r, vec!["0,0,2,2", "1,2,2,4", "2,4,2,6", "3,6,2,8"]);
}

#[test]
fn spectrum_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--preset", "semiflat-x", "--grid", "32x32", "--k", "2", "--seed", "7"];
    assert!(gqlab(a.path(), &args).status.success());
    assert!(gqlab(b.path(), &args).status.success());
    for f in ["spectrum.csv", "spectrum.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn gap_counts_bs_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = gqlab(dir.path(), &["gap", "--grid", "32x32", "--k", "2", "--s", "0.2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("gap.json")).unwrap()).unwrap();
    assert_eq!(v["cluster_size"], 2);
    assert_eq!(v["rr_verdict"], true);
}

#[test]
fn curvature_matches_semiflatness() {
    let dir = tempfile::tempdir().unwrap();
    let out = gqlab(dir.path(), &["curvature", "--preset", "nonsemiflat-theta", "--grid", "32x32", "--s", "0.2,0.1,0.05"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("curvature.json")).unwrap()).unwrap();
    assert_eq!(v["verdict"], "unbounded-below");
    assert_eq!(rows(&dir.path().join("curvature.csv")).len(), 3);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gqlab(dir.path(), &["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(rows(&dir.path().join("verify.csv")).iter().all(|r| r.contains(",true,")));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gqlab(dir.path(), &["bs", "--preset", "nope"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[model]\ncolour = red\n").unwrap();
    assert_eq!(gqlab(dir.path(), &["bs", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(gqlab(dir.path(), &["spectrum", "--grid", "2x64"]).status.code(), Some(2));
    assert_eq!(gqlab(dir.path(), &["spectrum", "--s", "-1"]).status.code(), Some(2));
}
