//! End-to-end runs of the `assm` binary.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use anat_ssm::pca::BaseSsm;
use anat_ssm::shape::obj::read_obj;
use tempfile::TempDir;

fn assm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_assm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn assm")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = assm(dir, args);
    assert!(
        out.status.success(),
        "assm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A femur workspace carried through to an ANAT model.
fn pipeline() -> &'static TempDir {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(d, &["fixtures", "spec", "--kind", "femur", "-n", "12", "--seed", "3", "-o", "spec.json"]);
        ok(d, &["fixtures", "gen", "spec.json", "-o", "data"]);
        ok(d, &["build-base", "data", "-o", "base.json"]);
        ok(d, &["gen-pop", "base.json", "--landmarks", "data/landmarks.json", "-M", "200", "--seed", "3", "-o", "pop.csv"]);
        ok(d, &["learn", "pop.csv", "--orthogonal", "-o", "q.json", "-o", "k.json"]);
        ok(d, &["build-anat", "base.json", "q.json", "-o", "anat.json"]);
        ok(d, &["build-anat", "base.json", "k.json", "-o", "oc.json"]);
        dir
    })
}

#[test]
fn sampling_with_no_values_gives_the_mean_mesh() {
    let d = pipeline().path();
    let stdout = ok(d, &["sample", "anat.json", "-o", "mean.obj"]);
    assert!(stdout.starts_with("label,requested,beta_std,measured"));
    let mesh = read_obj(d.join("mean.obj")).unwrap();
    let base = BaseSsm::load(d.join("base.json")).unwrap();
    let mean = base.mean().points();
    assert_eq!(mesh.vertices.len(), mean.len());
    let worst = mesh
        .vertices
        .iter()
        .zip(&mean)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn requested_value_is_approximately_reproduced() {
    let d = pipeline().path();
    let stdout = ok(d, &["sample", "anat.json", "--set", "FL=44", "-o", "fl.obj"]);
    let row = stdout.lines().find(|l| l.starts_with("FL,")).unwrap();
    let cols: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(cols[0], 44.0);
    assert!((cols[2] - 44.0).abs() < 0.5, "{row}");
}

#[test]
fn analysis_commands_write_their_tables() {
    let d = pipeline().path();
    ok(d, &["stats", "pop.csv", "-o", "stats"]);
    for f in ["normal_fit.csv", "histograms.csv", "shapiro_wilk.csv", "beta_beta.csv", "alpha_beta.csv"] {
        assert!(d.join("stats").join(f).is_file(), "{f}");
    }
    let var = ok(d, &["variability", "oc.json", "--ablate"]);
    assert!(var.lines().count() > 5);
    ok(d, &["sweep", "oc.json", "--param", "HD", "--steps", "7", "-o", "hd.csv"]);
    assert_eq!(std::fs::read_to_string(d.join("hd.csv")).unwrap().lines().count(), 8);
    assert!(d.join("hd.slopes.csv").is_file());
    let metrics = ok(d, &["metrics", "base.json", "data", "--samples", "20"]);
    assert!(metrics.lines().next().unwrap().contains("compactness"));
    let measured = ok(d, &["measure", "data", "--landmarks", "data/landmarks.json"]);
    assert_eq!(measured.lines().count(), 1 + 12 * 5);
}

#[test]
fn leave_one_out_reports_every_model() {
    let d = pipeline().path();
    let table = ok(d, &["loo", "data", "--landmarks", "data/landmarks.json", "-M", "100", "--json", "loo.json"]);
    for model in ["BASE", "ANAT", "OC-ANAT"] {
        assert!(table.contains(model), "{model} missing from\n{table}");
    }
    let text = std::fs::read_to_string(d.join("loo.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.is_object() || v.is_array());
}

#[test]
fn usage_errors_exit_with_one() {
    let d = pipeline().path();
    assert_eq!(assm(d, &["sample"]).status.code(), Some(1));
    assert_eq!(assm(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(assm(d, &["sample", "anat.json"]).status.code(), Some(1));
    assert_eq!(assm(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn bad_inputs_exit_with_data_error() {
    let d = pipeline().path();
    assert_eq!(assm(d, &["build-base", "missing-dir", "-o", "x.json"]).status.code(), Some(2));
    let out = assm(d, &["sample", "anat.json", "--set", "XX=1", "-o", "xx.obj"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn project_config_supplies_defaults() {
    let d = pipeline().path();
    std::fs::write(
        d.join("project.json"),
        r#"{"dataset": "data", "landmarks": "data/landmarks.json", "population_size": 50, "seed": 9}"#,
    )
    .unwrap();
    ok(d, &["--config", "project.json", "build-base", "-o", "cfg_base.json"]);
    ok(d, &["--config", "project.json", "gen-pop", "cfg_base.json", "-o", "cfg_pop.csv"]);
    let rows = std::fs::read_to_string(d.join("cfg_pop.csv")).unwrap().lines().count();
    assert_eq!(rows, 51);
}
