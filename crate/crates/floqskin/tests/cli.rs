use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn floqskin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floqskin")).args(args).output().unwrap()
}

fn small_bands_config(dir: &Path) -> String {
    let path = dir.join("cfg.json");
    fs::write(
        &path,
        r#"{
  "experiment": "bands",
  "model": {"u": 1.0, "v": 1.0, "flux": {"rational": [1, 3]}, "omega": 0.4,
            "gamma": [-1.2, 0.0, 0.0], "n_cells": 10},
  "floquet": {"n_steps": 60},
  "bands": {"n_k": 31}
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn empty_experiment_name_exits_with_config_error() {
    let o = floqskin(&[]);
    assert_eq!(code(&o), 2);
    let o = floqskin(&["", "--out", "/tmp/never"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_name_and_unknown_flag() {
    let o = floqskin(&["fig99", "--out", "/tmp/never"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig99"));
    assert_eq!(code(&floqskin(&["bands", "--bogus"])), 2);
}

#[test]
fn list_presets_names_every_figure() {
    let o = floqskin(&["--list-presets"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig1c", "fig1d", "fig1e", "fig1f", "fig2", "fig3", "figS0", "figS2", "figS3", "incomm-half", "figR1"] {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name} missing");
    }
}

#[test]
fn bands_run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bands_config(dir.path());
    let out = dir.path().join("out");
    let o = floqskin(&["bands", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bands.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "k,band_index,re_eps,im_eps,velocity");
    assert_eq!(csv.lines().count(), 1 + 3 * 31);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["experiment"], "bands");
    assert!(m["convergence"]["floquet_step_doubling"].as_f64().unwrap() < 1e-3);
}

#[test]
fn overrides_apply_and_bad_ones_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_bands_config(dir.path());
    let out = dir.path().join("out");
    let o = floqskin(&["bands", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "bands.n_k=11"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("bands.csv")).unwrap().lines().count(), 1 + 3 * 11);

    let o = floqskin(&["bands", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "bands.n_kk=11"]);
    assert_eq!(code(&o), 2);
    let o = floqskin(&["bands", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "model.n_cells=0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment `bands`"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"experiment": "bands", "model": {"u": 1.0, "v": 1.0, "flux": {"rational": [1, 3]}, "omega": 0.4,
            "gamma": [-1.2, 0.0, 0.0], "n_cells": 10}, "bands": {"n_k": 31, "extra": 1}}"#,
    )
    .unwrap();
    let o = floqskin(&["bands", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));
}

#[test]
fn rational_only_experiment_on_irrational_flux_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"experiment": "bands", "model": {"u": 1.0, "v": 1.0, "flux": {"real": 0.3330}, "omega": 0.4,
            "gamma": [-1.2, 0.0, 0.0], "n_cells": 30}}"#,
    )
    .unwrap();
    let o = floqskin(&["bands", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn preset_with_config_merges_on_top() {
    let dir = tempfile::tempdir().unwrap();
    let patch = dir.path().join("patch.json");
    fs::write(&patch, r#"{"model": {"n_cells": 12}, "phi_scan": {"n_phi": 5}}"#).unwrap();
    let out = dir.path().join("out");
    let o = floqskin(&["figS0", "--config", patch.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("phi_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 36);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["preset"], "figS0");
}
