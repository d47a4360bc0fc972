use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use floqskin::dynamics::InitialState;
use floqskin::harness::{self, Experiment, ExperimentConfig};
use floqskin::{Boundary, Flux, ModelParams};
use serde_json::Value;

fn small() -> ModelParams {
    ModelParams { n_cells: 12, ..ModelParams::reference() }
}

fn files_on_disk(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(harness::MANIFEST)).unwrap()).unwrap()
}

/// Cheap configurations covering every experiment.
fn catalog() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for exp in Experiment::ALL {
        let mut c = ExperimentConfig::new(exp, small());
        c.floquet.n_steps = 60;
        c.bands.n_k = 21;
        c.spectrum.n_k_pbc = 61;
        c.spectrum.n_k_bands = 31;
        c.gbz.n_kappa = 13;
        c.gbz.n_k = 91;
        c.dynamics.initial = InitialState::Delta { x0: 18 };
        c.dynamics.n_periods = 30;
        c.decay.n_periods = 50;
        c.decay.sub_periods = (10, 11);
        c.sweep.gammas = vec![0.0, -0.6, -1.2];
        c.symmetry.n_samples = 4;
        c.phi_scan.n_phi = 4;
        match exp {
            Experiment::PhiScan => {
                c.model.omega = 0.0;
                c.model.boundary = Boundary::Obc;
            }
            Experiment::Impurity => c.model.impurities = vec![(12, 0.1)],
            Experiment::Incommensurate => {
                c.model = ModelParams {
                    flux: Flux::Real(0.49),
                    gamma: vec![-1.2, 0.0],
                    n_cells: 60,
                    boundary: Boundary::Obc,
                    dissipation_period: Some(2),
                    ..ModelParams::reference()
                };
                c.near_half.deviations = vec![-0.01, -0.02];
            }
            _ => {}
        }
        out.push(c);
    }
    out
}

#[test]
fn every_experiment_lists_exactly_its_files() {
    for cfg in catalog() {
        let dir = tempfile::tempdir().unwrap();
        let m = match harness::run(&cfg, dir.path()) {
            Ok(m) => m,
            // A short impurity run may end before the packet arrives.
            Err(floqskin::Error::Inconclusive { .. }) if cfg.experiment == Experiment::Impurity => continue,
            Err(e) => panic!("{}: {e}", cfg.experiment),
        };
        let mut listed: BTreeSet<String> = m.files.iter().map(|f| f.name.clone()).collect();
        listed.insert(harness::MANIFEST.to_string());
        assert_eq!(listed, files_on_disk(dir.path()), "{}", cfg.experiment);
        assert_eq!(manifest(dir.path())["config_hash"], cfg.hash());
        for f in &m.files {
            if f.name.ends_with(".csv") {
                let text = fs::read_to_string(dir.path().join(&f.name)).unwrap();
                assert!(text.lines().count() >= 2, "{}: {} has no rows", cfg.experiment, f.name);
            }
        }
    }
}

#[test]
fn identical_configs_give_identical_csvs() {
    let mut cfg = ExperimentConfig::new(Experiment::SymmetryCheck, small());
    cfg.floquet.n_steps = 40;
    cfg.bands.n_k = 21;
    cfg.seed = 11;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = harness::run(&cfg, a.path()).unwrap();
    let mb = harness::run(&cfg, b.path()).unwrap();
    for (fa, fb) in ma.files.iter().zip(&mb.files) {
        assert_eq!(fa.name, fb.name);
        assert_eq!(fa.sha256, fb.sha256, "{}", fa.name);
    }
    cfg.seed = 12;
    let c = tempfile::tempdir().unwrap();
    let mc = harness::run(&cfg, c.path()).unwrap();
    let sym = |m: &harness::RunManifest| m.files.iter().find(|f| f.name == "symmetry.csv").unwrap().sha256.clone();
    assert_ne!(sym(&ma), sym(&mc), "seed must change the sampled momenta");
}

#[test]
fn evolution_is_deterministic() {
    let mut cfg = ExperimentConfig::new(Experiment::Evolve, small());
    cfg.dynamics.initial = InitialState::gaussian(18, 2.0);
    cfg.dynamics.n_periods = 25;
    cfg.dynamics.random_u_vec = true;
    cfg.seed = 3;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    harness::run(&cfg, a.path()).unwrap();
    harness::run(&cfg, b.path()).unwrap();
    for name in ["evolution.csv", "trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn failed_run_keeps_partial_output_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(harness::MANIFEST), "{}").unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Spectrum, small());
    cfg.spectrum.dense_cap = 10;
    assert!(harness::run(&cfg, dir.path()).is_err());
    assert!(dir.path().join("config.json").exists());
    assert!(!dir.path().join(harness::MANIFEST).exists());
}

#[test]
fn validation_happens_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut cfg = ExperimentConfig::new(Experiment::GammaSweep, small());
    cfg.sweep.gammas = vec![-0.5, -1.0];
    assert!(harness::run(&cfg, &out).unwrap_err().is_config());
    assert!(!out.exists());
}

#[test]
fn hash_ignores_key_order_and_output_dir() {
    let cfg = ExperimentConfig::new(Experiment::Decay, small());
    let text = serde_json::to_string(&cfg.to_value()).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let Value::Object(map) = v else { unreachable!() };
    let reversed: serde_json::Map<String, Value> = map.into_iter().rev().collect();
    let mut again = ExperimentConfig::from_value(Value::Object(reversed)).unwrap();
    assert_eq!(again.hash(), cfg.hash());
    again.output_dir = Some("/elsewhere".into());
    assert_eq!(again.hash(), cfg.hash());
    again.seed = 1;
    assert_ne!(again.hash(), cfg.hash());
}

#[test]
fn presets_validate_and_round_trip() {
    for p in harness::PRESETS {
        let c = p.config();
        c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c.to_value()).unwrap()).unwrap();
        assert_eq!(back, c, "{}", p.name);
    }
    let fig3 = harness::find_preset("fig3").unwrap().config();
    assert_eq!(fig3.model.gamma[0], -1.2);
    assert!((fig3.model.period().unwrap() - 5.0 * std::f64::consts::PI).abs() < 1e-12);
    let r1 = harness::find_preset("figR1").unwrap().config();
    assert_eq!(r1.sweep.omegas, vec![0.4, 1.2]);
    let names: Vec<&str> = harness::list_presets().iter().map(|p| p.0).collect();
    assert_eq!(names.len(), 11);
}

#[test]
fn overrides_parse_json_values() {
    let cfg = ExperimentConfig::new(Experiment::Evolve, small());
    let c = cfg.with_override("model.boundary=OBC").unwrap();
    assert_eq!(c.model.boundary, Boundary::Obc);
    let c = cfg.with_override("dynamics.initial={\"kind\":\"delta\",\"x0\":4}").unwrap();
    assert_eq!(c.dynamics.initial, InitialState::Delta { x0: 4 });
    assert!(cfg.with_override("model.gamma=7").unwrap_err().is_config());
    assert!(cfg.with_override("no_equals_sign").unwrap_err().is_config());
}
