//! Batch runs: determinism, manifest replay and artifact layout.

use std::path::Path;

use serde_json::json;

use qspde::ensemble::{run_ensemble, run_sample, sample_file, write_run, write_sample_csv, Manifest, RunConfig, SampleOutcome};

fn config(samples: usize, seed: u64) -> RunConfig {
    RunConfig::from_json(
        &json!({
            "schema_version": 1,
            "model": "skt",
            "params": {"sigma0": 0.05},
            "grid": {"horizon": 0.02, "h": 5e-4, "modes": 8},
            "ensemble": {"samples": samples, "master_seed": seed},
            "thresholds": [1.0, 2.0]
        })
        .to_string(),
    )
    .unwrap()
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap()
}

#[test]
fn repeated_runs_write_identical_artifacts() {
    let prepared = config(4, 3).prepare().unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = write_run(&run_ensemble(&prepared, 2).unwrap(), &prepared.model.spec, d1.path()).unwrap();
    let m2 = write_run(&run_ensemble(&prepared, 3).unwrap(), &prepared.model.spec, d2.path()).unwrap();
    assert_eq!(m1.artifacts, m2.artifacts);
    for a in &m1.artifacts {
        assert_eq!(read(d1.path(), a), read(d2.path(), a), "{a} differs");
    }
}

#[test]
fn different_seeds_give_different_samples() {
    let a = config(1, 1).prepare().unwrap();
    let b = config(1, 2).prepare().unwrap();
    let ta = run_sample(&a, 0).trajectory.unwrap();
    let tb = run_sample(&b, 0).trajectory.unwrap();
    assert!(ta.sup_distance(&tb) > 0.0);
}

#[test]
fn manifest_replays_every_sample() {
    let prepared = config(3, 5).prepare().unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(&run_ensemble(&prepared, 2).unwrap(), &prepared.model.spec, dir.path()).unwrap();
    let manifest: Manifest = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest.samples.len(), 3);
    let replayed = manifest.config.prepare().unwrap();
    for rec in &manifest.samples {
        assert_ne!(rec.outcome, SampleOutcome::Failed);
        let run = run_sample(&replayed, rec.index);
        let rel = format!("replay/{:04}.csv", rec.index);
        write_sample_csv(dir.path(), &rel, run.trajectory.as_ref().unwrap()).unwrap();
        assert_eq!(read(dir.path(), &rel), read(dir.path(), &sample_file(rec.index)));
    }
}

#[test]
fn persisted_config_echoes_defaults() {
    let prepared = config(1, 0).prepare().unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(&run_ensemble(&prepared, 1).unwrap(), &prepared.model.spec, dir.path()).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
    let params = &v["config"]["params"];
    for key in ["k1", "gamma22", "s_q", "amplitude", "length"] {
        assert!(params.get(key).is_some(), "missing defaulted parameter {key}");
    }
    assert!(v["config"]["solver"].get("tol").is_some());
    assert!(v.get("threads").is_none());
}
