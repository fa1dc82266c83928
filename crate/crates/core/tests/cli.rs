use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hjsolve"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn exit_code(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    out.status.code().unwrap()
}

// Everything after the metadata line, which carries a timestamp.
fn body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with('#'), "{} lacks a metadata line", path.display());
    text.split_once('\n').unwrap().1.to_string()
}

fn tiny_train_config(dir: &Path) -> PathBuf {
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(config("eikonal_square.json")).unwrap()).unwrap();
    for stage in cfg["schedule"].as_array_mut().unwrap() {
        stage["iterations"] = 40.into();
    }
    cfg["evaluation"]["samples"] = 2000.into();
    cfg["evaluation"]["residual_resolution"] = 8.into();
    let path = dir.join("tiny.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn reruns_produce_identical_csv_bodies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_train_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let out = out.to_str().unwrap();
        assert_eq!(exit_code(&["train", "--config", cfg, "--seed", "3", "--out", out]), 0);
        let theta = format!("{out}/theta_seed3.hjnn");
        assert_eq!(exit_code(&["evaluate", "--config", cfg, "--theta", &theta, "--out", out]), 0);
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for file in ["trace_seed3.csv", "residual_field.csv", "residual_section.csv"] {
        assert_eq!(body(&a.join(file)), body(&b.join(file)), "{file} differs between runs");
    }
    assert_eq!(fs::read(a.join("theta_seed3.hjnn")).unwrap(), fs::read(b.join("theta_seed3.hjnn")).unwrap());
}

#[test]
fn oracle_writes_its_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(exit_code(&["oracle", "--config", config("grid_oracle.json").to_str().unwrap(), "--out", out]), 0);
    let rows: Vec<_> = body(&tmp.path().join("oracle.csv")).lines().skip(1).map(str::to_owned).collect();
    assert_eq!(rows.len(), 4);
    assert!(tmp.path().join("solution_d2_n12.csv").exists());
}

#[test]
fn bad_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let eik = config("eikonal_square.json");
    let eik = eik.to_str().unwrap();
    assert_eq!(exit_code(&["train", "--config", "/nonexistent/config.json"]), 2);
    assert_eq!(exit_code(&["frobnicate"]), 2);

    let garbage = tmp.path().join("garbage.hjnn");
    fs::write(&garbage, b"not a parameter file").unwrap();
    assert_eq!(exit_code(&["evaluate", "--config", eik, "--theta", garbage.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(exit_code(&["evaluate", "--config", eik, "--theta", "/nonexistent.hjnn", "--out", out]), 2);

    let typo = tmp.path().join("typo.json");
    let text = fs::read_to_string(eik).unwrap().replace("\"seeds\"", "\"seedz\"");
    fs::write(&typo, text).unwrap();
    assert_eq!(exit_code(&["train", "--config", typo.to_str().unwrap(), "--out", out]), 2);
}

#[test]
fn numerical_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config("grid_oracle.json")).unwrap()).unwrap();
    cfg["oracle"]["cases"] = serde_json::json!([{"dim": 2, "n": 12, "alpha": 1.0, "max_iters": 2, "tol": 1e-14}]);
    let path = tmp.path().join("starved.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(exit_code(&["oracle", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = hjsolve::cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.build_problem().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
