use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracheat"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const BASE: &str = r#"
seed = 3

[grid]
half_width = 4.0
points = 65

[time]
steps = 16

[operator]
s = 0.5
"#;

const REGIONS: &str = r#"
[regions]
control = [[1.5, 2.5]]
"#;

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("exp.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn order_out_of_range_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &BASE.replace("s = 0.5", "s = 1.2"));
    let o = run("operator", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("operator.s"));
}

#[test]
fn control_without_epsilon_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let text = format!("{BASE}{REGIONS}\n[target]\nprofile = \"h1_bump\"\n");
    let cfg = write_config(&dir, &text);
    assert_eq!(code(&run("control", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn wave_rejects_h1_target_before_compute() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "{}{REGIONS}\n[target]\nprofile = \"h1_bump\"\nepsilon = 0.5\nrelative = true\n",
        BASE.replace("s = 0.5", "s = 0.5\nequation = \"wave\"")
    );
    let cfg = write_config(&dir, &text);
    let out = dir.path().join("out");
    let o = run("control", &cfg, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("h2_bump"));
    assert!(!out.join("control.json").exists());
}

#[test]
fn empty_deltas_are_rejected() {
    let dir = TempDir::new().unwrap();
    let text = format!("{BASE}{REGIONS}\n[extension]\ndeltas = []\n");
    let cfg = write_config(&dir, &text);
    assert_eq!(code(&run("smallness", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{BASE}\nbogus = 1\n"));
    assert_eq!(code(&run("operator", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn missing_config_flag_fails_with_code_two() {
    let o = bin().arg("operator").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn operator_runs_without_regions() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, BASE);
    let out = dir.path().join("out");
    let o = run("operator", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["operator.json", "manifest.json", "timing.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn sweep_writes_monotone_costs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("sweep", &configs().join("sweep_s05.cfg"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    let costs: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] >= w[0]), "{costs:?}");
    assert!(rows.iter().all(|r| r[6] == "true"));
}

#[test]
fn gramian_values_are_sorted() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("gramian", &configs().join("gramian_coarse.cfg"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sv: Vec<f64> = csv_rows(&out.join("gramian.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(!sv.is_empty());
    assert!(sv.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn gramian_budget_is_enforced() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &format!("{BASE}{REGIONS}\n[gramian]\nbudget = 10\n"));
    assert_eq!(code(&run("gramian", &cfg, &dir.path().join("out"), &[])), 2);
}

#[test]
fn manifest_records_seed_and_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, BASE);
    let read = |name: &str, extra: &[&str]| -> serde_json::Value {
        let out = dir.path().join(name);
        assert_eq!(code(&run("operator", &cfg, &out, extra)), 0);
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
    };
    let a = read("a", &[]);
    let b = read("b", &["--seed", "11"]);
    assert_eq!(a["command"], "operator");
    assert_eq!(a["seed"], 3);
    assert_eq!(b["seed"], 11);
    assert_eq!(a["config_sha256"].as_str().unwrap().len(), 64);
    assert_ne!(a["config_sha256"], b["config_sha256"]);
    let listed: Vec<&str> = a["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"operator.json"));
}

#[test]
fn control_writes_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("control", &configs().join("heat_s05.cfg"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["control.json", "control.csv", "residual.csv", "minimizer.csv", "history.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("control.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["converged"], true);
}
