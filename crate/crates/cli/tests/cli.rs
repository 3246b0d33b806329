use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmavae(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmavae"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CMAVAE_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const CONFIG: &str = r#"
name = "cli"
reps = 2
draws = 20
estimators = ["cmavae", "lsem"]
[dgp]
kind = "synthetic"
n = [200, 300]
[model]
z_dim = 2
hidden_layers = 1
layer_size = 8
[train]
epochs = 2
"#;

#[test]
fn simulate_train_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), CONFIG).unwrap();
    ok(&cmavae(&["simulate", "--config", "c.toml", "--out", "sim", "--cell", "1"], d));
    assert!(d.join("sim/dataset.csv").exists());
    assert!(d.join("sim/truth.json").exists());
    let rows = fs::read_to_string(d.join("sim/dataset.csv")).unwrap().lines().count();
    assert_eq!(rows, 301);

    ok(&cmavae(&["train", "--config", "c.toml", "--data", "sim/dataset.csv", "--out", "m.json"], d));
    let out = cmavae(
        &["estimate", "--config", "c.toml", "--data", "sim/dataset.csv", "--model", "m.json", "--truth", "sim/truth.json"],
        d,
    );
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let e = &report["estimate"];
    let sum = e["acme_treated"].as_f64().unwrap() + e["acde_control"].as_f64().unwrap();
    assert!((e["ate"].as_f64().unwrap() - sum).abs() <= 1e-12);
    assert!(report["abs_errors"]["ate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn experiment_writes_outputs_and_seed_override_changes_them() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), CONFIG).unwrap();
    ok(&cmavae(&["experiment", "--config", "c.toml", "--out", "a"], d));
    ok(&cmavae(&["experiment", "--config", "c.toml", "--out", "b"], d));
    ok(&cmavae(&["experiment", "--config", "c.toml", "--out", "c", "--seed", "9"], d));
    let a = fs::read(d.join("a/results.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/results.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c/results.csv")).unwrap());
    for f in ["summary.json", "plotdata/acme.csv", "plotdata/acde.csv", "plotdata/ate.csv"] {
        assert!(d.join("a").join(f).exists(), "{f}");
    }
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn percent_flag_scales_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), CONFIG.replace("[\"cmavae\", \"lsem\"]", "[\"lsem\"]")).unwrap();
    ok(&cmavae(&["experiment", "--config", "c.toml", "--out", "raw"], d));
    ok(&cmavae(&["experiment", "--config", "c.toml", "--out", "pct", "--percent"], d));
    let last = |p: &str| -> f64 {
        let t = fs::read_to_string(d.join(p)).unwrap();
        t.lines().nth(1).unwrap().split(',').next_back().unwrap().parse().unwrap()
    };
    assert_eq!(last("pct/results.csv"), last("raw/results.csv") * 100.0);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "estimators = []\nreps = 1\n[dgp]\nkind = \"synthetic\"\nn = 100\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cmavae"))
        .args(["experiment", "--config", "c.toml"])
        .current_dir(d)
        .env("CMAVAE_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    ok(&out);
    assert!(d.join("from_env/results.csv").exists());
    assert!(d.join("from_env/summary.json").exists());
}

#[test]
fn hard_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = cmavae(&["experiment", "--config", "nope.toml"], d);
    assert_eq!(missing.status.code(), Some(1));
    fs::write(d.join("bad.toml"), "reps = 0\n[dgp]\nkind = \"synthetic\"\n").unwrap();
    assert_eq!(cmavae(&["experiment", "--config", "bad.toml"], d).status.code(), Some(1));
    fs::write(d.join("typo.toml"), "repz = 1\n[dgp]\nkind = \"synthetic\"\n").unwrap();
    let typo = cmavae(&["experiment", "--config", "typo.toml"], d);
    assert_eq!(typo.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("repz"));
}

#[test]
fn fairness_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "draws = 10\n[dgp]\nkind = \"fairness_csv\"\nn = 2000\n[train]\nepochs = 2\n";
    fs::write(d.join("f.toml"), cfg).unwrap();
    ok(&cmavae(&["fairness", "--config", "f.toml", "--out", "fair"], d));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("fair/fairness.json")).unwrap()).unwrap();
    assert_eq!(report["n_eval"], 400);
    let dp = report["classifier"]["dp"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&dp));
    assert!(report["ground_truth_dp"].as_f64().is_some());
}
