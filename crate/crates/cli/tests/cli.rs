use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn tabbin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabbin"))
        .args(args)
        .env_remove("TABBIN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// 150 rows: two continuous features, one with three distinct values.
    fn new(task: &str, extra: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let mut csv = String::from("a,b,c,target\n");
        for i in 0..150 {
            let a = (i as f64 * 0.37).sin();
            let b = ((i * 7919) % 101) as f64 / 10.0;
            let c = (i % 3) as f64;
            let y = if task == "regression" {
                format!("{}", a + 0.5 * c)
            } else {
                format!("{}", i32::from(a > 0.0))
            };
            csv.push_str(&format!("{a},{b},{c},{y}\n"));
        }
        fs::write(dir.path().join("data.csv"), csv).unwrap();
        let config = format!(
            r#"{{
  "dataset": {{"path": "data.csv", "task": "{task}"}},
  "model": {{"hidden_dims": [16], "representation_dim": 8}},
  "pretrain": {{"epochs": 3, "lr": 0.001}},
  "probe": {{"lr": 0.01, "epochs": 5, "seeds": 3}},
  "finetune": {{"lr": 0.001, "epochs": 2, "seeds": 2}}{extra}
}}"#
        );
        fs::write(dir.path().join("config.json"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> String {
        self.dir.path().join("config.json").display().to_string()
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.config();
        let out = self.out().display().to_string();
        let mut all = vec!["--config", config.as_str(), "--out", out.as_str()];
        all.extend_from_slice(args);
        tabbin(&all)
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

/// Log lines minus the trailing wall-time field.
fn without_wall(log: &str) -> Vec<String> {
    log.lines().map(|l| l.rsplit_once(" wall=").unwrap().0.to_string()).collect()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

#[test]
fn bin_summary_and_determinism() {
    let f = Fixture::new("regression", "");
    let o = f.run(&["bin"]);
    ok(&o);
    assert!(stdout(&o).contains("c: 3 bins"), "{}", stdout(&o));
    assert!(stdout(&o).contains("a: 10 bins"));
    let first = fs::read(f.out().join("bins.txt")).unwrap();
    ok(&f.run(&["bin"]));
    assert_eq!(fs::read(f.out().join("bins.txt")).unwrap(), first);
    assert!(f.out().join("config.json").exists());
}

#[test]
fn one_bin_is_a_validation_error() {
    let f = Fixture::new("regression", r#", "binning": {"bins": 1}"#);
    let o = f.run(&["bin"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let f = Fixture::new("regression", r#", "epoch": 3"#);
    assert_eq!(f.run(&["bin"]).status.code(), Some(1));
}

#[test]
fn cli_usage_errors_exit_one() {
    assert_eq!(tabbin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tabbin(&["bin"]).status.code(), Some(1));
    assert_eq!(tabbin(&["--help"]).status.code(), Some(0));
}

#[test]
fn pretrain_requires_bins() {
    let f = Fixture::new("regression", "");
    let o = f.run(&["pretrain"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tabbin bin"), "{}", stderr(&o));
}

#[test]
fn value_recon_needs_no_bins() {
    let f = Fixture::new("regression", r#", "losses": [{"kind": "value_recon"}]"#);
    ok(&f.run(&["pretrain"]));
    assert!(f.out().join("model.tbck").exists());
}

#[test]
fn pipeline_bin_pretrain_eval() {
    let f = Fixture::new("regression", "");
    ok(&f.run(&["bin"]));
    ok(&f.run(&["pretrain"]));
    assert_eq!(f.read("train_log.txt").lines().count(), 3);
    let model = fs::read(f.out().join("model.tbck")).unwrap();
    let log = without_wall(&f.read("train_log.txt"));

    ok(&f.run(&["eval", "--mode", "probe"]));
    let report: serde_json::Value = serde_json::from_str(&f.read("eval_probe.json")).unwrap();
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 3);
    assert!(report["test"]["mean"].is_number());
    assert!(report["provenance"]["binning_hash"].is_string());
    assert!(f.read("eval_probe.csv").lines().count() >= 4);

    ok(&f.run(&["eval", "--mode", "finetune"]));
    assert!(f.out().join("eval_finetune.json").exists());

    ok(&f.run(&["eval", "--mode", "bin_error"]));
    let b: serde_json::Value = serde_json::from_str(&f.read("eval_bin_error.json")).unwrap();
    assert!(b["mse"]["mean"].as_f64().unwrap() >= 0.0);

    ok(&f.run(&["eval", "--mode", "pca"]));
    let coords = f.read("pca_coords.csv");
    assert_eq!(coords.lines().next(), Some("pc1,pc2,bin_index"));
    assert_eq!(coords.lines().count(), 151);

    // Same config and seed: identical checkpoint.
    ok(&f.run(&["pretrain"]));
    assert_eq!(fs::read(f.out().join("model.tbck")).unwrap(), model);
    assert_eq!(without_wall(&f.read("train_log.txt")), log);
}

#[test]
fn eval_refuses_mismatched_bins() {
    let f = Fixture::new("regression", "");
    ok(&f.run(&["bin"]));
    ok(&f.run(&["pretrain"]));
    let path = f.out().join("bins.txt");
    let before = fs::read_to_string(&path).unwrap();
    let meta = f.read("pretrain_meta.json");
    // Refit with a different bin count so the hash changes.
    let spec = tabbin::binning::BinningSpec::from_text(&before).unwrap();
    let other = tabbin::binning::BinningSpec::fit(
        tabbin::binning::BinMethod::Quantile,
        4,
        &tabbin::Matrix::from_fn(20, spec.n_features(), |r, c| (r * (c + 1)) as f64),
        tabbin::Exec::Sequential,
    )
    .unwrap();
    fs::write(&path, other.to_text()).unwrap();
    let o = f.run(&["eval", "--mode", "probe"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains(&spec.hash()) && err.contains(&other.hash()), "{err}");
    assert!(meta.contains(&spec.hash()));
}

#[test]
fn eval_without_checkpoint_fails() {
    let f = Fixture::new("regression", "");
    ok(&f.run(&["bin"]));
    assert_eq!(f.run(&["eval"]).status.code(), Some(1));
}

fn count_dirs(p: &Path) -> usize {
    fs::read_dir(p).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count()
}

#[test]
fn grid_cells_and_resume() {
    let grid = r#", "grid": {"p_m": [0.0, 0.3], "bins": [2, 5], "objectives": [[{"kind": "bin_recon"}]], "modes": ["random"]}"#;
    let f = Fixture::new("binclass", grid);
    ok(&f.run(&["grid"]));
    assert_eq!(count_dirs(&f.out().join("cells")), 4);
    let csv = f.read("grid.csv");
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("index,p_m,bins,objective,mode,status"));
    let best: serde_json::Value = serde_json::from_str(&f.read("best_config.json")).unwrap();
    assert!(best.get("grid").is_none());

    // Resume reuses reports; a deleted checkpoint is not recreated.
    let cell = fs::read_dir(f.out().join("cells")).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(cell.join("model.tbck")).unwrap();
    ok(&f.run(&["grid", "--resume"]));
    assert!(!cell.join("model.tbck").exists());
    assert_eq!(f.read("grid.csv"), csv);
}

#[test]
fn grid_without_section_fails() {
    let f = Fixture::new("regression", "");
    assert_eq!(f.run(&["grid"]).status.code(), Some(1));
}

#[test]
fn ablate_writes_signed_comparison() {
    let f = Fixture::new("regression", "");
    let o = f.run(&["ablate", "--which", "bin_averages"]);
    ok(&o);
    assert!(f.out().join("ablate/baseline/report.json").exists());
    let csv = f.read("ablate_bin_averages.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "variant,metric,val_mean,test_mean,test_std,change_pct");
    assert!(rows[1].starts_with("baseline,rmse,") && rows[1].ends_with(",+0.0000"));
    let last = rows[2].rsplit(',').next().unwrap();
    assert!(last.starts_with('+') || last.starts_with('-'), "{last}");

    // Baseline is reused by later ablations.
    let mtime = fs::metadata(f.out().join("ablate/baseline/report.json")).unwrap().modified().unwrap();
    ok(&f.run(&["ablate", "--which", "equal_width"]));
    ok(&f.run(&["ablate", "--which", "shuffle_order"]));
    ok(&f.run(&["ablate", "--which", "per_value"]));
    let again = fs::metadata(f.out().join("ablate/baseline/report.json")).unwrap().modified().unwrap();
    assert_eq!(mtime, again);
}

#[test]
fn seed_flag_overrides_config() {
    let f = Fixture::new("regression", "");
    ok(&f.run(&["--seed", "9", "bin"]));
    let echoed: serde_json::Value = serde_json::from_str(&f.read("config.json")).unwrap();
    assert_eq!(echoed["seed"], 9);
}

#[test]
fn threads_env_fallback() {
    let f = Fixture::new("regression", "");
    let out = f.out().display().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_tabbin"))
        .args(["--config", &f.config(), "--out", &out, "bin"])
        .env("TABBIN_THREADS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
