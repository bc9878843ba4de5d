use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn conef(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conef")).args(args).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SMALL_RUN: &str = r#"
seed = 3
workers = 2
batch = 4
steps = 120
eval_every = 20

[problem]
kind = "least_squares"
n = 30
d = 60
seed = 1

[optimizer]
algorithm = "partial"
lr = 0.02
beta = 0.9
grad_compressor = { kind = "random_block_k", k = 0.1, scaled = false }
error_compressor = { kind = "count_sketch", rows = 1, width = 0.2 }
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn verify_passes_and_prints_json() {
    let out = conef(&["verify", "--suite", "reductions"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"passed\": true"));
    assert!(String::from_utf8(out.stderr).unwrap().lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn verify_all_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = conef(&["verify", "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(report).unwrap(), out.stdout.strip_suffix(b"\n").unwrap());
}

#[test]
fn unknown_suite_is_a_config_error() {
    assert_eq!(conef(&["verify", "--suite", "everything"]).status.code(), Some(1));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_RUN);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = conef(&["run", "--config", &cfg, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("step,train_loss,grad_norm_sq,comm_bytes_cum,aux_bytes,eval_metric,rowspace_residual\n"));
    assert_eq!(text.lines().count(), 1 + 1 + 120 / 20);
}

#[test]
fn seed_and_worker_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_RUN);
    let base = dir.path().join("base.csv");
    let seeded = dir.path().join("seeded.csv");
    let wide = dir.path().join("wide.csv");
    conef(&["run", "--config", &cfg, "--out", base.to_str().unwrap()]);
    conef(&["--seed", "99", "run", "--config", &cfg, "--out", seeded.to_str().unwrap()]);
    conef(&["run", "--config", &cfg, "--out", wide.to_str().unwrap(), "--workers", "3"]);
    let base = fs::read(base).unwrap();
    assert_ne!(base, fs::read(seeded).unwrap());
    assert_ne!(base, fs::read(wide).unwrap());
}

#[test]
fn bad_configs_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL_RUN.replace("eval_every = 20", "eval_every = 20\nlearning_rate = 1"));
    let out = conef(&["run", "--config", &cfg, "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("learning_rate"));
    let missing = conef(&["run", "--config", "/nonexistent/run.toml", "--out", "x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(conef(&["run"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", &SMALL_RUN.replace("lr = 0.02", "lr = 10.0").replace("steps = 120", "steps = 2000"));
    let csv = dir.path().join("hot.csv");
    let out = conef(&["run", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(csv).unwrap().lines().count() >= 2);
}

#[test]
fn sweep_writes_cells_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut grid = String::from("[base]\n");
    for line in SMALL_RUN.lines() {
        match line.strip_prefix('[') {
            Some(table) => grid.push_str(&format!("[base.{table}\n")),
            None => grid.push_str(&format!("{line}\n")),
        }
    }
    grid.push_str("[axes]\n\"optimizer.lr\" = [0.02, 10.0]\n");
    let grid = write(dir.path(), "grid.toml", &grid.replace("steps = 120", "steps = 2000"));
    let out_dir = dir.path().join("sweep");
    let out = conef(&["sweep", "--grid", &grid, "--out-dir", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,0.02,ok,"));
    assert!(lines[2].starts_with("1,10.0,diverged"));
}

#[test]
fn shipped_sweep_grid_has_81_cells() {
    let dir = tempfile::tempdir().unwrap();
    let grid = fs::read_to_string(configs().join("beta_vs_width.toml")).unwrap().replace("steps = 3000", "steps = 10");
    let grid = write(dir.path(), "grid.toml", &grid);
    let out_dir = dir.path().join("sweep");
    let out = conef(&["sweep", "--grid", &grid, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 82);
}

#[test]
fn empty_grid_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write(dir.path(), "empty.toml", "");
    let out_dir = dir.path().join("sweep");
    let out = conef(&["sweep", "--grid", &grid, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out_dir.join("summary.csv")).unwrap().lines().count(), 1);
}
