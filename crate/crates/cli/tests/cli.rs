use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
id = "cli-small"
[operator]
dim = 2
[simulation]
dt = 0.001
[experiment]
estimator = "exit_moment"
x0 = [0, 0]
domain = { shape = "ball", center = [0, 0], radius = 0.25 }
[run]
n_paths = 200
seed = 1
"#;

fn jumplab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumplab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("JUMPLAB_OUT_DIR")
        .output()
        .unwrap()
}

#[test]
fn lists_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let out = jumplab(&["list-builtins"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["rotating-anisotropy", "counterexample-s7", "tube_probability", "zero-drift"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn validate_reports_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SMALL).unwrap();
    let out = jumplab(&["validate", good.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL.replace("n_paths = 200", "n_paths = 0").replace("dt = 0.001", "dt = -1")).unwrap();
    let out = jumplab(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("run.n_paths"), "{text}");
    assert!(text.contains("simulation.dt"), "{text}");
}

#[test]
fn run_writes_identical_reports_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cli-small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let outdir = dir.path().join("out");
    let args = ["--threads", "2", "run", cfg.to_str().unwrap(), "--out", outdir.to_str().unwrap()];
    assert!(jumplab(&args, dir.path()).status.success());
    let first = std::fs::read(outdir.join("cli-small.csv")).unwrap();
    assert!(outdir.join("cli-small.summary.txt").exists());
    assert!(jumplab(&args, dir.path()).status.success());
    assert_eq!(first, std::fs::read(outdir.join("cli-small.csv")).unwrap());
}

#[test]
fn output_directory_falls_back_to_the_environment_then_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cli-small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let env_dir = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_jumplab"))
        .args(["run", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("JUMPLAB_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("cli-small.csv").exists());
    assert!(jumplab(&["run", cfg.to_str().unwrap()], dir.path()).status.success());
    assert!(dir.path().join("reports/cli-small.csv").exists());
}

#[test]
fn strict_mode_rejects_censored_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let frozen = SMALL.replace("dim = 2\n", "dim = 2\ndiffusion = { name = \"zero\" }\n");
    let cfg = dir.path().join("frozen.toml");
    std::fs::write(&cfg, frozen.replace("[run]", "[run]\nstrict = true")).unwrap();
    let out = jumplab(&["run", cfg.to_str().unwrap(), "--out", "o"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert_ne!(out.status.code(), Some(0), "{text}");
}

#[test]
fn run_all_covers_every_file() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["a", "b"] {
        std::fs::write(dir.path().join(format!("{id}.toml")), SMALL.replace("cli-small", id)).unwrap();
    }
    let out = jumplab(&["run-all", ".", "--out", "o"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("o/a.csv").exists() && dir.path().join("o/b.csv").exists());
}

#[test]
fn dump_paths_writes_tagged_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cli-small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = jumplab(&["run", cfg.to_str().unwrap(), "--out", "o", "--dump-paths", "2"], dir.path());
    assert!(out.status.success());
    let p = std::fs::read_to_string(dir.path().join("o/cli-small.paths/path_1.csv")).unwrap();
    assert!(p.starts_with("t,x_1,x_2,jump_tag\n"));
}
