use std::path::Path;
use std::process::{Command, Output};

fn pwfwi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwfwi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

const CONFIG: &str = r#"
[grid]
true_model = "model_slowness.bin"
pml_width = 10

[acquisition]
data = "data.csv"
sources = { layout = "cells", cells = [0] }
receivers = { layout = "line", step = 4 }

[schedule]
batches = [[4.0]]
k_max = 12
eps_b = 0.0
eps_d = 0.0

[regularizer]
kind = "tv"
alpha_grid = [0.5]
compare = ["tikhonov", "tv", "tv"]

[bounds]
mode = "benchmark"
"#;

fn setup(dir: &Path, config: &str) {
    let out = pwfwi(
        dir,
        &["synth", "--kind", "piecewise-constant", "--nx", "80", "--h", "15", "--seed", "4", "--out-dir", "."],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.join("run.toml"), config).unwrap();
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = pwfwi(d, &["synth", "--kind", "gradient-inclusion", "--nx", "30", "--nz", "20", "--seed", "9"]);
        assert_eq!(code(&out), 0);
    }
    for f in ["model_velocity.bin", "model_slowness.bin"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn simulate_invert_compare_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, CONFIG);
    assert_eq!(code(&pwfwi(dir, &["simulate", "--config", "run.toml"])), 0);
    let data = std::fs::read_to_string(dir.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 1 + 20);

    let out = pwfwi(dir, &["invert", "--config", "run.toml", "--out-dir", "a"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = pwfwi(dir, &["--threads", "1", "invert", "--config", "run.toml", "--out-dir", "b"]);
    assert_eq!(code(&out), 0);
    let log_a = std::fs::read(dir.join("a/convergence.csv")).unwrap();
    assert_eq!(log_a, std::fs::read(dir.join("b/convergence.csv")).unwrap());
    let text = String::from_utf8(log_a).unwrap();
    assert!(text.starts_with("iter,batch,data_res,wave_res,model_err,reg_value,stop\n"));
    assert_eq!(text.lines().count(), 13);
    assert!(text.lines().last().unwrap().ends_with(",max_iterations"));
    let header = std::fs::read_to_string(dir.join("a/run_header.txt")).unwrap();
    for key in ["config.regularizer.kind", "batch.0.gamma", "batch.0.mu@4", "batch.0.lambda@4", "batch.0.zeta"] {
        assert!(header.contains(key), "{key} missing from header");
    }

    let out = pwfwi(dir, &["error", "a/model_slowness.bin", "model_slowness.bin"]);
    assert_eq!(code(&out), 0);
    let e: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(e > 0.0 && e < 1.0);
    let out = pwfwi(dir, &["error", "model_velocity.bin", "model_slowness.bin"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "0");

    let out = pwfwi(dir, &["compare", "--config", "run.toml", "--out-dir", "c"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.join("c/comparison.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    // The same kind listed twice gives the same error.
    assert_eq!(rows[1][2], rows[2][2]);
    assert!(rows.iter().any(|r| r[3] == "1"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir, &CONFIG.replace("kind = \"tv\"", "kind = \"tv\"\nlambda = 3"));
    let out = pwfwi(dir, &["invert", "--config", "run.toml"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    std::fs::write(dir.join("run.toml"), CONFIG).unwrap();
    let out = pwfwi(dir, &["invert", "--config", "run.toml"]);
    assert_eq!(code(&out), 2, "missing data file");
    assert!(String::from_utf8_lossy(&out.stderr).contains("acquisition.data"));

    let out = pwfwi(dir, &["invert", "--config", "nope.toml"]);
    assert_eq!(code(&out), 2);
    let out = pwfwi(dir, &["synth", "--vmax", "9000"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn silent_source_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(
        dir,
        &CONFIG.replace("receivers = {", "source_amplitude = 0.0\nreceivers = {"),
    );
    assert_eq!(code(&pwfwi(dir, &["simulate", "--config", "run.toml"])), 0);
    let data = std::fs::read_to_string(dir.join("data.csv")).unwrap();
    for line in data.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, [0.0, 0.0]);
    }
    let out = pwfwi(dir, &["invert", "--config", "run.toml"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
