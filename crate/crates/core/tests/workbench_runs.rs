use num_complex::Complex64;
use pwfwi::helmholtz::{Acquisition, Pml, Source};
use pwfwi::irwri::Survey;
use pwfwi::workbench::run::{write_model, PreparedRun};
use pwfwi::workbench::{invert, simulate, simulate_data, synth_model, SynthKind, SynthParams};
use pwfwi::ModelGrid;

/// Every key of the run config, set to a non-default value where possible.
const FULL_CONFIG: &str = r#"
[grid]
true_model = "true_slowness.bin"
initial_model = "start_slowness.bin"
start = "file"
start_velocity = [1800.0, 3200.0]
pml_width = 12
pml_reflection = 0.002
pml_velocity = 2100.0

[acquisition]
data = "data.csv"
sources = { layout = "cells", cells = [0, 30] }
receivers = { layout = "line", depth = 0, first = 2, step = 4, count = 15 }
peak_frequency = 8.0
source_amplitude = 2.0

[schedule]
batches = [[3.0], [3.0, 4.5]]
k_max = 2
eps_b = 0.002
eps_d = 0.00002
paths = 2
bounds_from = 1

[regularizer]
kind = "tgv"
alpha = 0.4
mixed_hessian = true
alpha_grid = [0.25, 0.75]
compare = ["tv", "tt"]

[penalties]
gamma_rel = 2.0
admm_rel = 0.5
eps_rel = 1e-7
data_weight_rel = 3.0
inner_iterations = 4
model_scale_rel = 0.8

[bounds]
mode = "velocity"
lower_factor = 0.6
upper_factor = 1.4
vmin = 1200.0
vmax = 5000.0

[output]
dir = "out"
per_batch_models = true
"#;

fn leaves(prefix: &str, v: &toml::Value, out: &mut Vec<(String, toml::Value)>) {
    match v {
        toml::Value::Table(t) => t.iter().for_each(|(k, v)| leaves(&format!("{prefix}.{k}"), v, out)),
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn write_models(dir: &std::path::Path) {
    let truth = synth_model(&SynthParams::profile(SynthKind::PiecewiseSmooth, 60, 10.0, 5)).unwrap();
    write_model(&truth, dir, "true").unwrap();
    let start = synth_model(&SynthParams {
        layers: 1,
        ..SynthParams::profile(SynthKind::PiecewiseConstant, 60, 10.0, 6)
    })
    .unwrap();
    write_model(&start, dir, "start").unwrap();
}

#[test]
fn header_records_every_configured_key() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_models(dir);
    std::fs::write(dir.join("run.toml"), FULL_CONFIG).unwrap();
    let run = PreparedRun::from_file(&dir.join("run.toml")).unwrap();
    simulate(&run).unwrap();
    let out = dir.join("out");
    let outcome = invert(&run, &out).unwrap();
    assert_eq!(outcome.result.history.len(), 2 * (2 + 2));

    let header = std::fs::read_to_string(out.join("run_header.txt")).unwrap();
    let recorded: Vec<(&str, &str)> = header.lines().filter_map(|l| l.split_once(" = ")).collect();
    let mut expected = Vec::new();
    leaves("config", &FULL_CONFIG.parse::<toml::Table>().unwrap().into(), &mut expected);
    for (key, value) in expected {
        let (_, got) = recorded
            .iter()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("{key} missing from header"));
        let got: toml::Value = format!("v = {got}").parse::<toml::Table>().unwrap()["v"].clone();
        // Paths are recorded after resolution against the config directory.
        if let (toml::Value::String(a), toml::Value::String(b)) = (&got, &value) {
            assert!(a.ends_with(b.as_str()), "{key}: {a} vs {b}");
        } else {
            assert_eq!(got, value, "{key}");
        }
    }
    for batch in 0..4 {
        for name in ["gamma", "zeta", "eta", "zeta2", "eps_rel", "iterations", "mu@3", "lambda@3"] {
            let key = format!("batch.{batch}.{name}");
            assert!(recorded.iter().any(|(k, _)| *k == key), "{key} missing");
        }
    }
    assert!(recorded.iter().any(|(k, _)| *k == "batch.3.mu@4.5"));
    for file in ["model_batch0_velocity.bin", "model_batch3_slowness.bin", "convergence.csv", "model_velocity.bin"] {
        assert!(out.join(file).exists(), "{file} not written");
    }
}

#[test]
fn swapping_source_and_receiver_gives_the_same_datum() {
    let truth = synth_model(&SynthParams::profile(SynthKind::PiecewiseLinear, 120, 10.0, 2)).unwrap().slowness;
    let grid: ModelGrid = truth.grid;
    let pml = Pml::for_reflection(20, 10.0, 3000.0, 1e-3);
    let one = Complex64::new(1.0, 0.0);
    let datum = |src: usize, rec: usize| {
        let acq = Acquisition::new(vec![Source { cell: src, amplitude: one }], vec![rec], &grid).unwrap();
        let survey = Survey::new(grid, acq, pml, 10.0).unwrap();
        simulate_data(&truth, &survey, &[4.0, 7.0]).unwrap()
    };
    for (a, b) in [(0, 119), (7, 64), (40, 41)] {
        let (ab, ba) = (datum(a, b), datum(b, a));
        for (x, y) in ab.sets.iter().zip(&ba.sets) {
            let (x, y) = (x.values[0][0], y.values[0][0]);
            assert!((x - y).norm() <= 1e-10 * x.norm(), "{a}<->{b}: {x} vs {y}");
        }
    }
}

#[test]
fn silent_source_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_models(dir);
    let config = FULL_CONFIG.replace("source_amplitude = 2.0", "source_amplitude = 0.0");
    std::fs::write(dir.join("run.toml"), config).unwrap();
    let run = PreparedRun::from_file(&dir.join("run.toml")).unwrap();
    let data = simulate(&run).unwrap();
    assert!(data.sets.iter().flat_map(|s| s.values.iter().flatten()).all(|v| v.norm() == 0.0));
    let err = invert(&run, &dir.join("out")).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}
