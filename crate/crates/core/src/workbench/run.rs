//! Simulation, inversion and comparison runs driven by a [`RunConfig`].

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::irwri::{run_continuation, InversionResult, IterationRecord, ObservedData, StopReason, Survey};
use crate::prox::{BoxBounds, RegularizerKind};

use super::config::{RunConfig, StartModel};
use super::io::{read_data_file, write_data_file, Raster, RasterKind};
use super::synth::{gradient_model, slowness_to_velocity, SynthModel};
use super::{model_error, simulate_data};

pub const HEADER_FILE: &str = "run_header.txt";
pub const LOG_FILE: &str = "convergence.csv";
pub const MODEL_FILE: &str = "model_slowness.bin";
pub const VELOCITY_FILE: &str = "model_velocity.bin";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const COMPARISON_RUNS_FILE: &str = "comparison_runs.csv";

/// Config with every file it names loaded.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub grid: ModelGrid,
    /// True squared slowness, when configured.
    pub truth: Option<ScalarField>,
    pub start: ScalarField,
    pub survey: Survey,
    pub bounds: BoxBounds,
}

fn read_slowness(key: &str, path: &Path) -> Result<ScalarField> {
    Raster::read(path)
        .map(|r| r.slowness())
        .map_err(|e| FwiError::Config(format!("{key}: {}: {e}", path.display())))
}

impl PreparedRun {
    /// Loads rasters and resolves geometry; paths must already be absolute
    /// or relative to the working directory.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.grid;
        let truth = g.true_model.as_deref().map(|p| read_slowness("grid.true_model", p)).transpose()?;
        let initial = g
            .initial_model
            .as_deref()
            .map(|p| read_slowness("grid.initial_model", p))
            .transpose()?;
        let grid = match (&truth, &initial) {
            (Some(t), Some(i)) if !t.grid.same_shape(&i.grid) => {
                return Err(FwiError::Config(format!(
                    "grid.initial_model is {}x{} but grid.true_model is {}x{}",
                    i.grid.nx(),
                    i.grid.nz(),
                    t.grid.nx(),
                    t.grid.nz()
                )))
            }
            (Some(t), _) => t.grid,
            (None, Some(i)) => i.grid,
            (None, None) => {
                return Err(FwiError::Config(
                    "grid needs true_model or initial_model to fix the mesh".into(),
                ))
            }
        };
        let start = match g.start {
            StartModel::File => initial.clone().expect("validated"),
            StartModel::TrueMean => {
                let v = slowness_to_velocity(truth.as_ref().expect("validated")).mean();
                ScalarField::constant(grid, 1.0 / (v * v))
            }
            StartModel::Gradient => {
                let [top, bottom] = g.start_velocity.expect("validated");
                gradient_model(grid, top, bottom).slowness
            }
        };
        let start_velocity = slowness_to_velocity(&start);
        let acquisition = config.acquisition(&grid)?;
        let pml = config.pml(&grid, &start_velocity);
        let survey = Survey::new(grid, acquisition, pml, config.acquisition.peak_frequency)?;
        let truth_velocity = truth.as_ref().map(slowness_to_velocity);
        let bounds = config.bounds.resolve(&grid, truth_velocity.as_ref())?;
        Ok(Self {
            config,
            grid,
            truth,
            start,
            survey,
            bounds,
        })
    }

    /// Loads `path` and resolves its relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = RunConfig::load(path)?;
        config.rebase(path.parent().unwrap_or(Path::new(".")));
        Self::new(config)
    }

    pub fn truth(&self) -> Result<&ScalarField> {
        self.truth
            .as_ref()
            .ok_or_else(|| FwiError::Config("this command needs grid.true_model".into()))
    }
}

/// Simulates data at every scheduled frequency and writes it to
/// `acquisition.data`.
pub fn simulate(run: &PreparedRun) -> Result<ObservedData> {
    let data = simulate_data(run.truth()?, &run.survey, &run.config.schedule.frequencies())?;
    if let Some(dir) = run.config.acquisition.data.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_data_file(&data, &run.config.acquisition.data)?;
    Ok(data)
}

/// Writes both rasters of a synthetic model into `dir`.
pub fn write_model(model: &SynthModel, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let v = dir.join(format!("{stem}_velocity.bin"));
    let s = dir.join(format!("{stem}_slowness.bin"));
    Raster {
        kind: RasterKind::Velocity,
        field: model.velocity.clone(),
    }
    .write(&v)?;
    Raster {
        kind: RasterKind::SquaredSlowness,
        field: model.slowness.clone(),
    }
    .write(&s)?;
    Ok((v, s))
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `key = value` lines for every configured and derived parameter.
pub fn header_lines(run: &PreparedRun) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let value = toml::Value::try_from(&run.config).expect("config serializes");
    flatten("config", &value, &mut out);
    let g = run.grid;
    let acq = &run.survey.acquisition;
    let derived = [
        ("resolved.nx", g.nx().to_string()),
        ("resolved.nz", g.nz().to_string()),
        ("resolved.h", g.spacing().to_string()),
        ("resolved.sources", acq.num_sources().to_string()),
        ("resolved.receivers", acq.receivers.len().to_string()),
        ("resolved.pml_width", run.survey.pml.width.to_string()),
        ("resolved.pml_strength", run.survey.pml.strength.to_string()),
        ("resolved.start_mean_slowness", run.start.mean().to_string()),
        (
            "resolved.model_scale",
            (run.config.penalties.model_scale_rel * run.start.mean()).to_string(),
        ),
        ("resolved.bounds_min", run.bounds.lower.iter().copied().fold(f64::INFINITY, f64::min).to_string()),
        ("resolved.bounds_max", run.bounds.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max).to_string()),
    ];
    out.extend(derived.into_iter().map(|(k, v)| (k.to_string(), v)));
    out
}

fn batch_lines(result: &InversionResult) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (k, b) in result.batches.iter().enumerate() {
        let key = |name: &str| format!("batch.{k}.{name}");
        let p = &b.penalties;
        out.push((key("path"), b.path.to_string()));
        out.push((key("frequencies"), format!("{:?}", b.frequencies)));
        out.push((key("gamma"), p.gamma.to_string()));
        out.push((key("zeta"), p.zeta.to_string()));
        out.push((key("eta"), p.eta.to_string()));
        out.push((key("zeta2"), p.zeta2.to_string()));
        out.push((key("eps_rel"), p.eps_rel.to_string()));
        for (f, mu) in b.frequencies.iter().zip(&b.data_weights) {
            out.push((format!("batch.{k}.mu@{f}"), mu.to_string()));
            out.push((format!("batch.{k}.lambda@{f}"), (mu * p.gamma).to_string()));
        }
        out.push((key("iterations"), b.iterations.to_string()));
    }
    out
}

fn render(lines: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in lines {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn stop_label(stop: Option<StopReason>) -> &'static str {
    match stop {
        None => "",
        Some(StopReason::MaxIterations) => "max_iterations",
        Some(StopReason::Converged) => "converged",
    }
}

/// Convergence log as CSV text.
pub fn convergence_csv(history: &[IterationRecord], batches_per_path: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| FwiError::Format(format!("convergence csv: {e}"));
    w.write_record(["iter", "batch", "data_res", "wave_res", "model_err", "reg_value", "stop"])
        .map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.total.to_string(),
            (r.path * batches_per_path + r.batch).to_string(),
            r.data_residual.to_string(),
            r.wave_residual.to_string(),
            r.model_error.map(|e| e.to_string()).unwrap_or_default(),
            r.reg_value.to_string(),
            stop_label(r.stop).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| FwiError::Format(format!("convergence csv: {e}")))
}

#[derive(Clone, Debug)]
pub struct InvertOutcome {
    pub result: InversionResult,
    pub initial_error: Option<f64>,
    pub final_error: Option<f64>,
}

fn read_observed(run: &PreparedRun) -> Result<ObservedData> {
    let path = &run.config.acquisition.data;
    if !path.exists() {
        return Err(FwiError::Config(format!(
            "acquisition.data: {} does not exist (run `simulate` first)",
            path.display()
        )));
    }
    read_data_file(path)
}

/// Inverts without writing anything.
pub fn invert_in_memory(
    run: &PreparedRun,
    data: &ObservedData,
    observer: impl FnMut(&IterationRecord),
) -> Result<InvertOutcome> {
    let settings = run.config.outer_settings(run.bounds.clone())?;
    let schedule = run.config.schedule.to_schedule();
    let truth = run.truth.as_ref();
    let result = run_continuation(&run.start, &run.survey, data, &schedule, &settings, truth, observer)?;
    let initial_error = truth.map(|t| model_error(&run.start, t)).transpose()?;
    let final_error = truth.map(|t| model_error(&result.model, t)).transpose()?;
    Ok(InvertOutcome {
        result,
        initial_error,
        final_error,
    })
}

/// Runs the configured inversion and writes the header, the convergence
/// log and the final (optionally per-batch) model rasters into `out_dir`.
pub fn invert(run: &PreparedRun, out_dir: &Path) -> Result<InvertOutcome> {
    let data = read_observed(run)?;
    std::fs::create_dir_all(out_dir)?;
    let header_path = out_dir.join(HEADER_FILE);
    let header = header_lines(run);
    std::fs::write(&header_path, render(&header))?;

    let outcome = invert_in_memory(run, &data, |_| {})?;
    let result = &outcome.result;

    let mut tail = batch_lines(result);
    if let Some(e) = outcome.initial_error {
        tail.push(("result.initial_model_error".into(), e.to_string()));
    }
    if let Some(e) = outcome.final_error {
        tail.push(("result.final_model_error".into(), e.to_string()));
    }
    std::fs::OpenOptions::new()
        .append(true)
        .open(&header_path)?
        .write_all(render(&tail).as_bytes())?;

    let log = convergence_csv(&result.history, run.config.schedule.batches.len())?;
    std::fs::write(out_dir.join(LOG_FILE), log)?;
    write_rasters(&result.model, out_dir, MODEL_FILE, VELOCITY_FILE)?;
    if run.config.output.per_batch_models {
        for (k, b) in result.batches.iter().enumerate() {
            write_rasters(
                &b.model,
                out_dir,
                &format!("model_batch{k}_slowness.bin"),
                &format!("model_batch{k}_velocity.bin"),
            )?;
        }
    }
    Ok(outcome)
}

fn write_rasters(m: &ScalarField, dir: &Path, slowness: &str, velocity: &str) -> Result<()> {
    Raster {
        kind: RasterKind::SquaredSlowness,
        field: m.clone(),
    }
    .write(&dir.join(slowness))?;
    Raster {
        kind: RasterKind::Velocity,
        field: slowness_to_velocity(m),
    }
    .write(&dir.join(velocity))
}

/// Best run of one regularizer kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub kind: RegularizerKind,
    /// Best α; `None` for kinds without α.
    pub alpha: Option<f64>,
    pub error: f64,
    /// `error` divided by the largest error in the table.
    pub normalized: f64,
}

/// Runs every kind of `regularizer.compare`, searching `regularizer.alpha_grid`
/// for the compound kinds, and ranks the best final model errors.
///
/// Each finished run is appended to `comparison_runs.csv` at once, so a
/// failure leaves the completed runs on disk.
pub fn compare_regularizers(run: &PreparedRun, out_dir: &Path) -> Result<Vec<ComparisonRow>> {
    let data = read_observed(run)?;
    run.truth()?;
    compare_with_data(run, &data, Some(out_dir))
}

/// [`compare_regularizers`] on data already in memory; writes files only
/// when `out_dir` is given.
pub fn compare_with_data(run: &PreparedRun, data: &ObservedData, out_dir: Option<&Path>) -> Result<Vec<ComparisonRow>> {
    let mut runs_log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::fs::File::create(dir.join(COMPARISON_RUNS_FILE))?;
            writeln!(f, "regularizer,alpha,model_error")?;
            Some(f)
        }
        None => None,
    };
    let reg = &run.config.regularizer;
    let mut best: Vec<(RegularizerKind, Option<f64>, f64)> = Vec::new();
    for &kind in &reg.compare {
        let alphas: Vec<Option<f64>> = if kind.uses_alpha() {
            reg.alpha_grid.iter().map(|&a| Some(a)).collect()
        } else {
            vec![None]
        };
        let mut row: Option<(Option<f64>, f64)> = None;
        for alpha in alphas {
            let mut cfg = run.config.clone();
            cfg.regularizer.kind = kind;
            cfg.regularizer.alpha = alpha.unwrap_or(reg.alpha);
            let sub = PreparedRun {
                config: cfg,
                ..run.clone()
            };
            let outcome = invert_in_memory(&sub, data, |_| {})?;
            let err = outcome.final_error.expect("truth present");
            log::info!("compare {kind} alpha {alpha:?}: model error {err:.6}");
            if let Some(f) = runs_log.as_mut() {
                writeln!(f, "{kind},{},{err}", alpha.map(|a| a.to_string()).unwrap_or_default())?;
                f.flush()?;
            }
            if row.map_or(true, |(_, e)| err < e) {
                row = Some((alpha, err));
            }
        }
        let (alpha, err) = row.expect("at least one run");
        best.push((kind, alpha, err));
    }
    let max = best.iter().map(|r| r.2).fold(0.0, f64::max);
    let rows: Vec<ComparisonRow> = best
        .into_iter()
        .map(|(kind, alpha, error)| ComparisonRow {
            kind,
            alpha,
            error,
            normalized: if max > 0.0 { error / max } else { 0.0 },
        })
        .collect();
    if let Some(dir) = out_dir {
        let mut text = String::from("regularizer,alpha,model_error,normalized\n");
        for r in &rows {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                r.kind,
                r.alpha.map(|a| a.to_string()).unwrap_or_default(),
                r.error,
                r.normalized
            );
        }
        std::fs::write(dir.join(COMPARISON_FILE), text)?;
    }
    Ok(rows)
}
