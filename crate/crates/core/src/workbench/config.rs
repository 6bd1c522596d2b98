//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! true_model = "model_slowness.bin"
//! start = "true-mean"
//!
//! [acquisition]
//! data = "data.csv"
//! sources = { layout = "cells", cells = [0] }
//! receivers = { layout = "line", depth = 0, step = 10 }
//!
//! [schedule]
//! batches = [[5.0]]
//! k_max = 100
//!
//! [regularizer]
//! kind = "tt"
//! alpha = 0.3
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::helmholtz::{Acquisition, Pml, Source, DEFAULT_PML_REFLECTION};
use crate::irwri::{ContinuationSchedule, OuterSettings, StopRule};
use crate::prox::{BoxBounds, RegularizerKind, RegularizerSpec};
use crate::subproblem::PenaltyRule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub acquisition: AcquisitionSection,
    pub schedule: ScheduleSection,
    pub regularizer: RegularizerSection,
    #[serde(default)]
    pub penalties: PenaltySection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// How the starting model is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartModel {
    /// Read from `initial_model`.
    File,
    /// Homogeneous at the mean velocity of the true model.
    TrueMean,
    /// Linear in depth between the two `start_velocity` values.
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Raster of the true model; needed for simulation, errors and benchmark bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_model: Option<PathBuf>,
    #[serde(default = "default_start")]
    pub start: StartModel,
    /// Top and bottom velocity of the gradient start, m/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_velocity: Option<[f64; 2]>,
    #[serde(default = "default_pml_width")]
    pub pml_width: usize,
    #[serde(default = "default_pml_reflection")]
    pub pml_reflection: f64,
    /// Velocity the PML is tuned for; mean velocity of the starting model when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pml_velocity: Option<f64>,
}

fn default_start() -> StartModel {
    StartModel::TrueMean
}
fn default_pml_width() -> usize {
    20
}
fn default_pml_reflection() -> f64 {
    DEFAULT_PML_REFLECTION
}

/// Placement of sources or receivers on the model grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CellLayout {
    /// Explicit linear cell indices.
    Cells { cells: Vec<usize> },
    /// Every `step`-th cell along x at depth row `depth`, starting at `first`.
    Line {
        #[serde(default)]
        depth: usize,
        #[serde(default)]
        first: usize,
        #[serde(default = "one")]
        step: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
    /// Cells on the rectangle `inset` cells inside the grid edge (2D only).
    Ring {
        #[serde(default = "one")]
        inset: usize,
    },
}

fn one() -> usize {
    1
}

impl CellLayout {
    pub fn resolve(&self, grid: &ModelGrid) -> Result<Vec<usize>> {
        let (nx, nz) = (grid.nx(), grid.nz());
        let cells = match self {
            CellLayout::Cells { cells } => cells.clone(),
            CellLayout::Line {
                depth,
                first,
                step,
                count,
            } => {
                if *depth >= nz || *step == 0 {
                    return Err(FwiError::Config(format!(
                        "line layout needs depth < {nz} and step > 0 (got depth {depth}, step {step})"
                    )));
                }
                let cells: Vec<usize> = (*first..nx)
                    .step_by(*step)
                    .take(count.unwrap_or(usize::MAX))
                    .map(|ix| grid.index(ix, *depth))
                    .collect();
                if count.is_some_and(|c| c != cells.len()) {
                    return Err(FwiError::Config(format!(
                        "line layout of {} cells does not fit in {nx} columns",
                        count.unwrap()
                    )));
                }
                cells
            }
            CellLayout::Ring { inset } => {
                let k = *inset;
                if grid.is_1d() || 2 * k + 2 > nx.min(nz) {
                    return Err(FwiError::Config(format!("ring with inset {k} does not fit the grid")));
                }
                (0..grid.len())
                    .filter(|&i| {
                        let (x, z) = grid.coords(i);
                        let inside = (k..nx - k).contains(&x) && (k..nz - k).contains(&z);
                        inside && (x == k || x == nx - 1 - k || z == k || z == nz - 1 - k)
                    })
                    .collect()
            }
        };
        if cells.is_empty() {
            return Err(FwiError::Config("layout selects no cells".into()));
        }
        Ok(cells)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    /// Observed data; written by `simulate`, read by `invert`.
    pub data: PathBuf,
    pub sources: CellLayout,
    pub receivers: CellLayout,
    /// Ricker peak frequency, Hz.
    #[serde(default = "default_peak")]
    pub peak_frequency: f64,
    #[serde(default = "default_amplitude")]
    pub source_amplitude: f64,
}

fn default_peak() -> f64 {
    10.0
}
fn default_amplitude() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub batches: Vec<Vec<f64>>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_eps_b")]
    pub eps_b: f64,
    #[serde(default = "default_eps_d")]
    pub eps_d: f64,
    #[serde(default = "one")]
    pub paths: usize,
    #[serde(default)]
    pub bounds_from: usize,
}

fn default_k_max() -> usize {
    15
}
fn default_eps_b() -> f64 {
    1e-3
}
fn default_eps_d() -> f64 {
    1e-5
}

impl ScheduleSection {
    pub fn to_schedule(&self) -> ContinuationSchedule {
        ContinuationSchedule {
            batches: self.batches.clone(),
            stop: StopRule {
                k_max: self.k_max,
                eps_b: self.eps_b,
                eps_d: self.eps_d,
            },
            paths: self.paths,
            bounds_from: self.bounds_from,
        }
    }

    /// Distinct scheduled frequencies in ascending order.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.batches.iter().flatten().copied().collect();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    pub kind: RegularizerKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mixed_hessian: bool,
    /// α values tried per compound kind by `compare`.
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    /// Kinds run by `compare`.
    #[serde(default = "default_compare")]
    pub compare: Vec<RegularizerKind>,
}

fn default_alpha() -> f64 {
    0.5
}

/// α ∈ {0.1, 0.2, …, 0.9}.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..10).map(|k| k as f64 / 10.0).collect()
}

fn default_compare() -> Vec<RegularizerKind> {
    RegularizerKind::ALL.to_vec()
}

impl RegularizerSection {
    pub fn spec(&self) -> Result<RegularizerSpec> {
        Ok(RegularizerSpec::new(self.kind, self.alpha)?.with_mixed_hessian(self.mixed_hessian))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    #[serde(default = "default_gamma_rel")]
    pub gamma_rel: f64,
    #[serde(default = "default_admm_rel")]
    pub admm_rel: f64,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    /// `λ/γ` relative to the mean diagonal of `AᴴA`.
    #[serde(default = "default_one_f")]
    pub data_weight_rel: f64,
    #[serde(default = "default_inner")]
    pub inner_iterations: usize,
    #[serde(default = "default_one_f")]
    pub model_scale_rel: f64,
}

fn default_gamma_rel() -> f64 {
    PenaltyRule::default().gamma_rel
}
fn default_admm_rel() -> f64 {
    PenaltyRule::default().admm_rel
}
fn default_eps_rel() -> f64 {
    PenaltyRule::default().eps_rel
}
fn default_one_f() -> f64 {
    1.0
}
fn default_inner() -> usize {
    5
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            gamma_rel: default_gamma_rel(),
            admm_rel: default_admm_rel(),
            eps_rel: default_eps_rel(),
            data_weight_rel: 1.0,
            inner_iterations: default_inner(),
            model_scale_rel: 1.0,
        }
    }
}

impl PenaltySection {
    pub fn rule(&self) -> PenaltyRule {
        PenaltyRule {
            gamma_rel: self.gamma_rel,
            admm_rel: self.admm_rel,
            eps_rel: self.eps_rel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMode {
    None,
    /// Fractions of the true model's extreme velocities.
    Benchmark,
    /// Explicit velocity limits.
    Velocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default = "default_bounds_mode")]
    pub mode: BoundsMode,
    #[serde(default = "default_lower_factor")]
    pub lower_factor: f64,
    #[serde(default = "default_upper_factor")]
    pub upper_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmax: Option<f64>,
}

fn default_bounds_mode() -> BoundsMode {
    BoundsMode::None
}
fn default_lower_factor() -> f64 {
    0.5
}
fn default_upper_factor() -> f64 {
    1.5
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            mode: BoundsMode::None,
            lower_factor: 0.5,
            upper_factor: 1.5,
            vmin: None,
            vmax: None,
        }
    }
}

impl BoundsSection {
    /// Squared-slowness box; `truth` is the true velocity model.
    pub fn resolve(&self, grid: &ModelGrid, truth: Option<&ScalarField>) -> Result<BoxBounds> {
        let n = grid.len();
        let velocity_box = |lo: f64, hi: f64| {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(FwiError::Config(format!("bounds: velocity range [{lo}, {hi}] is invalid")));
            }
            BoxBounds::uniform(n, 1.0 / (hi * hi), 1.0 / (lo * lo))
        };
        match self.mode {
            BoundsMode::None => Ok(BoxBounds::unbounded(n)),
            BoundsMode::Velocity => match (self.vmin, self.vmax) {
                (Some(lo), Some(hi)) => velocity_box(lo, hi),
                _ => Err(FwiError::Config("bounds.mode = \"velocity\" needs bounds.vmin and bounds.vmax".into())),
            },
            BoundsMode::Benchmark => {
                let v = truth.ok_or_else(|| {
                    FwiError::Config("bounds.mode = \"benchmark\" needs grid.true_model".into())
                })?;
                let vmin = v.values.iter().copied().fold(f64::INFINITY, f64::min);
                let vmax = v.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                velocity_box(self.lower_factor * vmin, self.upper_factor * vmax)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Also write the model after every batch.
    #[serde(default)]
    pub per_batch_models: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            per_batch_models: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| FwiError::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FwiError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            FwiError::Config(msg) => FwiError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that do not need any file.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |key: &str, e: FwiError| FwiError::Config(format!("{key}: {e}"));
        self.schedule.to_schedule().validate().map_err(|e| cfg_err("schedule", e))?;
        self.regularizer.spec().map_err(|e| cfg_err("regularizer.alpha", e))?;
        if self.regularizer.alpha_grid.is_empty() {
            return Err(FwiError::Config("regularizer.alpha_grid must not be empty".into()));
        }
        for &a in &self.regularizer.alpha_grid {
            for kind in self.regularizer.compare.iter().filter(|k| k.uses_alpha()) {
                RegularizerSpec::new(*kind, a).map_err(|e| cfg_err("regularizer.alpha_grid", e))?;
            }
        }
        self.penalties.rule().validate().map_err(|e| cfg_err("penalties", e))?;
        let p = &self.penalties;
        for (key, v) in [
            ("penalties.data_weight_rel", p.data_weight_rel),
            ("penalties.model_scale_rel", p.model_scale_rel),
            ("acquisition.peak_frequency", self.acquisition.peak_frequency),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FwiError::Config(format!("{key} = {v} must be positive")));
            }
        }
        if !self.acquisition.source_amplitude.is_finite() {
            return Err(FwiError::Config("acquisition.source_amplitude must be finite".into()));
        }
        if p.inner_iterations == 0 {
            return Err(FwiError::Config("penalties.inner_iterations must be at least 1".into()));
        }
        let g = &self.grid;
        if !(g.pml_reflection > 0.0 && g.pml_reflection < 1.0) {
            return Err(FwiError::Config("grid.pml_reflection must lie in (0, 1)".into()));
        }
        if g.pml_width == 1 {
            return Err(FwiError::Config("grid.pml_width must be 0 or at least 2".into()));
        }
        match g.start {
            StartModel::File if g.initial_model.is_none() => {
                return Err(FwiError::Config("grid.start = \"file\" needs grid.initial_model".into()))
            }
            StartModel::TrueMean if g.true_model.is_none() => {
                return Err(FwiError::Config("grid.start = \"true-mean\" needs grid.true_model".into()))
            }
            StartModel::Gradient => match g.start_velocity {
                Some([a, b]) if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {}
                _ => {
                    return Err(FwiError::Config(
                        "grid.start = \"gradient\" needs positive grid.start_velocity = [top, bottom]".into(),
                    ))
                }
            },
            _ => {}
        }
        if self.bounds.mode == BoundsMode::Benchmark {
            if g.true_model.is_none() {
                return Err(FwiError::Config("bounds.mode = \"benchmark\" needs grid.true_model".into()));
            }
            let (lo, hi) = (self.bounds.lower_factor, self.bounds.upper_factor);
            if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
                return Err(FwiError::Config(
                    "bounds.lower_factor must lie in (0, 1] and bounds.upper_factor be at least 1".into(),
                ));
            }
        }
        if self.bounds.mode == BoundsMode::Velocity {
            self.bounds.resolve(&ModelGrid::profile(3, 1.0)?, None)?;
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.grid.true_model.as_mut().map(fix);
        self.grid.initial_model.as_mut().map(fix);
        fix(&mut self.acquisition.data);
        fix(&mut self.output.dir);
    }

    pub fn acquisition(&self, grid: &ModelGrid) -> Result<Acquisition> {
        let amp = Complex64::new(self.acquisition.source_amplitude, 0.0);
        let sources = self
            .acquisition
            .sources
            .resolve(grid)
            .map_err(|e| FwiError::Config(format!("acquisition.sources: {e}")))?
            .into_iter()
            .map(|cell| Source { cell, amplitude: amp })
            .collect();
        let receivers = self
            .acquisition
            .receivers
            .resolve(grid)
            .map_err(|e| FwiError::Config(format!("acquisition.receivers: {e}")))?;
        Acquisition::new(sources, receivers, grid).map_err(|e| FwiError::Config(format!("acquisition: {e}")))
    }

    pub fn pml(&self, grid: &ModelGrid, start_velocity: &ScalarField) -> Pml {
        let v = self.grid.pml_velocity.unwrap_or_else(|| start_velocity.mean());
        Pml::for_reflection(self.grid.pml_width, grid.spacing(), v, self.grid.pml_reflection)
    }

    pub fn outer_settings(&self, bounds: BoxBounds) -> Result<OuterSettings> {
        Ok(OuterSettings {
            spec: self.regularizer.spec()?,
            penalties: self.penalties.rule(),
            data_weight_rel: self.penalties.data_weight_rel,
            inner_iterations: self.penalties.inner_iterations,
            bounds,
            model_scale_rel: self.penalties.model_scale_rel,
        })
    }
}

/// Acquisition geometry of the benchmark models, used to build 1D
/// configurations on imported or synthetic profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Bp,
    MarmousiIi,
    Overthrust,
    SegSalt,
    Valhall,
}

/// Profile length, frequency, cell size and receiver interval of a preset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetGeometry {
    pub length_m: f64,
    pub frequency_hz: f64,
    pub spacing_m: f64,
    pub receiver_interval_m: f64,
}

impl PresetGeometry {
    pub fn cells(&self) -> usize {
        (self.length_m / self.spacing_m).round() as usize
    }

    pub fn receiver_step(&self) -> usize {
        (self.receiver_interval_m / self.spacing_m).round().max(1.0) as usize
    }
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Bp,
        Preset::MarmousiIi,
        Preset::Overthrust,
        Preset::SegSalt,
        Preset::Valhall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Bp => "bp",
            Preset::MarmousiIi => "marmousi-ii",
            Preset::Overthrust => "overthrust",
            Preset::SegSalt => "seg-salt",
            Preset::Valhall => "valhall",
        }
    }

    pub fn geometry(self) -> PresetGeometry {
        let (length_km, frequency_hz, spacing_m, receiver_interval_m) = match self {
            Preset::Bp => (11.46, 5.0, 6.0, 180.0),
            Preset::MarmousiIi => (3.75, 12.0, 5.0, 85.0),
            Preset::Overthrust => (4.6, 12.0, 20.0, 120.0),
            Preset::SegSalt => (4.2, 10.0, 20.0, 120.0),
            Preset::Valhall => (5.22, 5.0, 25.0, 175.0),
        };
        PresetGeometry {
            length_m: length_km * 1000.0,
            frequency_hz,
            spacing_m,
            receiver_interval_m,
        }
    }

    /// Single surface source, receivers every interval down the profile,
    /// one frequency, 100 iterations, benchmark bounds.
    pub fn run_config(self, true_model: PathBuf, data: PathBuf, kind: RegularizerKind) -> RunConfig {
        let g = self.geometry();
        RunConfig {
            grid: GridSection {
                true_model: Some(true_model),
                initial_model: None,
                start: StartModel::TrueMean,
                start_velocity: None,
                pml_width: default_pml_width(),
                pml_reflection: DEFAULT_PML_REFLECTION,
                pml_velocity: None,
            },
            acquisition: AcquisitionSection {
                data,
                sources: CellLayout::Cells { cells: vec![0] },
                receivers: CellLayout::Line {
                    depth: 0,
                    first: 0,
                    step: g.receiver_step(),
                    count: None,
                },
                peak_frequency: default_peak(),
                source_amplitude: 1.0,
            },
            schedule: ScheduleSection {
                batches: vec![vec![g.frequency_hz]],
                k_max: 100,
                eps_b: 0.0,
                eps_d: 0.0,
                paths: 1,
                bounds_from: 0,
            },
            regularizer: RegularizerSection {
                kind,
                alpha: default_alpha(),
                mixed_hessian: false,
                alpha_grid: default_alpha_grid(),
                compare: default_compare(),
            },
            penalties: PenaltySection::default(),
            bounds: BoundsSection {
                mode: BoundsMode::Benchmark,
                ..BoundsSection::default()
            },
            output: OutputSection::default(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| FwiError::InvalidParameter(format!("unknown preset '{s}'")))
    }
}
