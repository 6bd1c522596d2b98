//! Outer IR-WRI iteration and frequency continuation.
//!
//! Each outer step, for every frequency of the active batch:
//!
//! 1. reconstructs `u` from `μ‖Pu − (d + dᵏ)‖² + ‖A(m)u − (b + bᵏ)‖²`,
//! 2. updates the model from `γ/2 Σ‖L m − y‖²` with `L = ω² diag(u)`,
//!    `y = b + bᵏ − Δ_pml u` and the regularizer (see [`crate::subproblem`]),
//! 3. accumulates the scaled duals `bᵏ⁺¹ = bᵏ + b − A(mᵏ⁺¹)u`,
//!    `dᵏ⁺¹ = dᵏ + d − Pu`.
//!
//! Per-source work may run in parallel; results are always reduced in
//! source order so runs are bit-for-bit reproducible.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::helmholtz::{
    build_l, ricker_spectrum, sample, Acquisition, HelmholtzOperator, Padding, Pml, WavefieldReconstructor,
};
use crate::prox::{eval_regularizer, project_box, BoxBounds, RegularizerSpec};
use crate::subproblem::{update_model, DataTerm, InnerState, PenaltyRule, Penalties};

/// Lower bound on the model, relative to the model scale, kept even while
/// the box constraint is inactive so the Helmholtz operator stays physical.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

/// Grid, acquisition, absorbing layer and source wavelet.
#[derive(Clone, Debug)]
pub struct Survey {
    pub grid: ModelGrid,
    pub acquisition: Acquisition,
    pub pml: Pml,
    /// Ricker peak frequency in Hz.
    pub peak_frequency: f64,
}

impl Survey {
    pub fn new(grid: ModelGrid, acquisition: Acquisition, pml: Pml, peak_frequency: f64) -> Result<Self> {
        acquisition.validate(&grid)?;
        if !(peak_frequency > 0.0 && peak_frequency.is_finite()) {
            return Err(FwiError::InvalidParameter(format!(
                "peak frequency {peak_frequency} must be positive"
            )));
        }
        Ok(Self {
            grid,
            acquisition,
            pml,
            peak_frequency,
        })
    }

    pub fn omega(frequency: f64) -> f64 {
        2.0 * std::f64::consts::PI * frequency
    }

    /// Model-grid right-hand sides of every source at `frequency`.
    pub fn source_terms(&self, frequency: f64) -> Vec<Vec<Complex64>> {
        let scale = Complex64::new(ricker_spectrum(frequency, self.peak_frequency), 0.0);
        (0..self.acquisition.num_sources())
            .map(|s| self.acquisition.source_vector(&self.grid, s, scale))
            .collect()
    }

    pub fn operator(&self, m: &ScalarField, frequency: f64) -> Result<HelmholtzOperator> {
        self.grid.check_same(&m.grid, "survey model")?;
        HelmholtzOperator::assemble(m, Self::omega(frequency), self.pml)
    }
}

/// Receiver data of all sources at one frequency, `values[source][receiver]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyData {
    pub frequency: f64,
    pub values: Vec<Vec<Complex64>>,
}

/// Observed data over several frequencies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservedData {
    pub sets: Vec<FrequencyData>,
}

impl ObservedData {
    pub fn frequencies(&self) -> Vec<f64> {
        self.sets.iter().map(|s| s.frequency).collect()
    }

    /// Data at `frequency`, matched to a relative tolerance of 1e-9.
    pub fn at(&self, frequency: f64) -> Result<&FrequencyData> {
        self.sets
            .iter()
            .find(|s| (s.frequency - frequency).abs() <= 1e-9 * frequency.abs().max(1.0))
            .ok_or_else(|| FwiError::MissingData(format!("no data at {frequency} Hz")))
    }

    pub fn validate(&self, survey: &Survey) -> Result<()> {
        let (ns, nr) = (survey.acquisition.num_sources(), survey.acquisition.receivers.len());
        for set in &self.sets {
            if set.values.len() != ns || set.values.iter().any(|v| v.len() != nr) {
                return Err(FwiError::ShapeMismatch(format!(
                    "data at {} Hz does not match {ns} sources x {nr} receivers",
                    set.frequency
                )));
            }
        }
        Ok(())
    }
}

/// Stopping thresholds of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub k_max: usize,
    /// Threshold on the relative wave-equation residual `‖Au − b‖/‖b‖`.
    pub eps_b: f64,
    /// Threshold on the relative data residual `‖Pu − d‖/‖d‖`.
    pub eps_d: f64,
}

/// Stop after `k_max` iterations or once both residuals are within threshold.
pub fn check_stop(k: usize, rule: &StopRule, wave_residual: f64, data_residual: f64) -> bool {
    k >= rule.k_max || (wave_residual <= rule.eps_b && data_residual <= rule.eps_d)
}

/// Ordered frequency batches, optionally swept several times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub batches: Vec<Vec<f64>>,
    pub stop: StopRule,
    /// Number of sweeps over the batch list.
    pub paths: usize,
    /// Global iteration (0-based) from which the box constraint is enforced.
    pub bounds_from: usize,
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batches.is_empty() || self.batches.iter().any(Vec::is_empty) {
            return Err(FwiError::InvalidParameter("every batch needs at least one frequency".into()));
        }
        if let Some(f) = self.batches.iter().flatten().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(FwiError::InvalidParameter(format!("frequency {f} must be positive")));
        }
        if self.paths == 0 || self.stop.k_max == 0 {
            return Err(FwiError::InvalidParameter("paths and k_max must be at least 1".into()));
        }
        if !(self.stop.eps_b >= 0.0 && self.stop.eps_d >= 0.0) {
            return Err(FwiError::InvalidParameter("stopping thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything except data and schedule that shapes an inversion.
#[derive(Clone, Debug)]
pub struct OuterSettings {
    pub spec: RegularizerSpec,
    pub penalties: PenaltyRule,
    /// `μ = λ/γ` as a multiple of the mean diagonal of `AᴴA`.
    pub data_weight_rel: f64,
    pub inner_iterations: usize,
    pub bounds: BoxBounds,
    /// Model normalization as a multiple of the starting model's mean.
    /// Smaller values weigh the quadratic regularizer terms up against the
    /// ℓ1 terms.
    pub model_scale_rel: f64,
}

impl OuterSettings {
    pub fn validate(&self, grid: &ModelGrid) -> Result<()> {
        self.spec.validate()?;
        self.penalties.validate()?;
        if !(self.data_weight_rel > 0.0 && self.data_weight_rel.is_finite()) {
            return Err(FwiError::InvalidParameter("data weight must be positive".into()));
        }
        if self.inner_iterations == 0 {
            return Err(FwiError::InvalidParameter("need at least one inner iteration".into()));
        }
        if self.bounds.len() != grid.len() {
            return Err(FwiError::ShapeMismatch(format!(
                "{} bounds for {} cells",
                self.bounds.len(),
                grid.len()
            )));
        }
        let s = self.model_scale_rel;
        if !(s > 0.0 && s.is_finite()) {
            return Err(FwiError::InvalidParameter(format!("model scale {s} must be positive")));
        }
        Ok(())
    }
}

/// Outer iterate within one batch.
#[derive(Clone, Debug)]
pub struct OuterState {
    pub m: ScalarField,
    pub inner: InnerState,
    pub frequencies: Vec<f64>,
    /// Scaled source duals `bᵏ`, `[frequency][source][padded cell]`.
    pub source_duals: Vec<Vec<Vec<Complex64>>>,
    /// Scaled data duals `dᵏ`, `[frequency][source][receiver]`.
    pub data_duals: Vec<Vec<Vec<Complex64>>>,
    /// Fixed at the first step of the batch.
    pub penalties: Option<Penalties>,
    /// `μ` per frequency, fixed at the first step of the batch.
    pub data_weights: Vec<Option<f64>>,
    /// Padded wavefields of the latest step, `[frequency][source][padded cell]`.
    pub wavefields: Vec<Vec<Vec<Complex64>>>,
    /// Completed steps in this batch.
    pub iteration: usize,
}

impl OuterState {
    /// Fresh batch state: zero duals, penalties resolved on the first step.
    pub fn new(m: ScalarField, inner: InnerState, frequencies: Vec<f64>, survey: &Survey) -> Result<Self> {
        let n = Padding::new(survey.grid, survey.pml.width)?.padded().len();
        let ns = survey.acquisition.num_sources();
        let nr = survey.acquisition.receivers.len();
        let zero = Complex64::new(0.0, 0.0);
        let nf = frequencies.len();
        Ok(Self {
            m,
            inner,
            source_duals: vec![vec![vec![zero; n]; ns]; nf],
            data_duals: vec![vec![vec![zero; nr]; ns]; nf],
            penalties: None,
            data_weights: vec![None; nf],
            wavefields: vec![Vec::new(); nf],
            frequencies,
            iteration: 0,
        })
    }
}

/// Relative residuals after one outer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub wave_residual: f64,
    pub data_residual: f64,
}

#[cfg(feature = "parallel")]
fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).map(f).collect()
}

/// Mean of the row sums `Σⱼ |Aᵢⱼ|²`, i.e. of the diagonal of `AᴴA`.
fn mean_normal_diagonal(op: &HelmholtzOperator) -> f64 {
    let a = op.matrix();
    let total: f64 = (0..a.rows()).map(|r| a.row(r).map(|(_, v)| v.norm_sqr()).sum::<f64>()).sum();
    total / a.rows() as f64
}

/// Box used for an update: the configured bounds once active, otherwise
/// only the positivity floor.
fn active_box(settings: &OuterSettings, scale: f64, bounds_active: bool) -> BoxBounds {
    let floor = POSITIVITY_FLOOR * scale;
    let (lower, upper) = if bounds_active {
        (
            settings.bounds.lower.iter().map(|l| l.max(floor)).collect(),
            settings.bounds.upper.clone(),
        )
    } else {
        let n = settings.bounds.len();
        (vec![floor; n], vec![f64::INFINITY; n])
    };
    BoxBounds { lower, upper }
}

struct FrequencySweep {
    omega: f64,
    owner: Vec<usize>,
    receivers: Vec<usize>,
    data_weight: f64,
    sources: Vec<Vec<Complex64>>,
    fields: Vec<Vec<Complex64>>,
    laplacian_u: Vec<Vec<Complex64>>,
}

/// One outer iteration on `state`.
pub fn outer_step(
    state: &mut OuterState,
    survey: &Survey,
    data: &ObservedData,
    settings: &OuterSettings,
    bounds_active: bool,
) -> Result<StepReport> {
    let receivers = &survey.acquisition.receivers;
    let ns = survey.acquisition.num_sources();
    let n = survey.grid.len();
    let observed: Vec<&FrequencyData> = state
        .frequencies
        .iter()
        .map(|&f| data.at(f))
        .collect::<Result<_>>()?;

    let sweeps = map_indexed(state.frequencies.len(), |fi| {
        let frequency = state.frequencies[fi];
        let op = survey.operator(&state.m, frequency)?;
        let data_weight = state.data_weights[fi].unwrap_or_else(|| settings.data_weight_rel * mean_normal_diagonal(&op));
        let recon = WavefieldReconstructor::new(&op, receivers, data_weight)?;
        let sources: Vec<Vec<Complex64>> = survey.source_terms(frequency).iter().map(|b| op.embed(b)).collect();
        let obs = observed[fi];
        let fields = map_indexed(ns, |s| {
            let d_aug: Vec<Complex64> = obs.values[s].iter().zip(&state.data_duals[fi][s]).map(|(a, b)| a + b).collect();
            let b_aug: Vec<Complex64> = sources[s].iter().zip(&state.source_duals[fi][s]).map(|(a, b)| a + b).collect();
            recon.solve(&d_aug, &b_aug)
        })?;
        let laplacian_u = fields.iter().map(|u| op.apply_laplacian(u)).collect();
        Ok(FrequencySweep {
            omega: op.omega(),
            owner: op.padding().owner().to_vec(),
            receivers: op.receiver_cells(receivers)?,
            data_weight,
            sources,
            fields,
            laplacian_u,
        })
    })?;

    let mut term = DataTerm::zeros(n);
    for (fi, sweep) in sweeps.iter().enumerate() {
        state.data_weights[fi] = Some(sweep.data_weight);
        for s in 0..ns {
            let l = build_l(&sweep.fields[s], sweep.omega);
            let y: Vec<Complex64> = (0..sweep.owner.len())
                .map(|i| sweep.sources[s][i] + state.source_duals[fi][s][i] - sweep.laplacian_u[s][i])
                .collect();
            term.accumulate_padded(&l, &y, &sweep.owner);
        }
    }

    let scale = state.inner.scale;
    let penalties = match state.penalties {
        Some(p) => p,
        None => {
            let p = settings.penalties.resolve(&term, scale)?;
            log::debug!("batch penalties {p:?}");
            state.penalties = Some(p);
            p
        }
    };
    let bounds = active_box(settings, scale, bounds_active);
    let update = update_model(&term, &mut state.inner, &bounds, &penalties, settings.inner_iterations)?;
    state.m = project_box(&update.m, &bounds);

    let (mut wave_num, mut wave_den, mut data_num, mut data_den) = (0.0, 0.0, 0.0, 0.0);
    for (fi, sweep) in sweeps.iter().enumerate() {
        let w2 = sweep.omega * sweep.omega;
        for s in 0..ns {
            let u = &sweep.fields[s];
            for (i, &o) in sweep.owner.iter().enumerate() {
                let au = sweep.laplacian_u[s][i] + u[i] * (w2 * state.m.values[o]);
                let r = sweep.sources[s][i] - au;
                state.source_duals[fi][s][i] += r;
                wave_num += r.norm_sqr();
                wave_den += sweep.sources[s][i].norm_sqr();
            }
            let pu = sample(u, &sweep.receivers)?;
            for (j, (d, p)) in observed[fi].values[s].iter().zip(&pu).enumerate() {
                let r = d - p;
                state.data_duals[fi][s][j] += r;
                data_num += r.norm_sqr();
                data_den += d.norm_sqr();
            }
        }
    }
    state.wavefields = sweeps.into_iter().map(|s| s.fields).collect();
    state.iteration += 1;
    let ratio = |a: f64, b: f64| (a / b.max(f64::MIN_POSITIVE)).sqrt();
    Ok(StepReport {
        wave_residual: ratio(wave_num, wave_den),
        data_residual: ratio(data_num, data_den),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Converged,
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub path: usize,
    pub batch: usize,
    /// 1-based within the batch.
    pub iteration: usize,
    /// 1-based over the whole run.
    pub total: usize,
    pub data_residual: f64,
    pub wave_residual: f64,
    pub model_error: Option<f64>,
    /// Regularizer value of the normalized model and its split.
    pub reg_value: f64,
    pub stop: Option<StopReason>,
}

#[derive(Clone, Debug)]
pub struct InversionResult {
    /// Final model, inside the box constraint when it is active.
    pub model: ScalarField,
    pub m1: ScalarField,
    pub m2: ScalarField,
    pub history: Vec<IterationRecord>,
    /// Resolved parameters of each batch, in run order.
    pub batches: Vec<BatchSummary>,
    pub scale: f64,
}

/// Parameters resolved at the start of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub path: usize,
    pub batch: usize,
    pub frequencies: Vec<f64>,
    pub penalties: Penalties,
    /// `μ` per frequency.
    pub data_weights: Vec<f64>,
    pub iterations: usize,
    /// Model at the end of the batch.
    pub model: ScalarField,
}

/// Runs every batch of the schedule, warm-starting the model and its split
/// and resetting the duals at each batch.
pub fn run_continuation(
    m0: &ScalarField,
    survey: &Survey,
    data: &ObservedData,
    schedule: &ContinuationSchedule,
    settings: &OuterSettings,
    truth: Option<&ScalarField>,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<InversionResult> {
    survey.grid.check_same(&m0.grid, "starting model")?;
    schedule.validate()?;
    settings.validate(&survey.grid)?;
    data.validate(survey)?;
    let scale = settings.model_scale_rel * m0.mean();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(FwiError::InvalidParameter(format!("model scale {scale} must be positive")));
    }
    let spec = settings.spec;
    let mut m = m0.clone();
    let mut split: Option<(ScalarField, ScalarField)> = None;
    let mut history = Vec::new();
    let mut batches = Vec::new();
    let mut total = 0;
    let mut bounds_active = false;
    for path in 0..schedule.paths {
        for (bi, batch) in schedule.batches.iter().enumerate() {
            let inner = match &split {
                None => InnerState::new(&m, spec, scale)?,
                Some((m1, m2)) => InnerState::with_split(m1, m2, spec, scale)?,
            };
            let mut state = OuterState::new(m.clone(), inner, batch.clone(), survey)?;
            loop {
                bounds_active = total >= schedule.bounds_from;
                let report =
                    outer_step(&mut state, survey, data, settings, bounds_active).map_err(|e| FwiError::Iteration {
                        batch: bi,
                        iteration: state.iteration + 1,
                        source: Box::new(e),
                    })?;
                total += 1;
                let k = state.iteration;
                let stop = if check_stop(k, &schedule.stop, report.wave_residual, report.data_residual) {
                    Some(if k >= schedule.stop.k_max {
                        StopReason::MaxIterations
                    } else {
                        StopReason::Converged
                    })
                } else {
                    None
                };
                let model_error = truth.map(|t| state.m.relative_error(t)).transpose()?;
                let reg_value = {
                    let inner = &state.inner;
                    let m_hat = inner.m1.axpy(1.0, &inner.m2);
                    eval_regularizer(&spec, &m_hat, Some((&inner.m1, &inner.m2)))?
                };
                let record = IterationRecord {
                    path,
                    batch: bi,
                    iteration: k,
                    total,
                    data_residual: report.data_residual,
                    wave_residual: report.wave_residual,
                    model_error,
                    reg_value,
                    stop,
                };
                log::info!(
                    "path {path} batch {bi} iter {k}: data {:.3e} wave {:.3e}{}",
                    record.data_residual,
                    record.wave_residual,
                    model_error.map(|e| format!(" model err {e:.4}")).unwrap_or_default()
                );
                observer(&record);
                history.push(record);
                if stop.is_some() {
                    break;
                }
            }
            if let Some(p) = state.penalties {
                batches.push(BatchSummary {
                    path,
                    batch: bi,
                    frequencies: state.frequencies.clone(),
                    penalties: p,
                    data_weights: state.data_weights.iter().flatten().copied().collect(),
                    iterations: state.iteration,
                    model: state.m.clone(),
                });
            }
            m = state.m;
            split = Some(state.inner.split());
        }
    }
    let (m1, m2) = split.expect("at least one batch ran");
    let model = project_box(&m, &active_box(settings, scale, bounds_active));
    Ok(InversionResult {
        model,
        m1,
        m2,
        history,
        batches,
        scale,
    })
}
