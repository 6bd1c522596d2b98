//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! Every export works on a 1D profile with a source in the first cell and a
//! receiver every four cells.

use num_complex::Complex64;
use pwfwi::helmholtz::{forward_solve, Acquisition, Pml, Source};
use pwfwi::irwri::{run_continuation, ContinuationSchedule, OuterSettings, StopRule, Survey};
use pwfwi::prox::{BoxBounds, RegularizerKind, RegularizerSpec};
use pwfwi::subproblem::PenaltyRule;
use pwfwi::workbench::synth::{slowness_to_velocity, velocity_to_slowness};
use pwfwi::workbench::{model_error, simulate_data, synth_model, SynthKind, SynthParams};
use pwfwi::{ModelGrid, Result, ScalarField};
use wasm_bindgen::prelude::*;

const SPACING: f64 = 10.0;
const PML_WIDTH: usize = 20;
const RECEIVER_STEP: usize = 4;
const PEAK_FREQUENCY: f64 = 10.0;

fn survey(grid: ModelGrid, mean_velocity: f64) -> Result<Survey> {
    let source = Source {
        cell: 0,
        amplitude: Complex64::new(1.0, 0.0),
    };
    let receivers = (0..grid.len()).step_by(RECEIVER_STEP).collect();
    let acquisition = Acquisition::new(vec![source], receivers, &grid)?;
    let pml = Pml::for_reflection(PML_WIDTH, SPACING, mean_velocity, 1e-3);
    Survey::new(grid, acquisition, pml, PEAK_FREQUENCY)
}

fn velocity_field(velocity: &[f64]) -> Result<ScalarField> {
    ScalarField::new(ModelGrid::profile(velocity.len(), SPACING)?, velocity.to_vec())
}

pub fn synth(kind: &str, n: usize, seed: u64) -> Result<Vec<f64>> {
    let kind: SynthKind = kind.parse()?;
    Ok(synth_model(&SynthParams::profile(kind, n, SPACING, seed))?.velocity.values)
}

/// Real parts followed by imaginary parts of the wavefield.
pub fn wavefield(velocity: &[f64], frequency: f64) -> Result<Vec<f64>> {
    let v = velocity_field(velocity)?;
    let survey = survey(v.grid, v.mean())?;
    let op = survey.operator(&velocity_to_slowness(&v), frequency)?;
    let b = &survey.source_terms(frequency)[0];
    let u = forward_solve(&op, b, 0, frequency)?;
    Ok(u.values.iter().map(|z| z.re).chain(u.values.iter().map(|z| z.im)).collect())
}

/// Final velocity of an inversion from the mean-velocity start, with the
/// relative squared-slowness error appended.
pub fn invert(velocity: &[f64], frequency: f64, regularizer: &str, alpha: f64, iterations: usize) -> Result<Vec<f64>> {
    let truth_v = velocity_field(velocity)?;
    let truth = velocity_to_slowness(&truth_v);
    let grid = truth.grid;
    let survey = survey(grid, truth_v.mean())?;
    let data = simulate_data(&truth, &survey, &[frequency])?;
    let (vmin, vmax) = velocity.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let bounds = BoxBounds::uniform(grid.len(), 1.0 / (1.5 * vmax).powi(2), 1.0 / (0.5 * vmin).powi(2))?;
    let kind: RegularizerKind = regularizer.parse()?;
    let settings = OuterSettings {
        spec: RegularizerSpec::new(kind, alpha)?,
        penalties: PenaltyRule::default(),
        data_weight_rel: 1.0,
        inner_iterations: 5,
        bounds,
        model_scale_rel: 1.0,
    };
    let schedule = ContinuationSchedule {
        batches: vec![vec![frequency]],
        stop: StopRule {
            k_max: iterations,
            eps_b: 0.0,
            eps_d: 0.0,
        },
        paths: 1,
        bounds_from: 0,
    };
    let m0 = ScalarField::constant(grid, 1.0 / truth_v.mean().powi(2));
    let result = run_continuation(&m0, &survey, &data, &schedule, &settings, None, |_| {})?;
    let mut out = slowness_to_velocity(&result.model).values;
    out.push(model_error(&result.model, &truth)?);
    Ok(out)
}

fn js(e: pwfwi::FwiError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn synth_profile(kind: &str, n: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    synth(kind, n, seed as u64).map_err(js)
}

#[wasm_bindgen]
pub fn profile_wavefield(velocity: &[f64], frequency: f64) -> Result<Vec<f64>, JsError> {
    wavefield(velocity, frequency).map_err(js)
}

#[wasm_bindgen]
pub fn invert_profile(
    velocity: &[f64],
    frequency: f64,
    regularizer: &str,
    alpha: f64,
    iterations: usize,
) -> Result<Vec<f64>, JsError> {
    invert(velocity, frequency, regularizer, alpha, iterations).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_round_trip() {
        let v = synth("piecewise-linear", 120, 2).unwrap();
        assert_eq!(v.len(), 120);
        let u = wavefield(&v, 5.0).unwrap();
        assert_eq!(u.len(), 240);
        assert!(u.iter().all(|x| x.is_finite()) && u.iter().any(|&x| x != 0.0));
        let out = invert(&v, 5.0, "tgv", 0.3, 20).unwrap();
        assert_eq!(out.len(), 121);
        let m = velocity_to_slowness(&velocity_field(&v).unwrap());
        let start = ScalarField::constant(m.grid, 1.0 / velocity_field(&v).unwrap().mean().powi(2));
        assert!(out[120] < model_error(&start, &m).unwrap());
    }

    #[test]
    fn bad_names_are_errors() {
        assert!(synth("blobs", 100, 0).is_err());
        let v = vec![2000.0; 60];
        assert!(invert(&v, 5.0, "l3", 0.5, 2).is_err());
    }
}
