//! Experiment harness: synthetic models, data simulation, file formats,
//! run configuration and regularizer comparison.

pub mod config;
pub mod io;
pub mod run;
pub mod synth;

use crate::error::{FwiError, Result};
use crate::grid::ScalarField;
use crate::helmholtz::sample;
use crate::irwri::{FrequencyData, ObservedData, Survey};

pub use config::{Preset, RunConfig};
pub use io::{read_data_file, write_data_file, Raster, RasterKind};
pub use run::{compare_regularizers, invert, simulate, ComparisonRow, InvertOutcome, PreparedRun};
pub use synth::{gradient_model, synth_model, SynthKind, SynthModel, SynthParams};

/// Minimum points per wavelength below which simulation warns.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 10.0;

/// Relative ℓ2 model error `‖m − m*‖ / ‖m*‖`.
///
/// Only the values matter, so the same data laid out on differently shaped
/// grids compares equal.
pub fn model_error(m: &ScalarField, truth: &ScalarField) -> Result<f64> {
    if m.len() != truth.len() {
        return Err(FwiError::ShapeMismatch(format!(
            "model of {} cells vs reference of {}",
            m.len(),
            truth.len()
        )));
    }
    let t = truth.norm2();
    if t == 0.0 {
        return Err(FwiError::InvalidParameter("reference model is zero".into()));
    }
    let d: f64 = m.values.iter().zip(&truth.values).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d.sqrt() / t)
}

/// Points per wavelength of the slowest wave at `frequency`.
pub fn points_per_wavelength(m: &ScalarField, frequency: f64) -> f64 {
    let max_m = m.values.iter().copied().fold(f64::MIN, f64::max);
    1.0 / max_m.sqrt() / frequency / m.grid.spacing()
}

/// Noiseless receiver data `P A(m)⁻¹ b` for every frequency and source.
pub fn simulate_data(m: &ScalarField, survey: &Survey, frequencies: &[f64]) -> Result<ObservedData> {
    let receivers = &survey.acquisition.receivers;
    let mut sets = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        let ppw = points_per_wavelength(m, f);
        if ppw < MIN_POINTS_PER_WAVELENGTH {
            log::warn!("{f} Hz sampled at {ppw:.1} points per wavelength (< {MIN_POINTS_PER_WAVELENGTH})");
        }
        let op = survey.operator(m, f)?;
        let solver = op.factorize()?;
        let cells = op.receiver_cells(receivers)?;
        let values = survey
            .source_terms(f)
            .iter()
            .map(|b| sample(&solver.solve(&op.embed(b))?, &cells))
            .collect::<Result<Vec<_>>>()?;
        sets.push(FrequencyData { frequency: f, values });
    }
    Ok(ObservedData { sets })
}
