//! Seeded synthetic velocity models.
//!
//! Profiles vary along depth: the z axis on 2D grids, the single axis on
//! 1D grids.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};

/// Physical velocity range accepted by the generators, m/s.
pub const VELOCITY_RANGE: (f64, f64) = (1000.0, 6000.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    PiecewiseConstant,
    PiecewiseSmooth,
    PiecewiseLinear,
    GradientInclusion,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [
        SynthKind::PiecewiseConstant,
        SynthKind::PiecewiseSmooth,
        SynthKind::PiecewiseLinear,
        SynthKind::GradientInclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::PiecewiseConstant => "piecewise-constant",
            SynthKind::PiecewiseSmooth => "piecewise-smooth",
            SynthKind::PiecewiseLinear => "piecewise-linear",
            SynthKind::GradientInclusion => "gradient-inclusion",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FwiError::InvalidParameter(format!("unknown model kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub kind: SynthKind,
    pub nx: usize,
    pub nz: usize,
    pub h: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// Number of layers of the piecewise kinds.
    pub layers: usize,
    /// Inclusion velocity of [`SynthKind::GradientInclusion`]; `vmax` when unset.
    pub inclusion_velocity: Option<f64>,
    pub seed: u64,
}

impl SynthParams {
    /// 1D profile defaults: 1500-4500 m/s, five layers.
    pub fn profile(kind: SynthKind, n: usize, h: f64, seed: u64) -> Self {
        Self {
            kind,
            nx: n,
            nz: 1,
            h,
            vmin: 1500.0,
            vmax: 4500.0,
            layers: 5,
            inclusion_velocity: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ModelGrid::new(self.nx, self.nz, self.h)?;
        let (lo, hi) = VELOCITY_RANGE;
        let inside = |v: f64| (lo..=hi).contains(&v);
        if !(inside(self.vmin) && inside(self.vmax) && self.vmin < self.vmax) {
            return Err(FwiError::InvalidParameter(format!(
                "velocities [{}, {}] must be increasing and within [{lo}, {hi}] m/s",
                self.vmin, self.vmax
            )));
        }
        if let Some(v) = self.inclusion_velocity {
            if !inside(v) {
                return Err(FwiError::InvalidParameter(format!(
                    "inclusion velocity {v} outside [{lo}, {hi}] m/s"
                )));
            }
        }
        if self.layers == 0 {
            return Err(FwiError::InvalidParameter("need at least one layer".into()));
        }
        let depth_cells = if self.nz > 1 { self.nz } else { self.nx };
        if self.layers * 4 > depth_cells {
            return Err(FwiError::InvalidParameter(format!(
                "{} layers do not fit in {depth_cells} cells",
                self.layers
            )));
        }
        Ok(())
    }
}

/// Velocity model and its squared slowness `1/v²`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthModel {
    pub velocity: ScalarField,
    pub slowness: ScalarField,
}

impl SynthModel {
    pub fn from_velocity(velocity: ScalarField) -> Self {
        let slowness = velocity_to_slowness(&velocity);
        Self { velocity, slowness }
    }
}

pub fn velocity_to_slowness(v: &ScalarField) -> ScalarField {
    v.map(|x| 1.0 / (x * x))
}

pub fn slowness_to_velocity(m: &ScalarField) -> ScalarField {
    m.map(|x| 1.0 / x.sqrt())
}

/// Sorted interface positions in `(0, 1)`, at least `gap` apart.
fn interfaces(rng: &mut ChaCha8Rng, count: usize, gap: f64) -> Vec<f64> {
    loop {
        let mut cuts: Vec<f64> = (0..count).map(|_| rng.gen_range(gap..1.0 - gap)).collect();
        cuts.sort_by(f64::total_cmp);
        if cuts.windows(2).all(|w| w[1] - w[0] >= gap) {
            return cuts;
        }
    }
}

fn layer_of(cuts: &[f64], d: f64) -> usize {
    cuts.iter().take_while(|&&c| d >= c).count()
}

/// Layer velocities drifting upwards with depth, neighbours at least 10% of
/// the range apart.
fn layer_values(rng: &mut ChaCha8Rng, layers: usize, lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let mut out: Vec<f64> = Vec::with_capacity(layers);
    for k in 0..layers {
        let centre = lo + span * (k as f64 + 0.5) / layers as f64;
        loop {
            let v = (centre + rng.gen_range(-0.3..0.3) * span).clamp(lo, hi);
            if out.last().map_or(true, |&p| (v - p).abs() >= 0.1 * span) {
                out.push(v);
                break;
            }
        }
    }
    out
}

pub fn synth_model(params: &SynthParams) -> Result<SynthModel> {
    params.validate()?;
    let grid = ModelGrid::new(params.nx, params.nz, params.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (lo, hi) = (params.vmin, params.vmax);
    let span = hi - lo;
    let two_d = params.nz > 1;
    let depth_cells = if two_d { params.nz } else { params.nx };
    let depth = |ix: usize, iz: usize| {
        let i = if two_d { iz } else { ix };
        i as f64 / (depth_cells - 1) as f64
    };
    let gap = 1.0 / (3.0 * params.layers as f64);
    let cuts = interfaces(&mut rng, params.layers - 1, gap.max(3.0 / depth_cells as f64));

    let velocity = match params.kind {
        SynthKind::PiecewiseConstant => {
            let values = layer_values(&mut rng, params.layers, lo, hi);
            ScalarField::from_fn(grid, |ix, iz| values[layer_of(&cuts, depth(ix, iz))])
        }
        SynthKind::PiecewiseSmooth => {
            // Smooth trend plus blocky offsets.
            let offsets: Vec<f64> = (0..params.layers).map(|_| rng.gen_range(-0.2..0.2) * span).collect();
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let waves = rng.gen_range(1.0..2.0);
            ScalarField::from_fn(grid, |ix, iz| {
                let d = depth(ix, iz);
                let trend = lo + span * (0.2 + 0.55 * d) + 0.08 * span * (std::f64::consts::TAU * waves * d + phase).sin();
                (trend + offsets[layer_of(&cuts, d)]).clamp(lo, hi)
            })
        }
        SynthKind::PiecewiseLinear => {
            let starts = layer_values(&mut rng, params.layers, lo, hi);
            let slopes: Vec<f64> = (0..params.layers).map(|_| rng.gen_range(-1.0..2.0) * span).collect();
            let mut bounds = vec![0.0];
            bounds.extend(&cuts);
            ScalarField::from_fn(grid, |ix, iz| {
                let d = depth(ix, iz);
                let k = layer_of(&cuts, d);
                (starts[k] + slopes[k] * (d - bounds[k])).clamp(lo, hi)
            })
        }
        SynthKind::GradientInclusion => {
            let inclusion = params.inclusion_velocity.unwrap_or(hi);
            let (nx, nz) = (params.nx as f64, params.nz as f64);
            let cx = rng.gen_range(0.35..0.65) * nx;
            let cz = rng.gen_range(0.4..0.6) * depth_cells as f64;
            let radius = rng.gen_range(0.1..0.15) * if two_d { nx.min(nz) } else { depth_cells as f64 };
            ScalarField::from_fn(grid, |ix, iz| {
                let (x, z) = (ix as f64, if two_d { iz as f64 } else { ix as f64 });
                let inside = if two_d {
                    (x - cx).powi(2) + (z - cz).powi(2) <= radius * radius
                } else {
                    (z - cz).abs() <= radius
                };
                if inside {
                    inclusion
                } else {
                    lo + span * depth(ix, iz)
                }
            })
        }
    };
    Ok(SynthModel::from_velocity(velocity))
}

/// Laterally homogeneous model increasing linearly with depth from `top` to `bottom`.
pub fn gradient_model(grid: ModelGrid, top: f64, bottom: f64) -> SynthModel {
    let two_d = grid.nz() > 1;
    let cells = if two_d { grid.nz() } else { grid.nx() };
    SynthModel::from_velocity(ScalarField::from_fn(grid, |ix, iz| {
        let i = if two_d { iz } else { ix };
        top + (bottom - top) * i as f64 / (cells - 1) as f64
    }))
}
