//! Frequency-domain Helmholtz operator `A(m) = Δ_pml + ω² diag(m)` on the
//! model grid, its factorized solves, and the relaxed wavefield
//! reconstruction used by the outer iteration.
//!
//! The absorbing layer pads the model grid with `width` cells on each side
//! (both ends of a 1D profile, all four sides in 2D). Padded cells copy the
//! nearest model value and are stretched with `s(x) = 1 + iσ(x)/ω`,
//! `σ = σ₀ (depth/width)²` (time convention `e^{-iωt}`, outgoing waves
//! `e^{ik|x|}`). Cells beyond the padded edge are held at zero.
//!
//! Operator matrices and raw solver vectors live on the padded grid;
//! [`HelmholtzOperator::embed`] and [`HelmholtzOperator::restrict`] move
//! between the two.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::linalg::{BandLu, CsrMatrix};

/// Absorbing-layer parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pml {
    /// Layer thickness in cells.
    pub width: usize,
    /// Peak damping σ₀ in 1/s.
    pub strength: f64,
}

/// Target normal-incidence reflection coefficient for [`Pml::for_reflection`].
pub const DEFAULT_PML_REFLECTION: f64 = 1e-3;

impl Pml {
    pub fn none() -> Self {
        Self {
            width: 0,
            strength: 0.0,
        }
    }

    /// Quadratic profile whose continuous normal-incidence reflection
    /// `exp(-2/c ∫σ)` equals `reflection` for waves travelling at `velocity`.
    pub fn for_reflection(width: usize, h: f64, velocity: f64, reflection: f64) -> Self {
        let thickness = width as f64 * h;
        let strength = if width == 0 {
            0.0
        } else {
            3.0 * velocity * (1.0 / reflection).ln() / (2.0 * thickness)
        };
        Self { width, strength }
    }

    /// Stretch factor at fractional cell coordinate `x` along an axis of `n` cells.
    fn stretch(&self, x: f64, n: usize, omega: f64) -> Complex64 {
        if self.width == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let w = self.width as f64;
        let depth = (w - x).max(x - (n as f64 - 1.0 - w)).max(0.0);
        let ratio = (depth / w).min(1.0);
        Complex64::new(1.0, self.strength * ratio * ratio / omega)
    }

    fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(FwiError::InvalidParameter(format!(
                "PML strength {} must be non-negative",
                self.strength
            )));
        }
        if self.width > 0 && self.width < 2 {
            return Err(FwiError::InvalidParameter("PML width must be 0 or >= 2".into()));
        }
        Ok(())
    }
}

/// Map between a model grid and the grid padded by the absorbing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Padding {
    model: ModelGrid,
    padded: ModelGrid,
    width: usize,
    /// Model cell supplying each padded cell's value.
    owner: Vec<usize>,
    /// Padded index of each model cell.
    inner: Vec<usize>,
}

impl Padding {
    pub fn new(model: ModelGrid, width: usize) -> Result<Self> {
        let (nx, nz) = (model.nx(), model.nz());
        let pz = if model.is_1d() { 0 } else { width };
        let padded = ModelGrid::new(nx + 2 * width, nz + 2 * pz, model.spacing())?;
        let owner = (0..padded.len())
            .map(|i| {
                let (ix, iz) = padded.coords(i);
                let mx = ix.saturating_sub(width).min(nx - 1);
                let mz = iz.saturating_sub(pz).min(nz - 1);
                model.index(mx, mz)
            })
            .collect();
        let inner = (0..model.len())
            .map(|i| {
                let (ix, iz) = model.coords(i);
                padded.index(ix + width, iz + pz)
            })
            .collect();
        Ok(Self {
            model,
            padded,
            width,
            owner,
            inner,
        })
    }

    pub fn model(&self) -> ModelGrid {
        self.model
    }

    pub fn padded(&self) -> ModelGrid {
        self.padded
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Model cell whose value each padded cell copies.
    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Padded index of each model cell.
    pub fn inner(&self) -> &[usize] {
        &self.inner
    }

    /// Padded index of model cell `i`.
    pub fn to_padded(&self, i: usize) -> usize {
        self.inner[i]
    }

    /// Edge-replicated extension of a model field.
    pub fn extend(&self, m: &[f64]) -> Vec<f64> {
        self.owner.iter().map(|&o| m[o]).collect()
    }

    /// Zero-padded copy of a model-grid vector.
    pub fn embed<T: Copy + Default>(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.padded.len()];
        for (&p, &x) in self.inner.iter().zip(v) {
            out[p] = x;
        }
        out
    }

    /// Model-grid part of a padded vector.
    pub fn restrict<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.inner.iter().map(|&p| v[p]).collect()
    }
}

/// Source positions/amplitudes and receiver positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Acquisition {
    pub sources: Vec<Source>,
    pub receivers: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Source {
    pub cell: usize,
    pub amplitude: Complex64,
}

impl Acquisition {
    pub fn new(sources: Vec<Source>, receivers: Vec<usize>, grid: &ModelGrid) -> Result<Self> {
        let acq = Self { sources, receivers };
        acq.validate(grid)?;
        Ok(acq)
    }

    pub fn validate(&self, grid: &ModelGrid) -> Result<()> {
        let n = grid.len();
        if let Some(s) = self.sources.iter().find(|s| s.cell >= n) {
            return Err(FwiError::InvalidParameter(format!(
                "source cell {} outside grid of {n} cells",
                s.cell
            )));
        }
        if let Some(r) = self.receivers.iter().find(|&&r| r >= n) {
            return Err(FwiError::InvalidParameter(format!(
                "receiver cell {r} outside grid of {n} cells"
            )));
        }
        let mut sorted = self.receivers.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(FwiError::InvalidParameter("duplicate receiver cells".into()));
        }
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Point-source right-hand side for source `s`, multiplied by `scale`
    /// (typically the wavelet spectrum) and normalized by the cell volume.
    pub fn source_vector(&self, grid: &ModelGrid, s: usize, scale: Complex64) -> Vec<Complex64> {
        let mut b = vec![Complex64::new(0.0, 0.0); grid.len()];
        let src = self.sources[s];
        b[src.cell] = src.amplitude * scale / grid.spacing().powi(grid.dimension());
        b
    }
}

/// Complex wavefield for one source at one frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefield {
    pub grid: ModelGrid,
    pub values: Vec<Complex64>,
    pub source: usize,
    pub frequency: f64,
}

/// Assembled Helmholtz matrix for one model and angular frequency.
#[derive(Clone, Debug)]
pub struct HelmholtzOperator {
    grid: ModelGrid,
    padding: Padding,
    omega: f64,
    pml: Pml,
    extended: Vec<f64>,
    laplacian: CsrMatrix<Complex64>,
    matrix: CsrMatrix<Complex64>,
}

impl HelmholtzOperator {
    pub fn assemble(m: &ScalarField, omega: f64, pml: Pml) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(FwiError::InvalidParameter(format!("omega = {omega} must be positive")));
        }
        if let Some(v) = m.values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(FwiError::InvalidParameter(format!(
                "squared slowness must be positive, found {v}"
            )));
        }
        pml.validate()?;
        let padding = Padding::new(m.grid, pml.width)?;
        let laplacian = stretched_laplacian(&padding.padded(), omega, &pml);
        let extended = padding.extend(&m.values);
        let mass: Vec<Complex64> = extended
            .iter()
            .map(|&mi| Complex64::new(omega * omega * mi, 0.0))
            .collect();
        let matrix = laplacian.add_diagonal(&mass);
        Ok(Self {
            grid: m.grid,
            padding,
            omega,
            pml,
            extended,
            laplacian,
            matrix,
        })
    }

    /// The model grid.
    pub fn grid(&self) -> ModelGrid {
        self.grid
    }

    pub fn padding(&self) -> &Padding {
        &self.padding
    }

    /// Model values on the padded grid.
    pub fn extended_model(&self) -> &[f64] {
        &self.extended
    }

    /// Zero-padded copy of a model-grid source vector.
    pub fn embed(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.padding.embed(v)
    }

    /// Model-grid part of a padded wavefield.
    pub fn restrict(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.padding.restrict(u)
    }

    /// Padded indices of model-grid receiver cells.
    pub fn receiver_cells(&self, receivers: &[usize]) -> Result<Vec<usize>> {
        receivers
            .iter()
            .map(|&r| {
                self.padding.inner.get(r).copied().ok_or_else(|| {
                    FwiError::InvalidParameter(format!("receiver {r} outside grid of {} cells", self.grid.len()))
                })
            })
            .collect()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn pml(&self) -> Pml {
        self.pml
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    /// The model-independent part `Δ_pml`.
    pub fn laplacian(&self) -> &CsrMatrix<Complex64> {
        &self.laplacian
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.matrix.mul_vec(u)
    }

    pub fn apply_laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.laplacian.mul_vec(u)
    }

    pub fn factorize(&self) -> Result<ForwardSolver> {
        Ok(ForwardSolver {
            n: self.padding.padded().len(),
            lu: self.matrix.to_band().factorize("Helmholtz operator")?,
        })
    }
}

/// Builds `Δ_pml` with the 3-point (1D) or 5-point (2D) stencil.
fn stretched_laplacian(grid: &ModelGrid, omega: f64, pml: &Pml) -> CsrMatrix<Complex64> {
    let (nx, nz) = (grid.nx(), grid.nz());
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut t = Vec::with_capacity(5 * grid.len());
    // One axis at a time: coefficient (1/s_i)(1/s_{i±1/2})/h² to each neighbour.
    let mut axis = |len: usize, stride: usize, count: usize, base: &dyn Fn(usize) -> usize| {
        for line in 0..count {
            let start = base(line);
            for i in 0..len {
                let row = start + i * stride;
                let s_c = pml.stretch(i as f64, len, omega);
                let s_m = pml.stretch(i as f64 - 0.5, len, omega);
                let s_p = pml.stretch(i as f64 + 0.5, len, omega);
                let c_m = inv_h2 / (s_c * s_m);
                let c_p = inv_h2 / (s_c * s_p);
                t.push((row, row, -(c_m + c_p)));
                if i > 0 {
                    t.push((row, row - stride, c_m));
                }
                if i + 1 < len {
                    t.push((row, row + stride, c_p));
                }
            }
        }
    };
    axis(nx, nz, nz, &|iz| iz);
    if nz > 1 {
        axis(nz, 1, nx, &|ix| ix * nz);
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), t)
}

/// Factorized `A(m)` for repeated forward solves on the padded grid.
#[derive(Clone, Debug)]
pub struct ForwardSolver {
    n: usize,
    lu: BandLu<Complex64>,
}

impl ForwardSolver {
    /// Solves with a padded right-hand side and returns the padded field.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.n {
            return Err(FwiError::ShapeMismatch(format!(
                "source vector of {} entries for {} padded cells",
                b.len(),
                self.n
            )));
        }
        let u = self.lu.solve(b);
        if u.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(FwiError::NonFinite("forward solve".into()));
        }
        Ok(u)
    }
}

/// Solves `A(m) u = b` for a model-grid source and returns the model-grid field.
pub fn forward_solve(op: &HelmholtzOperator, b: &[Complex64], source: usize, frequency: f64) -> Result<Wavefield> {
    if b.len() != op.grid.len() {
        return Err(FwiError::ShapeMismatch(format!(
            "source vector of {} entries for {} cells",
            b.len(),
            op.grid.len()
        )));
    }
    let values = op.restrict(&op.factorize()?.solve(&op.embed(b))?);
    Ok(Wavefield {
        grid: op.grid,
        values,
        source,
        frequency,
    })
}

/// Factorized normal matrix `μ PᵀP + AᴴA` of the relaxed wavefield problem,
/// shared by all sources at one frequency.
#[derive(Clone, Debug)]
pub struct WavefieldReconstructor {
    n: usize,
    adjoint: CsrMatrix<Complex64>,
    receivers: Vec<usize>,
    data_weight: f64,
    lu: BandLu<Complex64>,
}

impl WavefieldReconstructor {
    /// `data_weight` is the ratio `λ/γ` between data and wave-equation terms.
    pub fn new(op: &HelmholtzOperator, receivers: &[usize], data_weight: f64) -> Result<Self> {
        if !(data_weight >= 0.0 && data_weight.is_finite()) {
            return Err(FwiError::InvalidParameter(format!(
                "data weight λ/γ = {data_weight} must be non-negative"
            )));
        }
        let receivers = op.receiver_cells(receivers)?;
        let n = op.padding.padded().len();
        let adjoint = op.matrix.adjoint();
        let mut normal = adjoint.matmul(&op.matrix);
        if data_weight > 0.0 {
            let mut d = vec![Complex64::new(0.0, 0.0); n];
            for &r in &receivers {
                d[r] += data_weight;
            }
            normal = normal.add_diagonal(&d);
        }
        let lu = normal.to_band().factorize("wavefield normal equations")?;
        Ok(Self {
            n,
            adjoint,
            receivers,
            data_weight,
            lu,
        })
    }

    pub fn data_weight(&self) -> f64 {
        self.data_weight
    }

    /// Minimizes `μ‖Pu − d_aug‖² + ‖A u − b_aug‖²`; `b_aug` and the
    /// returned field are on the padded grid.
    pub fn solve(&self, d_aug: &[Complex64], b_aug: &[Complex64]) -> Result<Vec<Complex64>> {
        if d_aug.len() != self.receivers.len() || b_aug.len() != self.n {
            return Err(FwiError::ShapeMismatch(format!(
                "data {} / source {} entries for {} receivers and {} padded cells",
                d_aug.len(),
                b_aug.len(),
                self.receivers.len(),
                self.n
            )));
        }
        let mut rhs = self.adjoint.mul_vec(b_aug);
        for (&r, &d) in self.receivers.iter().zip(d_aug) {
            rhs[r] += d * self.data_weight;
        }
        self.lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(FwiError::NonFinite("wavefield reconstruction".into()));
        }
        Ok(rhs)
    }
}

/// One-shot relaxed reconstruction with `λ/γ = lambda / gamma` (padded grid).
pub fn reconstruct_wavefield(
    op: &HelmholtzOperator,
    receivers: &[usize],
    d_aug: &[Complex64],
    b_aug: &[Complex64],
    lambda: f64,
    gamma: f64,
) -> Result<Vec<Complex64>> {
    if !(gamma > 0.0) || lambda < 0.0 {
        return Err(FwiError::InvalidParameter(format!(
            "need lambda >= 0 and gamma > 0, got {lambda}, {gamma}"
        )));
    }
    WavefieldReconstructor::new(op, receivers, lambda / gamma)?.solve(d_aug, b_aug)
}

/// Diagonal linearization `L = ∂(A(m)u)/∂m = ω² diag(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedMass {
    pub diag: Vec<Complex64>,
}

impl LinearizedMass {
    pub fn apply(&self, m: &[f64]) -> Vec<Complex64> {
        self.diag.iter().zip(m).map(|(l, &mi)| l * mi).collect()
    }
}

pub fn build_l(u: &[Complex64], omega: f64) -> LinearizedMass {
    let w2 = omega * omega;
    LinearizedMass {
        diag: u.iter().map(|v| v * w2).collect(),
    }
}

/// Wavefield values at the receiver cells, in acquisition order.
pub fn sample(u: &[Complex64], receivers: &[usize]) -> Result<Vec<Complex64>> {
    receivers
        .iter()
        .map(|&r| {
            u.get(r).copied().ok_or_else(|| {
                FwiError::InvalidParameter(format!("receiver {r} outside field of {}", u.len()))
            })
        })
        .collect()
}

/// Adjoint of [`sample`]: scatters receiver values back onto the grid.
pub fn sample_adjoint(v: &[Complex64], receivers: &[usize], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (&r, &x) in receivers.iter().zip(v) {
        out[r] += x;
    }
    out
}

/// Ricker amplitude spectrum `2f²/(√π f₀³) · exp(−f²/f₀²)`.
pub fn ricker_spectrum(f: f64, peak: f64) -> f64 {
    2.0 * f * f / (std::f64::consts::PI.sqrt() * peak.powi(3)) * (-(f * f) / (peak * peak)).exp()
}
