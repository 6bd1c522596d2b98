//! Regularized model update
//!
//! ```text
//! min_{m ∈ C}  Φ(m) + γ/2 Σ_s ‖L_s m − y_s‖²
//! ```
//!
//! solved by an inner ADMM. Auxiliaries `p ≈ ∇m₁` (ℓ1 term), `q ≈ m`
//! (box constraint) and, for TGV, `r ≈ ∇²m₂` carry scaled duals `p̃, q̃, r̃`.
//! For the two-component kinds the quadratic step is the `2n × 2n` system
//!
//! ```text
//! [G₁₁ G₁₂] [m₁]   [h₁]
//! [G₂₁ G₂₂] [m₂] = [h₂]
//! ```
//!
//! whose coupling block `G₁₂ = γLᵀL + ηI` is diagonal, so `m₂` is eliminated
//! and a single `n × n` banded solve yields `m₁`.
//!
//! The complex data terms enter as `Re(Lᴴ L)` and `Re(Lᴴ y)`, summed over
//! sources. The regularizer acts on the dimensionless model `m / scale`,
//! with `scale` fixed when the inner state is created; all inner variables
//! live in those units.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diff::{grad_forward, grad_matrix, hess_matrix, second_diff, GradField, Hess2Field, MultiField};
use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::helmholtz::LinearizedMass;
use crate::linalg::{BandLu, CsrMatrix};
use crate::prox::{project_box, shrink_isotropic, BoxBounds, RegularizerKind, RegularizerSpec};

/// Accumulated real normal-equation terms `Σ Re(Lᴴ L)` (diagonal) and
/// `Σ Re(Lᴴ y)` of the data misfit.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTerm {
    pub weight: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl DataTerm {
    pub fn zeros(n: usize) -> Self {
        Self {
            weight: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    /// Adds one source's `(L, y)` pair on the model grid.
    pub fn accumulate(&mut self, l: &LinearizedMass, y: &[Complex64]) {
        for ((w, r), (li, yi)) in self.weight.iter_mut().zip(&mut self.rhs).zip(l.diag.iter().zip(y)) {
            *w += li.norm_sqr();
            *r += (li.conj() * yi).re;
        }
    }

    /// Adds a pair defined on a padded grid whose cell `e` copies model cell
    /// `owner[e]`; the extension keeps `LᵀL` diagonal.
    pub fn accumulate_padded(&mut self, l: &LinearizedMass, y: &[Complex64], owner: &[usize]) {
        for ((li, yi), &o) in l.diag.iter().zip(y).zip(owner) {
            self.weight[o] += li.norm_sqr();
            self.rhs[o] += (li.conj() * yi).re;
        }
    }

    /// The same term expressed for the model `m / scale`.
    fn rescaled(&self, scale: f64) -> Self {
        Self {
            weight: self.weight.iter().map(|w| w * scale * scale).collect(),
            rhs: self.rhs.iter().map(|r| r * scale).collect(),
        }
    }
}

/// Penalty parameters of the model subproblem (dimensionless model units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    /// Weight γ of the wave-equation misfit.
    pub gamma: f64,
    /// ADMM penalty on `p = ∇m₁`.
    pub zeta: f64,
    /// ADMM penalty on `q = m` (box constraint).
    pub eta: f64,
    /// ADMM penalty on `r = ∇²m₂` (TGV only).
    pub zeta2: f64,
    /// Damping of the joint system relative to its mean diagonal.
    pub eps_rel: f64,
}

/// Relative knobs from which [`Penalties`] are derived once per batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyRule {
    /// γ times the mean of `Σ|L|²` (dimensionless units).
    pub gamma_rel: f64,
    /// ζ = η = ζ₂ as a fraction of `γ · mean Σ|L|²`.
    pub admm_rel: f64,
    pub eps_rel: f64,
}

impl Default for PenaltyRule {
    fn default() -> Self {
        Self {
            gamma_rel: 1.0,
            admm_rel: 1.0,
            eps_rel: 1e-8,
        }
    }
}

impl PenaltyRule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_rel", self.gamma_rel), ("admm_rel", self.admm_rel)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FwiError::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.eps_rel >= 0.0) {
            return Err(FwiError::InvalidParameter("eps_rel must be non-negative".into()));
        }
        Ok(())
    }

    /// Penalties for a data term in physical units and the model `scale`.
    pub fn resolve(&self, data: &DataTerm, scale: f64) -> Result<Penalties> {
        let n = data.len().max(1) as f64;
        let mean_w = data.weight.iter().sum::<f64>() * scale * scale / n;
        if !(mean_w > 0.0 && mean_w.is_finite()) {
            return Err(FwiError::Degenerate(
                "data term has no energy; wavefields vanish everywhere".into(),
            ));
        }
        let gamma = self.gamma_rel / mean_w;
        let admm = self.admm_rel * self.gamma_rel;
        Ok(Penalties {
            gamma,
            zeta: admm,
            eta: admm,
            zeta2: admm,
            eps_rel: self.eps_rel,
        })
    }
}

/// Normal operators `∇ᵀ∇` and `(∇²)ᵀ∇²` of a grid.
#[derive(Clone, Debug)]
struct DiffNormals {
    grad: CsrMatrix<f64>,
    hess: CsrMatrix<f64>,
}

impl DiffNormals {
    fn new(grid: &ModelGrid, mixed: bool) -> Self {
        let g = grad_matrix(grid);
        let h = hess_matrix(grid, mixed);
        Self {
            grad: g.transpose().matmul(&g),
            hess: h.transpose().matmul(&h),
        }
    }
}

/// Inner ADMM iterates.
#[derive(Clone, Debug)]
pub struct InnerState {
    pub spec: RegularizerSpec,
    /// Model normalization: inner variables describe `m / scale`.
    pub scale: f64,
    /// Blocky component (the whole model for single-component kinds).
    pub m1: ScalarField,
    /// Smooth component; identically zero for single-component kinds.
    pub m2: ScalarField,
    pub p: GradField,
    pub p_dual: GradField,
    pub q: ScalarField,
    pub q_dual: ScalarField,
    pub r: Option<Hess2Field>,
    pub r_dual: Option<Hess2Field>,
    pub iterations: usize,
    normals: DiffNormals,
}

impl InnerState {
    /// Starts from `m` with all of it in the smooth component for TT/TGV.
    pub fn new(m: &ScalarField, spec: RegularizerSpec, scale: f64) -> Result<Self> {
        spec.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(FwiError::InvalidParameter(format!("model scale {scale} must be positive")));
        }
        let grid = m.grid;
        let m_hat = m.map(|v| v / scale);
        let (m1, m2) = if spec.kind.is_split() {
            (ScalarField::zeros(grid), m_hat.clone())
        } else {
            (m_hat.clone(), ScalarField::zeros(grid))
        };
        Self::from_split(m1, m2, spec, scale)
    }

    /// Starts from a given split, both components in physical units.
    pub fn with_split(m1: &ScalarField, m2: &ScalarField, spec: RegularizerSpec, scale: f64) -> Result<Self> {
        m1.grid.check_same(&m2.grid, "model split")?;
        Self::from_split(m1.map(|v| v / scale), m2.map(|v| v / scale), spec, scale)
    }

    fn from_split(m1: ScalarField, m2: ScalarField, spec: RegularizerSpec, scale: f64) -> Result<Self> {
        let grid = m1.grid;
        let mixed = spec.mixed_hessian;
        let p = grad_forward(&m1)?;
        let q = m1.axpy(1.0, &m2);
        let tgv = spec.kind == RegularizerKind::Tgv;
        let r = if tgv { Some(second_diff(&m2, mixed)?) } else { None };
        Ok(Self {
            spec,
            scale,
            p_dual: GradField::zeros(grid),
            q_dual: ScalarField::zeros(grid),
            r_dual: r.as_ref().map(|_| Hess2Field::zeros(grid, mixed)),
            r,
            p,
            q,
            m1,
            m2,
            iterations: 0,
            normals: DiffNormals::new(&grid, mixed),
        })
    }

    pub fn grid(&self) -> ModelGrid {
        self.m1.grid
    }

    /// Current model `m₁ + m₂` in physical units.
    pub fn model(&self) -> ScalarField {
        self.m1.axpy(1.0, &self.m2).map(|v| v * self.scale)
    }

    /// Current split in physical units.
    pub fn split(&self) -> (ScalarField, ScalarField) {
        let s = self.scale;
        (self.m1.map(|v| v * s), self.m2.map(|v| v * s))
    }

    /// Scaled dual ascent on every constraint of the inner splitting.
    pub fn dual_ascent(&mut self) -> Result<()> {
        let g1 = grad_forward(&self.m1)?;
        self.p_dual = self.p_dual.axpy(1.0, &self.p).axpy(-1.0, &g1);
        let m = self.m1.axpy(1.0, &self.m2);
        self.q_dual = self.q_dual.axpy(1.0, &self.q).axpy(-1.0, &m);
        if let (Some(r), Some(r_dual)) = (&self.r, &self.r_dual) {
            let h2 = second_diff(&self.m2, self.spec.mixed_hessian)?;
            self.r_dual = Some(r_dual.axpy(1.0, r).axpy(-1.0, &h2));
        }
        Ok(())
    }

    /// Primal residuals `(‖p − ∇m₁‖, ‖q − m‖)` in dimensionless units.
    pub fn primal_residuals(&self) -> Result<(f64, f64)> {
        let g1 = grad_forward(&self.m1)?;
        let rp = self.p.axpy(-1.0, &g1).sq_norm().sqrt();
        let m = self.m1.axpy(1.0, &self.m2);
        let rq = self.q.axpy(-1.0, &m).norm2();
        Ok((rp, rq))
    }
}

/// Updates the scaled duals from the current primal iterates:
/// `p̃ += p − ∇m₁`, `q̃ += q − (m₁+m₂)` and, for TGV, `r̃ += r − ∇²m₂`.
pub fn inner_dual_ascent(state: &mut InnerState) -> Result<()> {
    state.dual_ascent()
}

/// Blocks of the joint `(m₁, m₂)` normal equations.
#[derive(Clone, Debug)]
pub struct JointSystem {
    pub g11: CsrMatrix<f64>,
    pub g22: CsrMatrix<f64>,
    /// Diagonal of `G₁₂ = G₂₁`.
    pub g12: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub eps: f64,
}

impl JointSystem {
    pub fn len(&self) -> usize {
        self.g12.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g12.is_empty()
    }

    /// Applies the full block matrix.
    pub fn apply(&self, m1: &[f64], m2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r1 = self.g11.mul_vec(m1);
        let mut r2 = self.g22.mul_vec(m2);
        for i in 0..self.len() {
            r1[i] += self.g12[i] * m2[i];
            r2[i] += self.g12[i] * m1[i];
        }
        (r1, r2)
    }

    /// Relative residual of `(m₁, m₂)` against the block system.
    pub fn relative_residual(&self, m1: &[f64], m2: &[f64]) -> f64 {
        let (a1, a2) = self.apply(m1, m2);
        let num: f64 = a1
            .iter()
            .zip(&self.h1)
            .chain(a2.iter().zip(&self.h2))
            .map(|(a, h)| (a - h) * (a - h))
            .sum();
        let den: f64 = self.h1.iter().chain(&self.h2).map(|h| h * h).sum();
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Builds the joint system for the TT and TGV kinds from the current
/// inner state. `data` is in physical units.
///
/// TT:  `G₂₂ = γLᵀL + 2(1−α)(∇²)ᵀ∇² + ηI`, `h₂ = γLᵀy + η(q+q̃)`.
/// TGV: `G₂₂ = γLᵀL + ζ₂(∇²)ᵀ∇² + ηI`, `h₂ = γLᵀy + ζ₂(∇²)ᵀ(r+r̃) + η(q+q̃)`.
/// Both add `εI` to the diagonal blocks, with the matching `ε·m_prev`
/// proximal term on the right-hand side.
pub fn assemble_joint(data: &DataTerm, state: &InnerState, pen: &Penalties) -> Result<JointSystem> {
    check_len(data, state)?;
    let data = data.rescaled(state.scale);
    let (g11, g22, g12, eps) = joint_blocks(&data, state, pen)?;
    let (h1, h2) = joint_rhs(&data, state, pen, eps)?;
    Ok(JointSystem {
        g11,
        g22,
        g12,
        h1,
        h2,
        eps,
    })
}

fn check_len(data: &DataTerm, state: &InnerState) -> Result<()> {
    let n = state.grid().len();
    if data.len() != n {
        return Err(FwiError::ShapeMismatch(format!(
            "data term of {} entries for {n} cells",
            data.len()
        )));
    }
    Ok(())
}

type Blocks = (CsrMatrix<f64>, CsrMatrix<f64>, Vec<f64>, f64);

/// Matrix blocks for data already in dimensionless units.
fn joint_blocks(data: &DataTerm, state: &InnerState, pen: &Penalties) -> Result<Blocks> {
    let spec = state.spec;
    if !spec.kind.is_split() {
        return Err(FwiError::InvalidParameter(format!(
            "{} does not use the joint system",
            spec.kind
        )));
    }
    let n = data.len();
    let g12: Vec<f64> = data.weight.iter().map(|w| pen.gamma * w + pen.eta).collect();
    let base = CsrMatrix::diagonal(&g12);
    let g11 = base.add(&state.normals.grad.scale(pen.zeta));
    let smooth_weight = match spec.kind {
        RegularizerKind::Tt => 2.0 * (1.0 - spec.alpha),
        _ => pen.zeta2,
    };
    let g22 = base.add(&state.normals.hess.scale(smooth_weight));
    let diag_mean = (g11.diagonal_values().iter().sum::<f64>() + g22.diagonal_values().iter().sum::<f64>())
        / (2 * n) as f64;
    let eps = pen.eps_rel * diag_mean;
    let g11 = g11.add_diagonal(&vec![eps; n]);
    let g22 = g22.add_diagonal(&vec![eps; n]);
    Ok((g11, g22, g12, eps))
}

fn joint_rhs(data: &DataTerm, state: &InnerState, pen: &Penalties, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = data.len();
    let pp = state.p.axpy(1.0, &state.p_dual);
    let grad_term = crate::diff::grad_adjoint(&pp)?;
    let qq = state.q.axpy(1.0, &state.q_dual);
    let smooth_term = match (&state.r, &state.r_dual) {
        (Some(r), Some(rd)) => Some(crate::diff::second_diff_adjoint(&r.axpy(1.0, rd))?),
        _ => None,
    };
    let mut h1 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for i in 0..n {
        let common = pen.gamma * data.rhs[i] + pen.eta * qq.values[i];
        h1[i] = common + pen.zeta * grad_term.values[i] + eps * state.m1.values[i];
        h2[i] = common + eps * state.m2.values[i];
        if let Some(st) = &smooth_term {
            h2[i] += pen.zeta2 * st.values[i];
        }
    }
    Ok((h1, h2))
}

/// Factorized reduced system of the variable projection, reusable for
/// any right-hand side of a fixed joint matrix.
#[derive(Clone, Debug)]
pub struct JointFactor {
    g11: CsrMatrix<f64>,
    g22: CsrMatrix<f64>,
    inv_d: Vec<f64>,
    lu: BandLu<f64>,
}

impl JointFactor {
    /// Eliminates `m₂ = G₁₂⁻¹(h₁ − G₁₁m₁)` and factors
    /// `G₂₁ − G₂₂G₁₂⁻¹G₁₁`.
    pub fn new(g11: &CsrMatrix<f64>, g22: &CsrMatrix<f64>, g12: &[f64]) -> Result<Self> {
        if let Some((i, d)) = g12.iter().enumerate().find(|(_, d)| !(d.abs() > 0.0 && d.is_finite())) {
            return Err(FwiError::Singular {
                context: "coupling block G12".into(),
                pivot: i,
                magnitude: d.abs(),
            });
        }
        let inv_d: Vec<f64> = g12.iter().map(|d| 1.0 / d).collect();
        let coupled = g22.matmul(&g11.scale_rows(&inv_d));
        let reduced = CsrMatrix::diagonal(g12).linear_combination(1.0, &coupled, -1.0);
        let lu = reduced.to_band().factorize("variable projection reduced system")?;
        Ok(Self {
            g11: g11.clone(),
            g22: g22.clone(),
            inv_d,
            lu,
        })
    }

    /// `m₁` from `(G₂₁ − G₂₂G₁₂⁻¹G₁₁) m₁ = h₂ − G₂₂G₁₂⁻¹h₁`, then `m₂`.
    pub fn solve(&self, h1: &[f64], h2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let scaled_h1: Vec<f64> = h1.iter().zip(&self.inv_d).map(|(h, d)| h * d).collect();
        let g22h1 = self.g22.mul_vec(&scaled_h1);
        let rhs: Vec<f64> = h2.iter().zip(&g22h1).map(|(a, b)| a - b).collect();
        let m1 = self.lu.solve(&rhs);
        let g11m1 = self.g11.mul_vec(&m1);
        let m2: Vec<f64> = (0..h1.len()).map(|i| (h1[i] - g11m1[i]) * self.inv_d[i]).collect();
        if m1.iter().chain(&m2).any(|v| !v.is_finite()) {
            return Err(FwiError::NonFinite("variable projection solution".into()));
        }
        Ok((m1, m2))
    }
}

/// Solves the joint system by variable projection (see [`JointFactor`]).
pub fn solve_variable_projection(sys: &JointSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    JointFactor::new(&sys.g11, &sys.g22, &sys.g12)?.solve(&sys.h1, &sys.h2)
}

/// Weight of the `‖∇m₁‖₁` term; zero when the kind has none.
fn l1_weight(spec: &RegularizerSpec) -> f64 {
    match spec.kind {
        RegularizerKind::Dmp | RegularizerKind::Tikhonov => 0.0,
        RegularizerKind::Tv => 1.0,
        _ => spec.alpha,
    }
}

/// Normal matrix of the single-component kinds (DMP, Tikhonov, TV, JTT).
fn single_matrix(data: &DataTerm, state: &InnerState, pen: &Penalties) -> CsrMatrix<f64> {
    let n = data.len();
    let spec = state.spec;
    let diag: Vec<f64> = data.weight.iter().map(|w| pen.gamma * w + pen.eta).collect();
    let mut g = CsrMatrix::diagonal(&diag);
    match spec.kind {
        RegularizerKind::Dmp => g = g.add_diagonal(&vec![2.0; n]),
        RegularizerKind::Tikhonov => g = g.add(&state.normals.hess.scale(2.0)),
        RegularizerKind::Jtt => {
            g = g.add(&state.normals.hess.scale(2.0 * (1.0 - spec.alpha)));
        }
        _ => {}
    }
    if l1_weight(&spec) > 0.0 {
        g = g.add(&state.normals.grad.scale(pen.zeta));
    }
    g
}

fn single_rhs(data: &DataTerm, state: &InnerState, pen: &Penalties) -> Result<Vec<f64>> {
    let qq = state.q.axpy(1.0, &state.q_dual);
    let mut h: Vec<f64> = data
        .rhs
        .iter()
        .zip(&qq.values)
        .map(|(r, q)| pen.gamma * r + pen.eta * q)
        .collect();
    if l1_weight(&state.spec) > 0.0 {
        let gt = crate::diff::grad_adjoint(&state.p.axpy(1.0, &state.p_dual))?;
        for (hi, gi) in h.iter_mut().zip(&gt.values) {
            *hi += pen.zeta * gi;
        }
    }
    Ok(h)
}

/// Result of a model update, physical units.
#[derive(Clone, Debug)]
pub struct ModelUpdate {
    pub m: ScalarField,
    pub m1: ScalarField,
    pub m2: ScalarField,
}

enum QuadraticStep {
    Single(BandLu<f64>),
    Joint(JointFactor, f64),
}

/// Runs `iterations` inner ADMM sweeps on `state` and returns the model.
///
/// The quadratic step's matrix is fixed during the call and factored once.
pub fn update_model(
    data: &DataTerm,
    state: &mut InnerState,
    bounds: &BoxBounds,
    pen: &Penalties,
    iterations: usize,
) -> Result<ModelUpdate> {
    let grid = state.grid();
    let n = grid.len();
    if data.len() != n || bounds.len() != n {
        return Err(FwiError::ShapeMismatch(format!(
            "data term {} / bounds {} for {n} cells",
            data.len(),
            bounds.len()
        )));
    }
    if !(pen.gamma > 0.0 && pen.zeta > 0.0 && pen.eta > 0.0) {
        return Err(FwiError::InvalidParameter(format!("penalties must be positive: {pen:?}")));
    }
    let spec = state.spec;
    let data = data.rescaled(state.scale);
    let bounds = bounds.scaled(1.0 / state.scale);
    let step = if spec.kind.is_split() {
        let (g11, g22, g12, eps) = joint_blocks(&data, state, pen)?;
        QuadraticStep::Joint(JointFactor::new(&g11, &g22, &g12)?, eps)
    } else {
        QuadraticStep::Single(single_matrix(&data, state, pen).to_band().factorize("model update")?)
    };
    let weight = l1_weight(&spec);
    for _ in 0..iterations {
        match &step {
            QuadraticStep::Joint(factor, eps) => {
                let (h1, h2) = joint_rhs(&data, state, pen, *eps)?;
                let (m1, m2) = factor.solve(&h1, &h2)?;
                state.m1.values = m1;
                state.m2.values = m2;
            }
            QuadraticStep::Single(lu) => {
                let m = lu.solve(&single_rhs(&data, state, pen)?);
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(FwiError::NonFinite("model update".into()));
                }
                state.m1.values = m;
            }
        }
        if weight > 0.0 {
            let z = grad_forward(&state.m1)?.axpy(-1.0, &state.p_dual);
            state.p = shrink_isotropic(&z, weight / pen.zeta);
        }
        if let Some(r_dual) = &state.r_dual {
            let z = second_diff(&state.m2, spec.mixed_hessian)?.axpy(-1.0, r_dual);
            state.r = Some(shrink_isotropic(&z, (1.0 - spec.alpha) / pen.zeta2));
        }
        let m = state.m1.axpy(1.0, &state.m2);
        state.q = project_box(&m.axpy(-1.0, &state.q_dual), &bounds);
        state.dual_ascent()?;
        state.iterations += 1;
    }
    let (m1, m2) = state.split();
    Ok(ModelUpdate {
        m: state.model(),
        m1,
        m2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pen() -> Penalties {
        Penalties {
            gamma: 2.0,
            zeta: 0.5,
            eta: 0.3,
            zeta2: 0.4,
            eps_rel: 1e-8,
        }
    }

    #[test]
    fn single_cell_coupling_block() {
        // n = 1 has no differences: G₁₂ = γ|L|² + η.
        let grid = ModelGrid::new(3, 1, 1.0).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Tt, 0.5).unwrap();
        let state = InnerState::new(&ScalarField::constant(grid, 1.0), spec, 1.0).unwrap();
        let l = LinearizedMass {
            diag: vec![Complex64::new(3.0, 4.0); 3],
        };
        let mut data = DataTerm::zeros(3);
        data.accumulate(&l, &[Complex64::new(1.0, 0.0); 3]);
        let sys = assemble_joint(&data, &state, &pen()).unwrap();
        assert!(sys.g12.iter().all(|&d| (d - (2.0 * 25.0 + 0.3)).abs() < 1e-12));
    }

    #[test]
    fn zero_l_leaves_only_box_terms() {
        let grid = ModelGrid::profile(6, 1.0).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Tt, 0.3).unwrap();
        let mut state = InnerState::new(&ScalarField::constant(grid, 1.0), spec, 1.0).unwrap();
        state.m2 = ScalarField::zeros(grid);
        state.q = ScalarField::from_fn(grid, |ix, _| ix as f64);
        state.q_dual = ScalarField::constant(grid, 0.5);
        let sys = assemble_joint(&DataTerm::zeros(6), &state, &pen()).unwrap();
        assert!(sys.g12.iter().all(|&d| d == 0.3));
        for (i, h) in sys.h2.iter().enumerate() {
            assert!((h - 0.3 * (i as f64 + 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_system_gives_zero() {
        let grid = ModelGrid::profile(10, 1.0).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Tt, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = InnerState::new(&ScalarField::zeros(grid), spec, 1.0).unwrap();
        let data = DataTerm {
            weight: (0..10).map(|_| rng.gen_range(0.5..2.0)).collect(),
            rhs: vec![0.0; 10],
        };
        let sys = assemble_joint(&data, &state, &pen()).unwrap();
        let (m1, m2) = solve_variable_projection(&sys).unwrap();
        assert!(m1.iter().chain(&m2).all(|&v| v == 0.0));
    }

    #[test]
    fn dual_ascent_identities() {
        let grid = ModelGrid::new(4, 3, 1.0).unwrap();
        let spec = RegularizerSpec::new(RegularizerKind::Tgv, 0.5).unwrap();
        let m = ScalarField::from_fn(grid, |ix, iz| (ix * ix + iz) as f64);
        let mut state = InnerState::new(&m, spec, 1.0).unwrap();
        // p = ∇m₁, q = m₁+m₂, r = ∇²m₂ at construction: duals stay zero.
        inner_dual_ascent(&mut state).unwrap();
        assert_eq!(state.p_dual.sq_norm(), 0.0);
        assert_eq!(state.q_dual.norm2(), 0.0);
        assert_eq!(state.r_dual.as_ref().unwrap().sq_norm(), 0.0);

        // Telescoping: three steps with fixed residuals accumulate 3× them.
        let shift = ScalarField::constant(grid, 0.25);
        state.q = state.q.axpy(1.0, &shift);
        for _ in 0..3 {
            inner_dual_ascent(&mut state).unwrap();
        }
        assert!(state.q_dual.values.iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn collapsed_box_pins_the_model() {
        let grid = ModelGrid::profile(12, 1.0).unwrap();
        let c = 0.7;
        let bounds = BoxBounds::uniform(12, c, c).unwrap();
        let data = DataTerm {
            weight: vec![1.0; 12],
            rhs: (0..12).map(|i| 0.1 * i as f64).collect(),
        };
        let p = Penalties {
            gamma: 1e-3,
            zeta: 1.0,
            eta: 1.0,
            zeta2: 1.0,
            eps_rel: 1e-8,
        };
        for kind in RegularizerKind::ALL {
            let spec = RegularizerSpec::new(kind, 0.5).unwrap();
            let mut state = InnerState::new(&ScalarField::constant(grid, 0.3), spec, 1.0).unwrap();
            let out = update_model(&data, &mut state, &bounds, &p, 400).unwrap();
            assert!(state.q.values.iter().all(|&v| v == c), "{kind}");
            assert!(out.m.values.iter().all(|v| (v - c).abs() < 1e-4), "{kind}: {:?}", out.m.values);
        }
    }

    #[test]
    fn tikhonov_is_jtt_at_alpha_zero_and_tv_is_jtt_at_one() {
        let grid = ModelGrid::profile(20, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = DataTerm {
            weight: (0..20).map(|_| rng.gen_range(0.5..2.0)).collect(),
            rhs: (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let bounds = BoxBounds::unbounded(20);
        let m0 = ScalarField::constant(grid, 0.1);
        let run = |kind, alpha| {
            let spec = RegularizerSpec::new(kind, alpha).unwrap();
            let mut state = InnerState::new(&m0, spec, 1.0).unwrap();
            update_model(&data, &mut state, &bounds, &pen(), 5).unwrap().m.values
        };
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&run(RegularizerKind::Tikhonov, 0.0), &run(RegularizerKind::Jtt, 0.0)));
        assert!(close(&run(RegularizerKind::Tv, 0.0), &run(RegularizerKind::Jtt, 1.0)));
    }
}
