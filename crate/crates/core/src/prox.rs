//! Regularizer catalog and the elementwise proximal maps used by the
//! model update.
//!
//! | kind     | Φ(m)                                                  |
//! |----------|-------------------------------------------------------|
//! | DMP      | ‖m‖₂²                                                  |
//! | Tikhonov | ‖∇²m‖₂²                                                |
//! | TV       | ‖∇m‖₁                                                  |
//! | JTT      | (1−α)‖∇²m‖₂² + α‖∇m‖₁                                  |
//! | TT       | min over m = m₁+m₂ of (1−α)‖∇²m₂‖₂² + α‖∇m₁‖₁          |
//! | TGV      | min over m = m₁+m₂ of (1−α)‖∇²m₂‖₁ + α‖∇m₁‖₁           |
//!
//! All ℓ1 norms of difference fields are isotropic (sum of pointwise
//! magnitudes).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::{grad_adjoint, grad_forward, second_diff, second_diff_adjoint, MultiField};
use crate::error::{FwiError, Result};
use crate::grid::ScalarField;
use crate::linalg::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    Dmp,
    Tikhonov,
    Tv,
    Jtt,
    Tt,
    Tgv,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 6] = [
        RegularizerKind::Dmp,
        RegularizerKind::Tikhonov,
        RegularizerKind::Tv,
        RegularizerKind::Jtt,
        RegularizerKind::Tt,
        RegularizerKind::Tgv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::Dmp => "dmp",
            RegularizerKind::Tikhonov => "tikhonov",
            RegularizerKind::Tv => "tv",
            RegularizerKind::Jtt => "jtt",
            RegularizerKind::Tt => "tt",
            RegularizerKind::Tgv => "tgv",
        }
    }

    /// Kinds that weight two terms with α.
    pub fn uses_alpha(self) -> bool {
        matches!(self, RegularizerKind::Jtt | RegularizerKind::Tt | RegularizerKind::Tgv)
    }

    /// Infimal-convolution kinds that split the model into two components.
    pub fn is_split(self) -> bool {
        matches!(self, RegularizerKind::Tt | RegularizerKind::Tgv)
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = FwiError;

    fn from_str(s: &str) -> Result<Self> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| FwiError::InvalidParameter(format!("unknown regularizer kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    /// Weight of the blocky (first-order) term; ignored by DMP, Tikhonov and TV.
    pub alpha: f64,
    /// Include √2-weighted mixed differences in ∇².
    pub mixed_hessian: bool,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, alpha: f64) -> Result<Self> {
        let spec = Self {
            kind,
            alpha,
            mixed_hessian: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mixed_hessian(mut self, mixed: bool) -> Self {
        self.mixed_hessian = mixed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        match self.kind {
            RegularizerKind::Tt | RegularizerKind::Tgv if !(a > 0.0 && a < 1.0) => {
                Err(FwiError::InvalidParameter(format!(
                    "{} needs 0 < alpha < 1, got {a}",
                    self.kind
                )))
            }
            RegularizerKind::Jtt if !(0.0..=1.0).contains(&a) => Err(FwiError::InvalidParameter(
                format!("jtt needs 0 <= alpha <= 1, got {a}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Elementwise bounds `lower ≤ m ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(FwiError::ShapeMismatch("bound vectors differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(FwiError::InvalidParameter("lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Scales both bounds by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v * s).collect(),
            upper: self.upper.iter().map(|v| v * s).collect(),
        }
    }
}

fn check_open_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(FwiError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Minimizer of `(1−α)(x−z)² + α|z|` for every entry.
pub fn soft_threshold(x: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_open_alpha(alpha)?;
    let t = alpha / (2.0 * (1.0 - alpha));
    Ok(x.iter()
        .map(|&v| {
            let mag = v.abs();
            if mag == 0.0 {
                0.0
            } else {
                (1.0 - t / mag).max(0.0) * v
            }
        })
        .collect())
}

/// Huber function: the infimal convolution of `(1−α)|·|²` and `α|·|`, summed.
pub fn huber_eval(x: &[f64], alpha: f64) -> Result<f64> {
    check_open_alpha(alpha)?;
    let t = alpha / (2.0 * (1.0 - alpha));
    Ok(x.iter()
        .map(|&v| {
            let mag = v.abs();
            if mag <= t {
                (1.0 - alpha) * mag * mag
            } else {
                alpha * mag - alpha * alpha / (4.0 * (1.0 - alpha))
            }
        })
        .sum())
}

/// Group shrinkage: per cell, minimizes `t‖p‖₂ + ½‖z − p‖²` over the
/// components of `z`.
pub fn shrink_isotropic<F: MultiField + Clone>(z: &F, t: f64) -> F {
    let mut out = z.clone();
    let n = z.grid().len();
    let mut comps = out.components_mut();
    for i in 0..n {
        let mag = comps.iter().map(|c| c.values[i] * c.values[i]).sum::<f64>().sqrt();
        let xi = if mag > 0.0 { (1.0 - t / mag).max(0.0) } else { 0.0 };
        for c in comps.iter_mut() {
            c.values[i] *= xi;
        }
    }
    out
}

/// Elementwise `min(max(x, lower), upper)`.
pub fn project_box(x: &ScalarField, bounds: &BoxBounds) -> ScalarField {
    ScalarField {
        grid: x.grid,
        values: x
            .values
            .iter()
            .zip(bounds.lower.iter().zip(&bounds.upper))
            .map(|(&v, (&l, &u))| v.max(l).min(u))
            .collect(),
    }
}

fn tikhonov(m: &ScalarField, mixed: bool) -> Result<f64> {
    Ok(second_diff(m, mixed)?.sq_norm())
}

fn tv(m: &ScalarField) -> Result<f64> {
    Ok(grad_forward(m)?.l1_norm())
}

fn second_order_tv(m: &ScalarField, mixed: bool) -> Result<f64> {
    Ok(second_diff(m, mixed)?.l1_norm())
}

/// Objective of a two-component split for the TT/TGV kinds.
pub fn split_objective(spec: &RegularizerSpec, m1: &ScalarField, m2: &ScalarField) -> Result<f64> {
    let smooth = match spec.kind {
        RegularizerKind::Tt => tikhonov(m2, spec.mixed_hessian)?,
        RegularizerKind::Tgv => second_order_tv(m2, spec.mixed_hessian)?,
        other => {
            return Err(FwiError::InvalidParameter(format!("{other} has no split form")));
        }
    };
    Ok((1.0 - spec.alpha) * smooth + spec.alpha * tv(m1)?)
}

/// Evaluates Φ(m). For TT/TGV a provided split `(m₁, m₂)` is scored
/// directly (an upper bound on Φ); without one the infimum is computed
/// numerically, which is only meant for small grids.
pub fn eval_regularizer(
    spec: &RegularizerSpec,
    m: &ScalarField,
    split: Option<(&ScalarField, &ScalarField)>,
) -> Result<f64> {
    spec.validate()?;
    let a = spec.alpha;
    match spec.kind {
        RegularizerKind::Dmp => Ok(m.values.iter().map(|v| v * v).sum()),
        RegularizerKind::Tikhonov => tikhonov(m, spec.mixed_hessian),
        RegularizerKind::Tv => tv(m),
        RegularizerKind::Jtt => Ok((1.0 - a) * tikhonov(m, spec.mixed_hessian)? + a * tv(m)?),
        RegularizerKind::Tt | RegularizerKind::Tgv => match split {
            Some((m1, m2)) => split_objective(spec, m1, m2),
            None => {
                let (m1, m2) = infimal_split(spec, m, 3000)?;
                split_objective(spec, &m1, &m2)
            }
        },
    }
}

/// Numerically computes the optimal split `m = m₁ + m₂` of a TT/TGV
/// regularizer with a unit-penalty ADMM. Convergence is tuned for fields of
/// order one.
pub fn infimal_split(
    spec: &RegularizerSpec,
    m: &ScalarField,
    iterations: usize,
) -> Result<(ScalarField, ScalarField)> {
    if !spec.kind.is_split() {
        return Err(FwiError::InvalidParameter(format!("{} has no split form", spec.kind)));
    }
    let grid = m.grid;
    let n = grid.len();
    let a = spec.alpha;
    let mixed = spec.mixed_hessian;
    let dtd = crate::diff::grad_matrix(&grid);
    let dtd = dtd.transpose().matmul(&dtd);
    let h = crate::diff::hess_matrix(&grid, mixed);
    let hth = h.transpose().matmul(&h);
    let rho = 1.0;
    let eps = 1e-6;
    let tgv = spec.kind == RegularizerKind::Tgv;
    // m₁ solves (ρ∇ᵀ∇ + c∇²ᵀ∇² + εI) m₁ = rhs; c = 2(1−α) for TT, ρ for TGV.
    let c = if tgv { rho } else { 2.0 * (1.0 - a) };
    let system: CsrMatrix<f64> = dtd
        .linear_combination(rho, &hth, c)
        .add_diagonal(&vec![eps; n]);
    let lu = system.to_band().factorize("infimal split")?;
    let hm = second_diff(m, mixed)?;
    let mut m1 = ScalarField::zeros(grid);
    let mut p = grad_forward(&m1)?;
    let mut p_dual = p.clone();
    let mut r = hm.clone();
    let mut r_dual = crate::diff::Hess2Field::zeros(grid, mixed);
    for _ in 0..iterations {
        let mut rhs = grad_adjoint(&p.axpy(1.0, &p_dual))?.values;
        let smooth_target = if tgv {
            second_diff_adjoint(&hm.axpy(-1.0, &r).axpy(-1.0, &r_dual))?
        } else {
            second_diff_adjoint(&hm)?
        };
        for i in 0..n {
            rhs[i] = rho * rhs[i] + c * smooth_target.values[i] + eps * m1.values[i];
        }
        m1 = ScalarField {
            grid,
            values: lu.solve(&rhs),
        };
        let g1 = grad_forward(&m1)?;
        p = shrink_isotropic(&g1.axpy(-1.0, &p_dual), a / rho);
        p_dual = p_dual.axpy(1.0, &p).axpy(-1.0, &g1);
        if tgv {
            let h2 = hm.axpy(-1.0, &second_diff(&m1, mixed)?);
            r = shrink_isotropic(&h2.axpy(-1.0, &r_dual), (1.0 - a) / rho);
            r_dual = r_dual.axpy(1.0, &r).axpy(-1.0, &h2);
        }
    }
    let m2 = m.axpy(-1.0, &m1);
    Ok((m1, m2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::GradField;
    use crate::grid::ModelGrid;

    /// Brute-force minimizer of `(1−α)(x−z)² + α|z|` on a grid of step 1e-4.
    fn brute_scalar_ic(x: f64, alpha: f64) -> (f64, f64) {
        let lim = x.abs() + 1.0;
        let steps = (2.0 * lim / 1e-4) as i64;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=steps {
            let z = -lim + k as f64 * 1e-4;
            let obj = (1.0 - alpha) * (x - z).powi(2) + alpha * z.abs();
            if obj < best.0 {
                best = (obj, z);
            }
        }
        best
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[0.0], 0.5).unwrap(), vec![0.0]);
        let (_, z) = brute_scalar_ic(2.0, 0.5);
        let got = soft_threshold(&[2.0], 0.5).unwrap()[0];
        assert!((got - 1.5).abs() < 1e-12 && (got - z).abs() < 2e-4);
        assert_eq!(soft_threshold(&[0.3], 0.5).unwrap(), vec![0.0]);
        assert!(soft_threshold(&[1.0], 1.0).is_err());
        assert!(soft_threshold(&[1.0], 0.0).is_err());
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber_eval(&[0.0], 0.5).unwrap(), 0.0);
        assert!((huber_eval(&[0.3], 0.5).unwrap() - 0.045).abs() < 1e-12);
        assert!((huber_eval(&[2.0], 0.5).unwrap() - 0.875).abs() < 1e-12);
        let (obj, _) = brute_scalar_ic(2.0, 0.5);
        assert!((obj - 0.875).abs() < 1e-6);
        assert!(huber_eval(&[1.0], -0.1).is_err());
    }

    #[test]
    fn shrink_examples() {
        let grid = ModelGrid::profile(3, 1.0).unwrap();
        let z = GradField {
            x: ScalarField::new(grid, vec![3.0, 0.3, 0.0]).unwrap(),
            z: ScalarField::new(grid, vec![4.0, 0.4, 0.0]).unwrap(),
        };
        let p = shrink_isotropic(&z, 1.0);
        assert!((p.x.values[0] - 2.4).abs() < 1e-14 && (p.z.values[0] - 3.2).abs() < 1e-14);
        assert_eq!((p.x.values[1], p.z.values[1]), (0.0, 0.0));
        assert_eq!((p.x.values[2], p.z.values[2]), (0.0, 0.0));
    }

    #[test]
    fn project_box_examples() {
        let grid = ModelGrid::profile(3, 1.0).unwrap();
        let x = ScalarField::new(grid, vec![5.0, 0.5, -2.0]).unwrap();
        let b = BoxBounds::uniform(3, 0.0, 1.0).unwrap();
        let p = project_box(&x, &b);
        assert_eq!(p.values, vec![1.0, 0.5, 0.0]);
        assert_eq!(project_box(&p, &b), p);
        assert!(BoxBounds::uniform(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RegularizerSpec::new(RegularizerKind::Tt, 0.0).is_err());
        assert!(RegularizerSpec::new(RegularizerKind::Tgv, 1.0).is_err());
        assert!(RegularizerSpec::new(RegularizerKind::Jtt, 0.0).is_ok());
        assert!(RegularizerSpec::new(RegularizerKind::Jtt, 1.0).is_ok());
        assert!(RegularizerSpec::new(RegularizerKind::Jtt, 1.5).is_err());
        assert_eq!("TGV".parse::<RegularizerKind>().unwrap(), RegularizerKind::Tgv);
        assert!("wavelet".parse::<RegularizerKind>().is_err());
    }

    #[test]
    fn simple_regularizer_values() {
        let grid = ModelGrid::profile(8, 1.0).unwrap();
        let tv_spec = RegularizerSpec::new(RegularizerKind::Tv, 0.0).unwrap();
        let tik = RegularizerSpec::new(RegularizerKind::Tikhonov, 0.0).unwrap();
        let dmp = RegularizerSpec::new(RegularizerKind::Dmp, 0.0).unwrap();
        let flat = ScalarField::constant(grid, 4.0);
        assert_eq!(eval_regularizer(&tv_spec, &flat, None).unwrap(), 0.0);
        let ramp = ScalarField::from_fn(grid, |ix, _| 2.0 * ix as f64 + 1.0);
        assert!(eval_regularizer(&tik, &ramp, None).unwrap().abs() < 1e-20);
        let mut unit = ScalarField::zeros(grid);
        unit.values[3] = 0.6;
        unit.values[5] = -0.8;
        assert!((eval_regularizer(&dmp, &unit, None).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tt_infimum_of_ramp_plus_step() {
        // Putting the ramp in m₂ and the step in m₁ costs α·|jump|; the
        // infimum can only be lower.
        let grid = ModelGrid::profile(30, 1.0).unwrap();
        let m = ScalarField::from_fn(grid, |ix, _| 0.1 * ix as f64 + if ix >= 15 { 2.0 } else { 0.0 });
        let spec = RegularizerSpec::new(RegularizerKind::Tt, 0.4).unwrap();
        let v = eval_regularizer(&spec, &m, None).unwrap();
        assert!(v <= 0.4 * 2.0 * (1.0 + 1e-3), "v = {v}");
        let (m1, m2) = infimal_split(&spec, &m, 3000).unwrap();
        assert!(split_objective(&spec, &m1, &m2).unwrap() >= v * (1.0 - 1e-9));
    }
}
