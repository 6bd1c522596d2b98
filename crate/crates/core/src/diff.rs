//! First- and second-order difference operators, their adjoints and
//! pointwise magnitudes.
//!
//! Cells without the neighbour a stencil needs produce 0, so the gradient
//! of a constant and the second difference of an affine field vanish
//! exactly. The mixed component of [`Hess2Field`] is stored already scaled
//! by √2; the Euclidean magnitude over the stored components is then the
//! Frobenius norm of the discrete Hessian.

use std::f64::consts::SQRT_2;

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::linalg::CsrMatrix;

/// Forward differences `[∇ₓf, ∇_z f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradField {
    pub x: ScalarField,
    pub z: ScalarField,
}

/// Second differences `[∇ₓₓf, √2·∇ₓ_z f, ∇_zz f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hess2Field {
    pub xx: ScalarField,
    pub zz: ScalarField,
    /// Present iff the operator was built with mixed differences.
    pub xz: Option<ScalarField>,
}

/// A stack of real fields sharing one grid.
pub trait MultiField: Sized {
    fn grid(&self) -> ModelGrid;
    fn components(&self) -> Vec<&ScalarField>;
    fn components_mut(&mut self) -> Vec<&mut ScalarField>;

    /// Sum of squares over all components and cells.
    fn sq_norm(&self) -> f64 {
        self.components()
            .iter()
            .map(|c| c.values.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    fn dot(&self, other: &Self) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    /// Group ℓ1 norm: sum of the pointwise magnitudes.
    fn l1_norm(&self) -> f64 {
        magnitude(self).values.iter().sum()
    }

    /// `self + a * other`, componentwise.
    fn axpy(&self, a: f64, other: &Self) -> Self;
}

impl GradField {
    pub fn zeros(grid: ModelGrid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            z: ScalarField::zeros(grid),
        }
    }
}

impl Hess2Field {
    pub fn zeros(grid: ModelGrid, mixed: bool) -> Self {
        Self {
            xx: ScalarField::zeros(grid),
            zz: ScalarField::zeros(grid),
            xz: mixed.then(|| ScalarField::zeros(grid)),
        }
    }

    pub fn mixed(&self) -> bool {
        self.xz.is_some()
    }
}

impl MultiField for GradField {
    fn grid(&self) -> ModelGrid {
        self.x.grid
    }

    fn components(&self) -> Vec<&ScalarField> {
        vec![&self.x, &self.z]
    }

    fn components_mut(&mut self) -> Vec<&mut ScalarField> {
        vec![&mut self.x, &mut self.z]
    }

    fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            x: self.x.axpy(a, &other.x),
            z: self.z.axpy(a, &other.z),
        }
    }
}

impl MultiField for Hess2Field {
    fn grid(&self) -> ModelGrid {
        self.xx.grid
    }

    fn components(&self) -> Vec<&ScalarField> {
        let mut c = vec![&self.xx];
        if let Some(xz) = &self.xz {
            c.push(xz);
        }
        c.push(&self.zz);
        c
    }

    fn components_mut(&mut self) -> Vec<&mut ScalarField> {
        let mut c = vec![&mut self.xx];
        if let Some(xz) = &mut self.xz {
            c.push(xz);
        }
        c.push(&mut self.zz);
        c
    }

    fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            xx: self.xx.axpy(a, &other.xx),
            zz: self.zz.axpy(a, &other.zz),
            xz: match (&self.xz, &other.xz) {
                (Some(s), Some(o)) => Some(s.axpy(a, o)),
                _ => None,
            },
        }
    }
}

pub fn grad_forward(f: &ScalarField) -> Result<GradField> {
    let g = f.grid;
    if g.nx() < 2 {
        return Err(FwiError::InvalidGrid("x-differences need nx >= 2".into()));
    }
    let mut out = GradField::zeros(g);
    for ix in 0..g.nx() {
        for iz in 0..g.nz() {
            let i = g.index(ix, iz);
            if ix > 0 {
                out.x.values[i] = f.values[i] - f.values[g.index(ix - 1, iz)];
            }
            if iz > 0 {
                out.z.values[i] = f.values[i] - f.values[i - 1];
            }
        }
    }
    Ok(out)
}

pub fn grad_adjoint(p: &GradField) -> Result<ScalarField> {
    let g = p.x.grid;
    g.check_same(&p.z.grid, "gradient components")?;
    let mut out = ScalarField::zeros(g);
    for ix in 0..g.nx() {
        for iz in 0..g.nz() {
            let i = g.index(ix, iz);
            let mut v = 0.0;
            if ix > 0 {
                v += p.x.values[i];
            }
            if ix + 1 < g.nx() {
                v -= p.x.values[g.index(ix + 1, iz)];
            }
            if iz > 0 {
                v += p.z.values[i];
            }
            if iz + 1 < g.nz() {
                v -= p.z.values[i + 1];
            }
            out.values[i] = v;
        }
    }
    Ok(out)
}

pub fn second_diff(f: &ScalarField, mixed: bool) -> Result<Hess2Field> {
    let g = f.grid;
    if g.nx() < 3 {
        return Err(FwiError::InvalidGrid("second differences need nx >= 3".into()));
    }
    let (nx, nz) = (g.nx(), g.nz());
    let v = &f.values;
    let mut out = Hess2Field::zeros(g, mixed);
    for ix in 0..nx {
        for iz in 0..nz {
            let i = g.index(ix, iz);
            if ix > 0 && ix + 1 < nx {
                out.xx.values[i] = v[i - nz] - 2.0 * v[i] + v[i + nz];
            }
            if iz > 0 && iz + 1 < nz {
                out.zz.values[i] = v[i - 1] - 2.0 * v[i] + v[i + 1];
            }
            if let Some(xz) = out.xz.as_mut() {
                if ix > 0 && iz > 0 {
                    xz.values[i] = SQRT_2 * (v[i] - v[i - nz] - v[i - 1] + v[i - nz - 1]);
                }
            }
        }
    }
    Ok(out)
}

pub fn second_diff_adjoint(h: &Hess2Field) -> Result<ScalarField> {
    let g = h.xx.grid;
    g.check_same(&h.zz.grid, "second-difference components")?;
    if let Some(xz) = &h.xz {
        g.check_same(&xz.grid, "mixed component")?;
    }
    let (nx, nz) = (g.nx(), g.nz());
    let xx_row = |ix: usize| ix > 0 && ix + 1 < nx;
    let zz_row = |iz: usize| iz > 0 && iz + 1 < nz;
    let mut out = ScalarField::zeros(g);
    for ix in 0..nx {
        for iz in 0..nz {
            let i = g.index(ix, iz);
            let mut acc = 0.0;
            if ix > 0 && xx_row(ix - 1) {
                acc += h.xx.values[i - nz];
            }
            if xx_row(ix) {
                acc -= 2.0 * h.xx.values[i];
            }
            if ix + 1 < nx && xx_row(ix + 1) {
                acc += h.xx.values[i + nz];
            }
            if iz > 0 && zz_row(iz - 1) {
                acc += h.zz.values[i - 1];
            }
            if zz_row(iz) {
                acc -= 2.0 * h.zz.values[i];
            }
            if iz + 1 < nz && zz_row(iz + 1) {
                acc += h.zz.values[i + 1];
            }
            if let Some(xz) = &h.xz {
                let r = &xz.values;
                let mut m = 0.0;
                if ix > 0 && iz > 0 {
                    m += r[i];
                }
                if ix + 1 < nx && iz > 0 {
                    m -= r[i + nz];
                }
                if ix > 0 && iz + 1 < nz {
                    m -= r[i + 1];
                }
                if ix + 1 < nx && iz + 1 < nz {
                    m += r[i + nz + 1];
                }
                acc += SQRT_2 * m;
            }
            out.values[i] = acc;
        }
    }
    Ok(out)
}

/// Pointwise Euclidean magnitude across the components of `field`.
pub fn magnitude<F: MultiField>(field: &F) -> ScalarField {
    let comps = field.components();
    let grid = field.grid();
    let values = (0..grid.len())
        .map(|i| comps.iter().map(|c| c.values[i] * c.values[i]).sum::<f64>().sqrt())
        .collect();
    ScalarField { grid, values }
}

/// Stacked gradient `[∇ₓ; ∇_z]` as a `2n × n` sparse matrix.
pub fn grad_matrix(grid: &ModelGrid) -> CsrMatrix<f64> {
    let n = grid.len();
    let mut t = Vec::with_capacity(4 * n);
    for ix in 0..grid.nx() {
        for iz in 0..grid.nz() {
            let i = grid.index(ix, iz);
            if ix > 0 {
                t.push((i, i, 1.0));
                t.push((i, grid.index(ix - 1, iz), -1.0));
            }
            if iz > 0 {
                t.push((n + i, i, 1.0));
                t.push((n + i, i - 1, -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(2 * n, n, t)
}

/// Stacked second differences `[∇ₓₓ; √2∇ₓ_z; ∇_zz]` (mixed block only when
/// requested) as a sparse matrix with `n` columns.
pub fn hess_matrix(grid: &ModelGrid, mixed: bool) -> CsrMatrix<f64> {
    let n = grid.len();
    let (nx, nz) = (grid.nx(), grid.nz());
    let blocks = if mixed { 3 } else { 2 };
    let zz_off = (blocks - 1) * n;
    let mut t = Vec::with_capacity(8 * n);
    for ix in 0..nx {
        for iz in 0..nz {
            let i = grid.index(ix, iz);
            if ix > 0 && ix + 1 < nx {
                t.push((i, i - nz, 1.0));
                t.push((i, i, -2.0));
                t.push((i, i + nz, 1.0));
            }
            if mixed && ix > 0 && iz > 0 {
                let r = n + i;
                t.push((r, i, SQRT_2));
                t.push((r, i - nz, -SQRT_2));
                t.push((r, i - 1, -SQRT_2));
                t.push((r, i - nz - 1, SQRT_2));
            }
            if iz > 0 && iz + 1 < nz {
                t.push((zz_off + i, i - 1, 1.0));
                t.push((zz_off + i, i, -2.0));
                t.push((zz_off + i, i + 1, 1.0));
            }
        }
    }
    CsrMatrix::from_triplets(blocks * n, n, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: ModelGrid, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let grid = ModelGrid::new(5, 4, 10.0).unwrap();
        let g = grad_forward(&ScalarField::constant(grid, 3.0)).unwrap();
        assert!(g.x.values.iter().chain(&g.z.values).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_1d_ramp() {
        let grid = ModelGrid::profile(4, 1.0).unwrap();
        let f = ScalarField::new(grid, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let g = grad_forward(&f).unwrap();
        assert_eq!(g.x.values, vec![0.0, 1.0, 1.0, 1.0]);
        assert!(g.z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_zero_is_zero() {
        let grid = ModelGrid::new(4, 3, 1.0).unwrap();
        let out = grad_adjoint(&GradField::zeros(grid)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normal_operator_annihilates_constants() {
        let grid = ModelGrid::new(6, 5, 1.0).unwrap();
        let f = ScalarField::constant(grid, -2.5);
        let out = grad_adjoint(&grad_forward(&f).unwrap()).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_difference_of_spike() {
        let grid = ModelGrid::profile(5, 1.0).unwrap();
        let f = ScalarField::new(grid, vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let h = second_diff(&f, false).unwrap();
        assert_eq!(h.xx.values, vec![0.0, 1.0, -2.0, 1.0, 0.0]);
    }

    #[test]
    fn second_difference_of_affine_vanishes() {
        let grid = ModelGrid::new(7, 6, 1.0).unwrap();
        let f = ScalarField::from_fn(grid, |ix, iz| 0.7 * ix as f64 - 1.3 * iz as f64 + 4.0);
        let h = second_diff(&f, true).unwrap();
        for c in h.components() {
            assert!(c.values.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn magnitude_three_four_five() {
        let grid = ModelGrid::profile(3, 1.0).unwrap();
        let g = GradField {
            x: ScalarField::new(grid, vec![3.0, 0.0, 0.0]).unwrap(),
            z: ScalarField::new(grid, vec![4.0, 0.0, 0.0]).unwrap(),
        };
        assert_eq!(magnitude(&g).values, vec![5.0, 0.0, 0.0]);
    }

    #[test]
    fn mixed_magnitude_weights_cross_term_by_two() {
        let grid = ModelGrid::new(3, 3, 1.0).unwrap();
        // f = x*z has ∇ₓ_z f = 1 at every cell with both neighbours.
        let f = ScalarField::from_fn(grid, |ix, iz| (ix * iz) as f64);
        let h = second_diff(&f, true).unwrap();
        let mag = magnitude(&h);
        assert!((mag.at(1, 1) - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(mag.at(0, 1), 0.0);
    }

    #[test]
    fn sparse_matrices_match_matrix_free_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(nx, nz) in &[(5, 1), (4, 6), (7, 7)] {
            let grid = ModelGrid::new(nx, nz, 1.0).unwrap();
            let f = random_field(grid, &mut rng);
            let n = grid.len();
            let g = grad_forward(&f).unwrap();
            let gm = grad_matrix(&grid).mul_vec(&f.values);
            assert_eq!(&gm[..n], &g.x.values[..]);
            assert_eq!(&gm[n..], &g.z.values[..]);
            for mixed in [false, true] {
                let h = second_diff(&f, mixed).unwrap();
                let hm = hess_matrix(&grid, mixed).mul_vec(&f.values);
                let stacked: Vec<f64> = h
                    .components()
                    .iter()
                    .flat_map(|c| c.values.iter().copied())
                    .collect();
                for (a, b) in hm.iter().zip(&stacked) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }
}
