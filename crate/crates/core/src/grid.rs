//! Rectangular model grid and the real-valued field living on it.
//!
//! Storage is row-major with z fastest: cell `(ix, iz)` sits at
//! `ix * nz + iz`. A 1D profile is a grid with `nz = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{FwiError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    nx: usize,
    nz: usize,
    h: f64,
}

impl ModelGrid {
    pub fn new(nx: usize, nz: usize, h: f64) -> Result<Self> {
        if nx < 3 {
            return Err(FwiError::InvalidGrid(format!("nx = {nx}, need at least 3")));
        }
        if nz < 1 {
            return Err(FwiError::InvalidGrid("nz must be at least 1".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FwiError::InvalidGrid(format!("spacing {h} must be positive")));
        }
        Ok(Self { nx, nz, h })
    }

    /// 1D profile of `n` cells.
    pub fn profile(n: usize, h: f64) -> Result<Self> {
        Self::new(n, 1, h)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_1d(&self) -> bool {
        self.nz == 1
    }

    /// Number of spatial dimensions actually resolved (1 or 2).
    pub fn dimension(&self) -> i32 {
        if self.is_1d() {
            1
        } else {
            2
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        debug_assert!(ix < self.nx && iz < self.nz);
        ix * self.nz + iz
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.nz, idx % self.nz)
    }

    pub fn same_shape(&self, other: &ModelGrid) -> bool {
        self.nx == other.nx && self.nz == other.nz
    }

    pub(crate) fn check_same(&self, other: &ModelGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FwiError::ShapeMismatch(format!(
                "{what}: grid {}x{} (h={}) vs {}x{} (h={})",
                self.nx, self.nz, self.h, other.nx, other.nz, other.h
            )))
        }
    }
}

/// Real scalar field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: ModelGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: ModelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FwiError::ShapeMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FwiError::NonFinite("scalar field".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: ModelGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: ModelGrid, v: f64) -> Self {
        Self {
            grid,
            values: vec![v; grid.len()],
        }
    }

    pub fn from_fn(grid: ModelGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (ix, iz) = grid.coords(i);
                f(ix, iz)
            })
            .collect();
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.values[self.grid.index(ix, iz)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        crate::linalg::dot(&self.values, &other.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `‖self − truth‖ / ‖truth‖`.
    pub fn relative_error(&self, truth: &ScalarField) -> Result<f64> {
        self.grid.check_same(&truth.grid, "relative error")?;
        let t = truth.norm2();
        if t == 0.0 {
            return Err(FwiError::InvalidParameter("reference field is zero".into()));
        }
        Ok(self.axpy(-1.0, truth).norm2() / t)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }
}
