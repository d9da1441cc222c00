//! Periodic spectral grid over a torus of `cells` 2π-cells.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;

pub const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Uniform grid on `[0, 2π·cells)` with `points_per_cell` points per cell.
///
/// Wavenumbers live on the grid `k = s/cells` for signed integers `s` with
/// `-n/2 < s <= n/2`, so the Bloch numbers `l = r/cells ∈ (-1/2, 1/2]` are an
/// exact reindexing of the Fourier grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub cells: usize,
    pub points_per_cell: usize,
}

impl SpectralGrid {
    pub fn new(cells: usize, points_per_cell: usize) -> Self {
        assert!(cells >= 1, "need at least one cell");
        assert!(
            points_per_cell >= 2 && points_per_cell % 2 == 0,
            "points per cell must be even and >= 2"
        );
        Self { cells, points_per_cell }
    }

    /// Total number of grid points.
    pub fn n(&self) -> usize {
        self.cells * self.points_per_cell
    }

    /// Domain length 2π·cells.
    pub fn len(&self) -> f64 {
        TAU * self.cells as f64
    }

    /// Grid spacing 2π/points_per_cell.
    pub fn spacing(&self) -> f64 {
        TAU / self.points_per_cell as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.point(i)).collect()
    }

    /// Wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        fourier::wavenumber(j, self.n(), self.len())
    }

    /// Bloch number of Bloch index `r` (in `(-1/2, 1/2]`).
    pub fn bloch_number(&self, r: usize) -> f64 {
        fourier::signed_index(r, self.cells) as f64 / self.cells as f64
    }
}

/// Real periodic grid function.
#[derive(Clone, Debug)]
pub struct GridField {
    pub grid: SpectralGrid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n(), "value length must match grid");
        Self { grid, values }
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n()] }
    }

    pub fn from_fn(grid: SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        fourier::coeffs_real(&self.values)
    }

    pub fn from_coeffs(grid: SpectralGrid, c: &[Complex64]) -> Result<Self> {
        Self::from_coeffs_tol(grid, c, 1e-12)
    }

    /// Variant with an explicit imaginary-residue tolerance; pipelines with
    /// fourth derivatives amplify roundoff past the default 1e-12.
    pub fn from_coeffs_tol(grid: SpectralGrid, c: &[Complex64], tol: f64) -> Result<Self> {
        if c.len() != grid.n() {
            return Err(Error::Config(format!(
                "coefficient length {} does not match grid {}",
                c.len(),
                grid.n()
            )));
        }
        let values = fourier::values_real(c, tol)?;
        Ok(Self { grid, values })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, a: f64, other: &GridField) {
        assert_eq!(self.grid, other.grid);
        for (v, w) in self.values.iter_mut().zip(other.values.iter()) {
            *v += a * w;
        }
    }
}

/// Complex periodic grid function (used by the Bloch transform and tests).
#[derive(Clone, Debug)]
pub struct ComplexGridField {
    pub grid: SpectralGrid,
    pub values: Vec<Complex64>,
}

impl ComplexGridField {
    pub fn new(grid: SpectralGrid, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.n(), "value length must match grid");
        Self { grid, values }
    }

    pub fn from_fn(grid: SpectralGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn from_real(f: &GridField) -> Self {
        Self {
            grid: f.grid,
            values: f.values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }

    /// Convert to a real field, checking the imaginary residue.
    pub fn into_real(self, tol: f64) -> Result<GridField> {
        let scale = self
            .values
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let worst = self.values.iter().map(|z| z.im.abs()).fold(0.0_f64, f64::max);
        if worst > tol * scale {
            return Err(Error::NotReal { residue: worst });
        }
        Ok(GridField {
            grid: self.grid,
            values: self.values.into_iter().map(|z| z.re).collect(),
        })
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        fourier::coeffs(&self.values)
    }

    pub fn from_coeffs(grid: SpectralGrid, c: &[Complex64]) -> Self {
        assert_eq!(c.len(), grid.n());
        Self { grid, values: fourier::values(c) }
    }
}
