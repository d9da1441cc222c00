//! Discrete Bloch transform on the big torus.
//!
//! With n = cells * points_per_cell Fourier coefficients c_k at wavenumbers
//! k = q + l (cell mode q, Bloch number l = r/cells in (-1/2, 1/2]), the Bloch
//! transform is the exact reindexing
//!
//!   u~(l_r, x) = sum_q [cells * c_{q*cells + r}] e^{iqx},
//!
//! which carries the continuum density normalization: the inverse is
//! u(x) = (1/cells) sum_r u~(l_r, x) e^{i l_r x}, and Parseval holds with the
//! measure dl on (-1/2, 1/2].

use num_complex::Complex64;

use crate::fourier;
use crate::grid::{ComplexGridField, GridField, SpectralGrid};

/// Bloch-transformed field: `data[r * P + q]` is the cell Fourier coefficient
/// `q` at Bloch index `r` (both in FFT bin order).
#[derive(Clone, Debug)]
pub struct BlochField {
    pub grid: SpectralGrid,
    pub data: Vec<Complex64>,
}

impl BlochField {
    pub fn zeros(grid: SpectralGrid) -> Self {
        Self { grid, data: vec![Complex64::new(0.0, 0.0); grid.n()] }
    }

    pub fn entry(&self, r: usize, q: usize) -> Complex64 {
        self.data[r * self.grid.points_per_cell + q]
    }

    pub fn entry_mut(&mut self, r: usize, q: usize) -> &mut Complex64 {
        &mut self.data[r * self.grid.points_per_cell + q]
    }

    /// Cell coefficients at Bloch index `r`.
    pub fn cell(&self, r: usize) -> &[Complex64] {
        let p = self.grid.points_per_cell;
        &self.data[r * p..(r + 1) * p]
    }

    pub fn cell_mut(&mut self, r: usize) -> &mut [Complex64] {
        let p = self.grid.points_per_cell;
        &mut self.data[r * p..(r + 1) * p]
    }

    /// Squared L^2(T_1, L^2(0,2pi)) norm: integral over l of the cell norm.
    pub fn norm_sqr(&self) -> f64 {
        let cells = self.grid.cells as f64;
        let cell_measure = crate::grid::TAU;
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell_measure / cells
    }
}

/// Global FFT bin of (Bloch bin, cell-mode bin); the inverse of the Bloch
/// reindexing. Exposed for modules assembling big-torus spectra directly.
pub fn bloch_join(r_bin: usize, q_bin: usize, grid: &SpectralGrid) -> usize {
    join_global(r_bin, q_bin, grid)
}

fn split_global(j: usize, grid: &SpectralGrid) -> (usize, usize) {
    // signed index s = q*cells + r with r in (-cells/2, cells/2]
    let nc = grid.cells as i64;
    let p = grid.points_per_cell as i64;
    let s = fourier::signed_index(j, grid.n());
    let r_bin = s.rem_euclid(nc);
    let r_signed = if r_bin > nc / 2 { r_bin - nc } else { r_bin };
    let q_signed = (s - r_signed) / nc;
    (r_bin as usize, q_signed.rem_euclid(p) as usize)
}

fn join_global(r_bin: usize, q_bin: usize, grid: &SpectralGrid) -> usize {
    let nc = grid.cells as i64;
    let r_signed = fourier::signed_index(r_bin, grid.cells);
    let q_signed = fourier::signed_index(q_bin, grid.points_per_cell);
    fourier::bin_of_signed(q_signed * nc + r_signed, grid.n())
}

/// Forward Bloch transform of a complex field.
pub fn forward_complex(f: &ComplexGridField) -> BlochField {
    let grid = f.grid;
    let c = f.coeffs();
    let mut out = BlochField::zeros(grid);
    let scale = grid.cells as f64;
    for j in 0..grid.n() {
        let (r, q) = split_global(j, &grid);
        *out.entry_mut(r, q) = c[j] * scale;
    }
    out
}

/// Forward Bloch transform of a real field.
pub fn forward(f: &GridField) -> BlochField {
    forward_complex(&ComplexGridField::from_real(f))
}

/// Inverse Bloch transform.
pub fn inverse(b: &BlochField) -> ComplexGridField {
    let grid = b.grid;
    let mut c = vec![Complex64::new(0.0, 0.0); grid.n()];
    let scale = 1.0 / grid.cells as f64;
    for r in 0..grid.cells {
        for q in 0..grid.points_per_cell {
            c[join_global(r, q, &grid)] = b.entry(r, q) * scale;
        }
    }
    ComplexGridField::from_coeffs(grid, &c)
}

/// Cell values of `u~(l_r, .)` on the points-per-cell grid.
fn cell_values(b: &BlochField, r: usize) -> Vec<Complex64> {
    fourier::values(b.cell(r))
}

/// Literal discrete Bloch convolution
/// `(u~ * v~)(l, x) = (1/cells) sum_m u~(l - m, x) v~(m, x)`, applying the
/// continuation condition `u~(l + 1, x) = u~(l, x) e^{-ix}` whenever `l - m`
/// leaves `(-1/2, 1/2]`. Quadratic cost; serves as the definition-level oracle
/// for the product route.
pub fn convolve(b1: &BlochField, b2: &BlochField) -> BlochField {
    assert_eq!(b1.grid, b2.grid, "fields must share a grid");
    let grid = b1.grid;
    let nc = grid.cells;
    let p = grid.points_per_cell;
    let vals1: Vec<Vec<Complex64>> = (0..nc).map(|r| cell_values(b1, r)).collect();
    let vals2: Vec<Vec<Complex64>> = (0..nc).map(|r| cell_values(b2, r)).collect();
    let cell_x: Vec<f64> = (0..p).map(|m| crate::grid::TAU * m as f64 / p as f64).collect();

    let mut out = BlochField::zeros(grid);
    for r in 0..nc {
        let l = grid.bloch_number(r);
        let mut acc = vec![Complex64::new(0.0, 0.0); p];
        for s in 0..nc {
            let m = grid.bloch_number(s);
            let d = l - m;
            // shift d into (-1/2, 1/2] and pick the continuation phase
            let shift = if d > 0.5 {
                1.0
            } else if d <= -0.5 {
                -1.0
            } else {
                0.0
            };
            let dr = d - shift;
            let r_idx = fourier::bin_of_signed((dr * nc as f64).round() as i64, nc);
            for (i, a) in acc.iter_mut().enumerate() {
                // u~(d, x) = u~(d - shift, x) e^{-i shift x}
                let phase = if shift == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, -shift * cell_x[i]).exp()
                };
                *a += vals1[r_idx][i] * phase * vals2[s][i];
            }
        }
        let inv_nc = 1.0 / nc as f64;
        for a in &mut acc {
            *a *= inv_nc;
        }
        let coeffs = fourier::coeffs(&acc);
        out.cell_mut(r).copy_from_slice(&coeffs);
    }
    out
}
