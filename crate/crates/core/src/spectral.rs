//! Spectral grid primitives: derivatives, antiderivative, Sobolev norms and
//! dealiased products on the big torus.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{ComplexGridField, GridField};

/// Spectral derivative of the given order (exact on resolved trig polynomials).
pub fn derivative(f: &GridField, order: u32) -> GridField {
    let mut c = f.coeffs();
    fourier::derivative_symbol(&mut c, order, f.grid.len());
    GridField::from_coeffs(f.grid, &c).expect("derivative of a real field is real")
}

/// Complex-field variant of [`derivative`].
pub fn derivative_complex(f: &ComplexGridField, order: u32) -> ComplexGridField {
    let mut c = f.coeffs();
    fourier::derivative_symbol(&mut c, order, f.grid.len());
    ComplexGridField::from_coeffs(f.grid, &c)
}

/// Antiderivative with zero mean, realized via the symbol 1/(ik).
///
/// Requires the zero mode to vanish: |mean| <= 1e-10 * ||f||_{L^2}.
pub fn antiderivative(f: &GridField) -> Result<GridField> {
    let mut c = f.coeffs();
    let norm = fourier::l2_norm(&c, f.grid.len());
    let mean = c[0].norm();
    if mean > 1e-10 * norm.max(1e-300) {
        return Err(Error::NonZeroMean { mean, norm });
    }
    fourier::antiderivative_symbol(&mut c, f.grid.len());
    GridField::from_coeffs(f.grid, &c)
}

/// Sobolev norm (sum_k |f_k|^2 (1+k^2)^s * len)^{1/2}; s = 0 is the L^2 norm.
pub fn sobolev_norm(f: &GridField, s: f64) -> f64 {
    fourier::sobolev_norm(&f.coeffs(), s, f.grid.len())
}

/// L^2 norm shortcut.
pub fn l2_norm(f: &GridField) -> f64 {
    fourier::l2_norm(&f.coeffs(), f.grid.len())
}

/// Pointwise product under the two-thirds rule: both inputs are truncated to
/// the retained band, multiplied in physical space, and the result truncated
/// again, so no aliased energy can land inside the retained band.
pub fn dealiased_product(f: &GridField, g: &GridField) -> GridField {
    assert_eq!(f.grid, g.grid, "fields must share a grid");
    let keep = fourier::dealias_keep(f.grid.n());
    let trunc = |h: &GridField| -> Vec<f64> {
        let mut c = h.coeffs();
        fourier::truncate_above(&mut c, keep);
        fourier::values_real(&c, 1e-12).expect("truncation keeps real fields real")
    };
    let fv = trunc(f);
    let gv = trunc(g);
    let prod: Vec<f64> = fv.iter().zip(gv.iter()).map(|(a, b)| a * b).collect();
    let mut c = fourier::coeffs_real(&prod);
    fourier::truncate_above(&mut c, keep);
    GridField::from_coeffs(f.grid, &c).expect("product of real fields is real")
}

/// Complex variant of [`dealiased_product`].
pub fn dealiased_product_complex(f: &ComplexGridField, g: &ComplexGridField) -> ComplexGridField {
    assert_eq!(f.grid, g.grid, "fields must share a grid");
    let keep = fourier::dealias_keep(f.grid.n());
    let trunc = |h: &ComplexGridField| -> Vec<Complex64> {
        let mut c = h.coeffs();
        fourier::truncate_above(&mut c, keep);
        fourier::values(&c)
    };
    let fv = trunc(f);
    let gv = trunc(g);
    let prod: Vec<Complex64> = fv.iter().zip(gv.iter()).map(|(a, b)| a * b).collect();
    let mut c = fourier::coeffs(&prod);
    fourier::truncate_above(&mut c, keep);
    ComplexGridField::from_coeffs(f.grid, &c)
}
