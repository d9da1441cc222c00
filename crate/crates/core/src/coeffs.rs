//! The 2π-periodic media functions a, b, c given by cell Fourier coefficients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth 2π-periodic function stored as Fourier coefficients up to a cutoff.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CellFunction {
    /// Coefficient of e^{ipx} at index p + cutoff, p in [-cutoff, cutoff].
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub cutoff: usize,
}

impl CellFunction {
    pub fn constant(value: f64) -> Self {
        Self { re: vec![value], im: vec![0.0], cutoff: 0 }
    }

    /// Build from a constant term plus cosine harmonics `(p, amplitude)`.
    pub fn from_cosines(mean: f64, cosines: &[(usize, f64)]) -> Self {
        let cutoff = cosines.iter().map(|&(p, _)| p).max().unwrap_or(0);
        let m = 2 * cutoff + 1;
        let mut re = vec![0.0; m];
        let im = vec![0.0; m];
        re[cutoff] = mean;
        for &(p, amp) in cosines {
            if p == 0 {
                re[cutoff] += amp;
            } else {
                re[cutoff + p] += amp / 2.0;
                re[cutoff - p] += amp / 2.0;
            }
        }
        Self { re, im, cutoff }
    }

    pub fn coeff(&self, p: i64) -> Complex64 {
        if p.unsigned_abs() as usize > self.cutoff {
            Complex64::new(0.0, 0.0)
        } else {
            let idx = (p + self.cutoff as i64) as usize;
            Complex64::new(self.re[idx], self.im[idx])
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in -(self.cutoff as i64)..=(self.cutoff as i64) {
            acc += self.coeff(p) * Complex64::new(0.0, p as f64 * x).exp();
        }
        acc.re
    }

    pub fn mean(&self) -> f64 {
        self.re[self.cutoff]
    }

    pub fn min_on_dense_grid(&self) -> f64 {
        let n = 2048;
        (0..n)
            .map(|i| self.eval(crate::grid::TAU * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_on_dense_grid(&self) -> f64 {
        let n = 2048;
        (0..n)
            .map(|i| self.eval(crate::grid::TAU * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest deviation from even symmetry (sine content plus imaginary parts).
    pub fn odd_residue(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in 1..=self.cutoff as i64 {
            let diff = (self.coeff(p) - self.coeff(-p).conj()).norm();
            let imag = self.coeff(p).im.abs().max(self.coeff(-p).im.abs());
            worst = worst.max(diff).max(imag);
        }
        worst.max(self.coeff(0).im.abs())
    }
}

/// The media triple (a, b, c) with admissibility metadata.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PeriodicCoefficients {
    pub a: CellFunction,
    pub b: CellFunction,
    pub c: CellFunction,
    pub even_symmetric: bool,
    pub coef_cutoff: usize,
}

impl PeriodicCoefficients {
    pub fn new(a: CellFunction, b: CellFunction, c: CellFunction) -> Result<Self> {
        let min_a = a.min_on_dense_grid();
        let min_b = b.min_on_dense_grid();
        if min_a <= 0.0 {
            return Err(Error::Config(format!("inf a(x) = {min_a} must be positive")));
        }
        if min_b <= 0.0 {
            return Err(Error::Config(format!("inf b(x) = {min_b} must be positive")));
        }
        let even = a.odd_residue().max(b.odd_residue()).max(c.odd_residue()) < 1e-12;
        let coef_cutoff = a.cutoff.max(b.cutoff).max(c.cutoff);
        Ok(Self { a, b, c, even_symmetric: even, coef_cutoff })
    }

    /// Homogeneous medium a = b = c = 1 (the constant-coefficient model).
    pub fn constant() -> Self {
        Self::new(
            CellFunction::constant(1.0),
            CellFunction::constant(1.0),
            CellFunction::constant(1.0),
        )
        .unwrap()
    }

    /// Reference periodic medium a = 1 + 0.5 cos x, b = c = 1.
    pub fn periodic() -> Self {
        Self::new(
            CellFunction::from_cosines(1.0, &[(1, 0.5)]),
            CellFunction::constant(1.0),
            CellFunction::constant(1.0),
        )
        .unwrap()
    }

    /// Medium with all three coefficients varying (tests).
    pub fn mixed() -> Self {
        Self::new(
            CellFunction::from_cosines(1.0, &[(1, 0.4)]),
            CellFunction::from_cosines(1.0, &[(2, 0.2)]),
            CellFunction::from_cosines(1.0, &[(1, 0.3)]),
        )
        .unwrap()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(Self::constant()),
            "periodic" => Ok(Self::periodic()),
            "mixed" => Ok(Self::mixed()),
            other => Err(Error::Config(format!("unknown coefficient preset '{other}'"))),
        }
    }

    /// Stable content hash for caching effective-model computations.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for f in [&self.a, &self.b, &self.c] {
            h.update((f.cutoff as u64).to_le_bytes());
            for v in f.re.iter().chain(f.im.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Values of a coefficient on the big-torus grid.
    pub fn values_on(&self, f: &CellFunction, grid: crate::grid::SpectralGrid) -> Vec<f64> {
        // one cell sampled once, then tiled
        let p = grid.points_per_cell;
        let cell: Vec<f64> = (0..p).map(|i| f.eval(crate::grid::TAU * i as f64 / p as f64)).collect();
        let mut out = Vec::with_capacity(grid.n());
        for _ in 0..grid.cells {
            out.extend_from_slice(&cell);
        }
        out
    }
}
