//! The slow spatial domain X = εx: a periodic line of length ε·2π·cells that
//! carries the amplitude fields A(X, T). Its Fourier modes K sit exactly on
//! the Bloch grid through l = εK.

use num_complex::Complex64;

use crate::fourier;

/// Periodic grid for the slow variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlowGrid {
    pub n: usize,
    pub len: f64,
}

impl SlowGrid {
    pub fn new(n: usize, len: f64) -> Self {
        assert!(n.is_power_of_two() && n >= 8, "slow grid size should be a power of two");
        Self { n, len }
    }

    /// Slow grid matched to a big torus: length ε·2π·cells.
    pub fn for_big_grid(grid: crate::grid::SpectralGrid, epsilon: f64, n: usize) -> Self {
        Self::new(n, epsilon * grid.len())
    }

    pub fn point(&self, i: usize) -> f64 {
        self.len * i as f64 / self.n as f64
    }

    pub fn wavenumber(&self, j: usize) -> f64 {
        fourier::wavenumber(j, self.n, self.len)
    }

    pub fn spacing(&self) -> f64 {
        self.len / self.n as f64
    }

    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Spectral coefficients of a centered real profile f(X - len/2).
    pub fn coeffs_of(&self, f: impl Fn(f64) -> f64) -> Vec<Complex64> {
        let vals: Vec<f64> = (0..self.n).map(|i| f(self.point(i) - 0.5 * self.len)).collect();
        fourier::coeffs_real(&vals)
    }

    pub fn values(&self, c: &[Complex64]) -> Vec<f64> {
        fourier::values_real(c, 1e-10).expect("amplitude fields are real")
    }

    pub fn derivative(&self, c: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut out = c.to_vec();
        fourier::derivative_symbol(&mut out, order, self.len);
        out
    }

    pub fn antiderivative(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut out = c.to_vec();
        fourier::antiderivative_symbol(&mut out, self.len);
        out
    }

    /// Dealiased product of two spectral fields.
    pub fn product(&self, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let keep = fourier::dealias_keep(self.n);
        let mut at = a.to_vec();
        let mut bt = b.to_vec();
        fourier::truncate_above(&mut at, keep);
        fourier::truncate_above(&mut bt, keep);
        let av = fourier::values(&at);
        let bv = fourier::values(&bt);
        let prod: Vec<Complex64> = av.iter().zip(bv.iter()).map(|(x, y)| x * y).collect();
        let mut c = fourier::coeffs(&prod);
        fourier::truncate_above(&mut c, keep);
        c
    }

    pub fn l2_norm(&self, c: &[Complex64]) -> f64 {
        fourier::l2_norm(c, self.len)
    }

    pub fn sup_norm(&self, c: &[Complex64]) -> f64 {
        self.values(c).iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self, c: &[Complex64]) -> f64 {
        c[0].re
    }

    /// Relative spectral mass beyond |K| > kc.
    pub fn tail_mass(&self, c: &[Complex64], kc: f64) -> f64 {
        let mut tail = 0.0;
        let mut total = 0.0;
        for (j, z) in c.iter().enumerate() {
            let k = self.wavenumber(j);
            let m = z.norm_sqr();
            total += m;
            if k.abs() > kc {
                tail += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// Centered Gaussian profile A_max exp(-X²/w²).
pub fn gaussian_profile(a_max: f64, width: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| a_max * (-(x * x) / (width * width)).exp()
}
