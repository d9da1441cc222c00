//! Low-level Fourier helpers on a periodic line of arbitrary length.
//!
//! Coefficient convention: `f(x) = sum_j c[j] e^{i k_j x}` with
//! `k_j = 2 pi s(j) / len` and signed index `s(j) = j` for `j <= n/2`,
//! `j - n` otherwise (the +n/2 Nyquist mode is kept, -n/2 is not).
//! Forward transforms divide by n so `c` holds series coefficients.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

struct PlanCache {
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

static PLANS: Mutex<Option<PlanCache>> = Mutex::new(None);

fn with_plan(n: usize, inverse: bool, buf: &mut [Complex64]) {
    let plan = {
        let mut guard = PLANS.lock().unwrap();
        let cache = guard.get_or_insert_with(|| PlanCache {
            forward: HashMap::new(),
            inverse: HashMap::new(),
        });
        let map = if inverse { &mut cache.inverse } else { &mut cache.forward };
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    };
    plan.process(buf);
}

/// Signed index of FFT bin `j` on a length-`n` transform.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// FFT bin holding signed index `s` (inverse of [`signed_index`]).
pub fn bin_of_signed(s: i64, n: usize) -> usize {
    s.rem_euclid(n as i64) as usize
}

/// Wavenumber of bin `j` on a torus of length `len`.
pub fn wavenumber(j: usize, n: usize, len: f64) -> f64 {
    2.0 * std::f64::consts::PI * signed_index(j, n) as f64 / len
}

/// Forward transform: physical samples to series coefficients.
pub fn coeffs(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    with_plan(n, false, &mut buf);
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

/// Inverse transform: series coefficients to physical samples.
pub fn values(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    with_plan(buf.len(), true, &mut buf);
    buf
}

/// Forward transform of a real field.
pub fn coeffs_real(values: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    coeffs(&v)
}

/// Inverse transform returning the real part; errors when the imaginary
/// residue exceeds `tol` relative to the field scale.
pub fn values_real(c: &[Complex64], tol: f64) -> Result<Vec<f64>> {
    let v = values(c);
    let scale = v
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let worst = v.iter().map(|z| z.im.abs()).fold(0.0_f64, f64::max);
    if worst > tol * scale.max(1.0) {
        return Err(Error::NotReal { residue: worst });
    }
    Ok(v.into_iter().map(|z| z.re).collect())
}

/// In place multiplication by the derivative symbol (ik)^order.
/// The Nyquist mode is zeroed for odd orders to keep real fields real.
pub fn derivative_symbol(c: &mut [Complex64], order: u32, len: f64) {
    let n = c.len();
    for (j, cj) in c.iter_mut().enumerate() {
        let k = wavenumber(j, n, len);
        let sym = (Complex64::new(0.0, k)).powu(order);
        *cj *= sym;
    }
    if order % 2 == 1 && n % 2 == 0 {
        c[n / 2] = Complex64::new(0.0, 0.0);
    }
}

/// In place multiplication by the antiderivative symbol 1/(ik); the zero mode
/// maps to zero. Caller is responsible for the mean-free precondition.
pub fn antiderivative_symbol(c: &mut [Complex64], len: f64) {
    let n = c.len();
    c[0] = Complex64::new(0.0, 0.0);
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        let k = wavenumber(j, n, len);
        *cj /= Complex64::new(0.0, k);
    }
    if n % 2 == 0 {
        c[n / 2] = Complex64::new(0.0, 0.0);
    }
}

/// L^2(0,len) norm from series coefficients (Parseval).
pub fn l2_norm(c: &[Complex64], len: f64) -> f64 {
    (len * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

/// Sobolev H^s norm with weight (1+k^2)^s.
pub fn sobolev_norm(c: &[Complex64], s: f64, len: f64) -> f64 {
    let n = c.len();
    let sum: f64 = c
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let k = wavenumber(j, n, len);
            z.norm_sqr() * (1.0 + k * k).powf(s)
        })
        .sum();
    (len * sum).sqrt()
}

/// Zero every mode with |signed index| above `keep` (two-thirds rule helper).
pub fn truncate_above(c: &mut [Complex64], keep: i64) {
    let n = c.len();
    for (j, cj) in c.iter_mut().enumerate() {
        if signed_index(j, n).abs() > keep {
            *cj = Complex64::new(0.0, 0.0);
        }
    }
}

/// Largest |signed index| kept by the two-thirds dealiasing rule.
pub fn dealias_keep(n: usize) -> i64 {
    (n as i64) / 3
}
