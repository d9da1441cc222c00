//! Effective long-wave data of the periodic medium: the corrector g1, the
//! wave speed c with c² = λ1''(0)/2, the dispersion coefficient λ1''''(0),
//! the nonlinear coefficient
//!
//!   ν2 = -(1/2π) ∫ c(x) (1 + g1'(x))² dx,
//!
//! the quadratic Whitham flux s2 = -2 ν2, and the interaction kernels
//! s11^1(l, l-m, m) with their smallness bounds.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::{assemble_bloch_matrix, band_eigenpairs, cell_solve_zero_mean, dispersion_curve};
use crate::coeffs::{CellFunction, PeriodicCoefficients};
use crate::error::{Error, Result};
use crate::grid::TAU;

/// Which amplitude equation a coefficient set feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeKind {
    Kdv,
    Burgers,
    Whitham,
}

impl AmplitudeKind {
    /// Long-wave exponent α: amplitude ε^α on the time scale T = ε^{1+α} t.
    pub fn alpha(&self) -> f64 {
        match self {
            AmplitudeKind::Kdv => 2.0,
            AmplitudeKind::Burgers => 1.0,
            AmplitudeKind::Whitham => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AmplitudeKind::Kdv => "kdv",
            AmplitudeKind::Burgers => "burgers",
            AmplitudeKind::Whitham => "whitham",
        }
    }
}

/// Effective model of the first Bloch band near l = 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveModel {
    /// Effective wave speed, c = sqrt(λ1''(0)/2).
    pub wave_speed: f64,
    /// λ1''(0).
    pub lambda2: f64,
    /// λ1''''(0).
    pub lambda4: f64,
    /// Nonlinear coefficient of the KdV/Burgers flux.
    pub nu2: f64,
    /// Quadratic Whitham flux coefficient, s2 = -2 ν2.
    pub whitham_s2: f64,
    /// Corrector g1 (odd, zero mean) as cell Fourier coefficients.
    pub g1: CellFunction,
    /// Measured spectral-gap half-width.
    pub delta0: f64,
    /// Galerkin cutoff used for the cell problems.
    pub cutoff: usize,
    /// Finite-difference step used for the dispersion derivatives.
    pub fd_step: f64,
    /// Step-halving error estimates for (lambda2, lambda4).
    pub fd_error: (f64, f64),
}

/// Solve L0 g1 = ∂x a for the odd zero-mean corrector.
pub fn compute_g1(coeffs: &PeriodicCoefficients, m: usize) -> Result<CellFunction> {
    let n = 2 * m + 1;
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    for idx in 0..n {
        let p = idx as i64 - m as i64;
        rhs[idx] = Complex64::new(0.0, p as f64) * coeffs.a.coeff(p);
    }
    let sol = cell_solve_zero_mean(coeffs, &rhs, m)?;
    let re: Vec<f64> = sol.iter().map(|z| z.re).collect();
    let im: Vec<f64> = sol.iter().map(|z| z.im).collect();
    Ok(CellFunction { re, im, cutoff: m })
}

/// Quadrature of ν2 = -(1/2π) ∫ c(x)(1 + g1'(x))² dx.
pub fn compute_nu2(coeffs: &PeriodicCoefficients, g1: &CellFunction) -> f64 {
    let n = 8 * (coeffs.coef_cutoff + g1.cutoff + 1).next_power_of_two();
    let mut acc = 0.0;
    for i in 0..n {
        let x = TAU * i as f64 / n as f64;
        let mut g1p = 0.0;
        for p in -(g1.cutoff as i64)..=(g1.cutoff as i64) {
            g1p += (g1.coeff(p) * Complex64::new(0.0, p as f64) * Complex64::new(0.0, p as f64 * x).exp()).re;
        }
        let w = 1.0 + g1p;
        acc += coeffs.c.eval(x) * w * w;
    }
    -acc / n as f64
}

/// λ1''(0) from second-order perturbation theory:
/// λ1''(0) = 2 (mean(a) - (1/2π) ∫ g1 ∂x a dx). Oracle for the FD route.
pub fn lambda2_perturbation(coeffs: &PeriodicCoefficients, g1: &CellFunction) -> f64 {
    // (1/2π)∫ g1 a' dx = Σ_p conj(g1_p) (ip a_p)  (both real functions)
    let m = g1.cutoff.max(coeffs.a.cutoff) as i64;
    let mut corr = 0.0;
    for p in -m..=m {
        let ap = coeffs.a.coeff(p) * Complex64::new(0.0, p as f64);
        corr += (g1.coeff(p).conj() * ap).re;
    }
    2.0 * (coeffs.a.mean() - corr)
}

/// Central finite differences with Richardson extrapolation for
/// (λ1''(0), λ1''''(0)), exploiting evenness of the band.
pub fn dispersion_derivatives(
    band_value: impl Fn(f64) -> f64,
    h: f64,
    gap_margin: f64,
) -> Result<(f64, f64, (f64, f64))> {
    if 2.0 * h > gap_margin {
        return Err(Error::StencilOutsideGap { stencil: 2.0 * h, margin: gap_margin });
    }
    let l0 = band_value(0.0);
    let d2 = |h: f64| 2.0 * (band_value(h) - l0) / (h * h);
    let d4 = |h: f64| (2.0 * band_value(2.0 * h) - 8.0 * band_value(h) + 6.0 * l0) / h.powi(4);
    // two Richardson levels: the even-stencil error series is in h^2
    let r2 = |h: f64| (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
    let r4 = |h: f64| (4.0 * d4(h / 2.0) - d4(h)) / 3.0;
    let rr2 = |h: f64| (16.0 * r2(h / 2.0) - r2(h)) / 15.0;
    let rr4 = |h: f64| (16.0 * r4(h / 2.0) - r4(h)) / 15.0;
    let lambda2 = rr2(h);
    let lambda4 = rr4(h);
    let err2 = (r2(h / 2.0) - lambda2).abs();
    let err4 = (r4(h / 2.0) - lambda4).abs();
    Ok((lambda2, lambda4, (err2, err4)))
}

fn band1_value(coeffs: &PeriodicCoefficients, m: usize) -> impl Fn(f64) -> f64 + '_ {
    move |l: f64| {
        let matrix = assemble_bloch_matrix(coeffs, l, m);
        band_eigenpairs(&matrix, 1)[0].0
    }
}

/// First-band eigenfunction at Bloch number l, phase-normalized.
pub fn band1_eigenfunction(
    coeffs: &PeriodicCoefficients,
    l: f64,
    m: usize,
) -> (f64, DVector<Complex64>) {
    let matrix = assemble_bloch_matrix(coeffs, l, m);
    let mut pairs = band_eigenpairs(&matrix, 1);
    crate::cell::normalize_phase(&mut pairs[0].1, m);
    let (lam, w) = pairs.remove(0);
    (lam, w)
}

/// Interaction kernel s11^1(l, l-m, m):
/// (1/2π) ∫ conj(w1(l)) (∂x+il)(c(x)(∂x+il)(w1(l-m) w1(m))) dx.
pub fn kernel_s11_1(
    coeffs: &PeriodicCoefficients,
    l: f64,
    m_arg: f64,
    cutoff: usize,
) -> Complex64 {
    let (_, wl) = band1_eigenfunction(coeffs, l, cutoff);
    let (_, wlm) = band1_eigenfunction(coeffs, l - m_arg, cutoff);
    let (_, wm) = band1_eigenfunction(coeffs, m_arg, cutoff);
    kernel_s11_1_with(coeffs, l, &wl, &wlm, &wm, cutoff)
}

/// Kernel evaluation reusing available eigenfunctions.
pub fn kernel_s11_1_with(
    coeffs: &PeriodicCoefficients,
    l: f64,
    wl: &DVector<Complex64>,
    wlm: &DVector<Complex64>,
    wm: &DVector<Complex64>,
    cutoff: usize,
) -> Complex64 {
    let m = cutoff as i64;
    // product w1(l-m) * w1(m) on an extended coefficient range
    let ext = 2 * cutoff;
    let size = 2 * ext + 1;
    let mut prod = vec![Complex64::new(0.0, 0.0); size];
    for (i1, v1) in wlm.iter().enumerate() {
        let j1 = i1 as i64 - m;
        for (i2, v2) in wm.iter().enumerate() {
            let j2 = i2 as i64 - m;
            prod[(j1 + j2 + ext as i64) as usize] += v1 * v2;
        }
    }
    // inner (∂x + il)
    for (idx, v) in prod.iter_mut().enumerate() {
        let j = idx as i64 - ext as i64;
        *v *= Complex64::new(0.0, j as f64 + l);
    }
    // multiply by c(x)
    let ext2 = ext + coeffs.c.cutoff;
    let size2 = 2 * ext2 + 1;
    let mut withc = vec![Complex64::new(0.0, 0.0); size2];
    for (idx, v) in prod.iter().enumerate() {
        let j = idx as i64 - ext as i64;
        for p in -(coeffs.c.cutoff as i64)..=(coeffs.c.cutoff as i64) {
            withc[(j + p + ext2 as i64) as usize] += coeffs.c.coeff(p) * v;
        }
    }
    // outer (∂x + il)
    for (idx, v) in withc.iter_mut().enumerate() {
        let j = idx as i64 - ext2 as i64;
        *v *= Complex64::new(0.0, j as f64 + l);
    }
    // pair against w1(l): (1/2π)∫ conj(w1) f dx = Σ_j conj(w1_j) f_j
    let mut acc = Complex64::new(0.0, 0.0);
    for (i1, v1) in wl.iter().enumerate() {
        let j1 = i1 as i64 - m;
        acc += v1.conj() * withc[(j1 + ext2 as i64) as usize];
    }
    acc
}

/// ν2 recovered from the kernel limit s11^1(l, l, 0)/l² as l -> 0
/// (Richardson-extrapolated); independent oracle for [`compute_nu2`].
pub fn nu2_from_kernel_limit(coeffs: &PeriodicCoefficients, cutoff: usize, h: f64) -> f64 {
    let r = |l: f64| kernel_s11_1(coeffs, l, 0.0, cutoff).re / (l * l);
    (4.0 * r(h / 2.0) - r(h)) / 3.0
}

impl EffectiveModel {
    /// Assemble the full effective model of a medium.
    pub fn compute(coeffs: &PeriodicCoefficients, m: usize, gap_tol: f64) -> Result<Self> {
        // sample the band structure to measure the gap
        let nl = 48;
        let ls: Vec<f64> = (-(nl as i64)..=nl as i64)
            .map(|i| 0.5 * i as f64 / nl as f64)
            .collect();
        let band = dispersion_curve(coeffs, 2, &ls, m, gap_tol, None)?;
        let delta0 = band.gap_margin;
        if delta0 <= 0.0 {
            return Err(Error::Config("no spectral gap at l = 0".into()));
        }

        let g1 = compute_g1(coeffs, m)?;
        let nu2 = compute_nu2(coeffs, &g1);
        let h = (delta0 / 4.0).min(0.08);
        let value = band1_value(coeffs, m);
        let (lambda2, lambda4, fd_error) = dispersion_derivatives(value, h, delta0)?;
        if lambda2 <= 0.0 {
            return Err(Error::Config(format!("lambda2 = {lambda2} must be positive")));
        }
        Ok(Self {
            wave_speed: (lambda2 / 2.0).sqrt(),
            lambda2,
            lambda4,
            nu2,
            whitham_s2: -2.0 * nu2,
            g1,
            delta0,
            cutoff: m,
            fd_step: h,
            fd_error,
        })
    }

    /// Default Galerkin cutoff per the resolution rule max(16, 4·coef cutoff).
    pub fn default_cutoff(coeffs: &PeriodicCoefficients) -> usize {
        (4 * coeffs.coef_cutoff).max(16)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("effective model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Coefficients of one amplitude equation, normalized as in the flux forms
/// 2c ∂_T A = s [ dispersion ∂_X³A + nonlin ∂_X(A²) ]·2c and
/// ∂_T²A = ∂_X²( lin A + quad A² ) respectively.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AmplitudeCoefficients {
    pub kind: AmplitudeKind,
    /// Frame speed c (0 for Whitham).
    pub speed: f64,
    /// KdV dispersion λ4/(24·2c); 0 for Burgers/Whitham.
    pub dispersion: f64,
    /// KdV/Burgers nonlinearity ν2/(2c); 0 for Whitham.
    pub nonlin: f64,
    /// Whitham linear flux λ2/2.
    pub whitham_lin: f64,
    /// Whitham quadratic flux s2/2.
    pub whitham_quad: f64,
}

/// Extract the coefficient record of one amplitude equation.
pub fn amplitude_coefficients(model: &EffectiveModel, kind: AmplitudeKind) -> AmplitudeCoefficients {
    let c = model.wave_speed;
    match kind {
        AmplitudeKind::Kdv => AmplitudeCoefficients {
            kind,
            speed: c,
            dispersion: model.lambda4 / 24.0 / (2.0 * c),
            nonlin: model.nu2 / (2.0 * c),
            whitham_lin: 0.0,
            whitham_quad: 0.0,
        },
        AmplitudeKind::Burgers => AmplitudeCoefficients {
            kind,
            speed: c,
            dispersion: 0.0,
            nonlin: model.nu2 / (2.0 * c),
            whitham_lin: 0.0,
            whitham_quad: 0.0,
        },
        AmplitudeKind::Whitham => AmplitudeCoefficients {
            kind,
            speed: 0.0,
            dispersion: 0.0,
            nonlin: 0.0,
            whitham_lin: model.lambda2 / 2.0,
            whitham_quad: model.whitham_s2 / 2.0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_medium_closed_forms() {
        let coeffs = PeriodicCoefficients::constant();
        let model = EffectiveModel::compute(&coeffs, 16, 1e-3).unwrap();
        assert_abs_diff_eq!(model.wave_speed, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(model.lambda2, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(model.lambda4, 24.0, epsilon = 1e-7);
        assert_abs_diff_eq!(model.nu2, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.whitham_s2, 2.0, epsilon = 1e-12);
        // g1 vanishes
        let g1max: f64 = model.g1.re.iter().chain(model.g1.im.iter()).map(|v| v.abs()).fold(0.0, f64::max);
        assert!(g1max < 1e-12);
        assert!(model.delta0 > 0.4);
    }

    #[test]
    fn g1_residual_and_parity() {
        let coeffs = PeriodicCoefficients::periodic();
        let m = 16;
        let g1 = compute_g1(&coeffs, m).unwrap();
        // residual: L0 g1 - a' in coefficient space via quadrature route
        let g1_vec: Vec<Complex64> = (0..2 * m + 1)
            .map(|i| Complex64::new(g1.re[i], g1.im[i]))
            .collect();
        let applied = crate::cell::apply_operator_quadrature(&coeffs, 0.0, &g1_vec, 256);
        let mut worst: f64 = 0.0;
        for idx in 0..2 * m + 1 {
            let p = idx as i64 - m as i64;
            let rhs = Complex64::new(0.0, p as f64) * coeffs.a.coeff(p);
            worst = worst.max((applied[idx] - rhs).norm());
        }
        assert!(worst < 1e-10, "g1 residual {worst}");

        // odd and zero-mean: g1(-x) = -g1(x)
        assert!(g1.mean().abs() < 1e-13);
        let n = 256;
        for i in 0..n {
            let x = TAU * i as f64 / n as f64;
            assert!((g1.eval(x) + g1.eval(TAU - x)).abs() < 1e-10);
        }
    }

    #[test]
    fn nu2_linear_in_c_and_matches_kernel_limit() {
        // c = 1, g1 = 0 -> nu2 = -1; c = 2 -> nu2 = -2
        let flat = PeriodicCoefficients::constant();
        let g0 = CellFunction::constant(0.0);
        assert_abs_diff_eq!(compute_nu2(&flat, &g0), -1.0, epsilon = 1e-14);
        let double = PeriodicCoefficients::new(
            CellFunction::constant(1.0),
            CellFunction::constant(1.0),
            CellFunction::constant(2.0),
        )
        .unwrap();
        assert_abs_diff_eq!(compute_nu2(&double, &g0), -2.0, epsilon = 1e-14);

        // periodic medium: integral formula vs kernel-limit extrapolation
        let coeffs = PeriodicCoefficients::periodic();
        let m = 16;
        let g1 = compute_g1(&coeffs, m).unwrap();
        let direct = compute_nu2(&coeffs, &g1);
        let via_kernel = nu2_from_kernel_limit(&coeffs, m, 0.04);
        assert!(
            (direct - via_kernel).abs() < 1e-6 * direct.abs(),
            "nu2 {direct} vs kernel limit {via_kernel}"
        );
    }

    #[test]
    fn dispersion_derivatives_constant_medium() {
        let coeffs = PeriodicCoefficients::constant();
        let value = band1_value(&coeffs, 16);
        let (l2, l4, (e2, e4)) = dispersion_derivatives(value, 0.1, 0.49).unwrap();
        assert_abs_diff_eq!(l2, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(l4, 24.0, epsilon = 1e-7);
        assert!(e2 < 1e-6 * 2.0 && e4 < 1e-6 * 24.0, "step-halving errors {e2} {e4}");
    }

    #[test]
    fn stencil_outside_gap_is_rejected() {
        let coeffs = PeriodicCoefficients::constant();
        let value = band1_value(&coeffs, 8);
        assert!(matches!(
            dispersion_derivatives(value, 0.3, 0.5),
            Err(Error::StencilOutsideGap { .. })
        ));
    }

    #[test]
    fn lambda2_matches_perturbation_theory() {
        for coeffs in [PeriodicCoefficients::periodic(), PeriodicCoefficients::mixed()] {
            let m = 16;
            let model = EffectiveModel::compute(&coeffs, m, 1e-3).unwrap();
            let g1 = compute_g1(&coeffs, m).unwrap();
            let pt = lambda2_perturbation(&coeffs, &g1);
            assert!(
                (model.lambda2 - pt).abs() < 1e-7 * pt.abs(),
                "fd {} vs perturbation {}",
                model.lambda2,
                pt
            );
            // homogenization slows the wave
            assert!(model.wave_speed < 1.0);
        }
    }

    #[test]
    fn kernel_vanishes_at_l_zero_and_constant_closed_form() {
        let coeffs = PeriodicCoefficients::periodic();
        for m_arg in [0.0, 0.05, -0.11] {
            let v = kernel_s11_1(&coeffs, 0.0, m_arg, 12);
            assert!(v.norm() < 1e-12, "s11(0, -m, m) = {v}");
        }
        let flat = PeriodicCoefficients::constant();
        for l in [0.04, 0.12, -0.2] {
            for m_arg in [0.0, 0.03, -0.08] {
                let v = kernel_s11_1(&flat, l, m_arg, 12);
                assert!((v.re + l * l).abs() < 1e-10 && v.im.abs() < 1e-12, "s11 = {v}");
            }
        }
    }

    #[test]
    fn kernel_remainder_fourth_order_for_even_media() {
        // |s11^1 - nu2 l^2| <= C (l^4 + (l-m)^4 + m^4), fitted C stable
        let coeffs = PeriodicCoefficients::periodic();
        let m = 16;
        let g1 = compute_g1(&coeffs, m).unwrap();
        let nu2 = compute_nu2(&coeffs, &g1);
        let fit_c = |scale: f64| -> f64 {
            let mut worst: f64 = 0.0;
            for &l in &[0.02, 0.04, 0.06] {
                for &ma in &[-0.03, 0.0, 0.025] {
                    let (l, ma) = (l * scale, ma * scale);
                    let s = kernel_s11_1(&coeffs, l, ma, m);
                    let rem = (s - Complex64::new(nu2 * l * l, 0.0)).norm();
                    let bound = l.powi(4) + (l - ma).powi(4) + ma.powi(4);
                    worst = worst.max(rem / bound);
                }
            }
            worst
        };
        let c1 = fit_c(1.0);
        let c2 = fit_c(0.5);
        // fourth-order remainder: fitted constant does not blow up on refinement
        assert!(c2 < 4.0 * c1 + 1.0, "C(1) = {c1}, C(0.5) = {c2}");
    }

    #[test]
    fn amplitude_coefficient_records() {
        let coeffs = PeriodicCoefficients::constant();
        let model = EffectiveModel::compute(&coeffs, 16, 1e-3).unwrap();
        // 2 ∂_T A + ∂_X³A - ∂_X(A²) = 0: dispersion 1/(2c·... ) = 0.5, nonlin -0.5
        let kdv = amplitude_coefficients(&model, AmplitudeKind::Kdv);
        assert_abs_diff_eq!(kdv.speed, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(kdv.dispersion, 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(kdv.nonlin, -0.5, epsilon = 1e-9);
        let burgers = amplitude_coefficients(&model, AmplitudeKind::Burgers);
        assert_abs_diff_eq!(burgers.nonlin, -0.5, epsilon = 1e-9);
        // Whitham reduces to ∂_T²A = ∂_X²(A + A²)
        let whit = amplitude_coefficients(&model, AmplitudeKind::Whitham);
        assert_abs_diff_eq!(whit.whitham_lin, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(whit.whitham_quad, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn coefficients_stable_under_cutoff_refinement() {
        let coeffs = PeriodicCoefficients::periodic();
        let a = EffectiveModel::compute(&coeffs, 16, 1e-3).unwrap();
        let b = EffectiveModel::compute(&coeffs, 32, 1e-3).unwrap();
        assert!((a.wave_speed - b.wave_speed).abs() < 1e-6);
        assert!((a.lambda4 - b.lambda4).abs() < 1e-6 * a.lambda4.abs());
        assert!((a.nu2 - b.nu2).abs() < 1e-6 * a.nu2.abs());
    }

    #[test]
    fn model_json_roundtrip() {
        let coeffs = PeriodicCoefficients::periodic();
        let model = EffectiveModel::compute(&coeffs, 16, 1e-3).unwrap();
        let back = EffectiveModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model.wave_speed, back.wave_speed);
        assert_eq!(model.g1.re, back.g1.re);
        assert_eq!(model.fd_error, back.fd_error);
    }
}
