//! Pseudospectral method-of-lines solver for the full periodic Boussinesq
//! equation, written as a first-order system in (u, ∂t u):
//!
//!   ∂t u = v
//!   ∂t v = ∂x(a ∂x u) - ∂x²(b ∂x² u) + ∂x(c ∂x(u²))
//!
//! with physical-space coefficient multiplication, spectral derivatives and
//! two-thirds dealiasing of the quadratic term. Classical RK4 in time under
//! an explicit frozen-coefficient stability bound.

use num_complex::Complex64;

use crate::coeffs::PeriodicCoefficients;
use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{GridField, SpectralGrid};

/// (u, ∂t u) at one instant.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub u: GridField,
    pub v: GridField,
}

impl SimState {
    pub fn rest(grid: SpectralGrid) -> Self {
        Self { t: 0.0, u: GridField::zeros(grid), v: GridField::zeros(grid) }
    }
}

/// Time-stepper configuration.
#[derive(Clone, Copy, Debug)]
pub struct StepperConfig {
    pub dt: f64,
    /// Fraction of the stability limit the dt was derived from.
    pub stability_margin: f64,
    /// Norm ceiling for the blow-up guard (sup norm of u).
    pub ceiling: f64,
    /// Disable the nonlinearity (linear runs for conservation checks).
    pub linear_only: bool,
}

impl StepperConfig {
    pub fn at_margin(coeffs: &PeriodicCoefficients, grid: SpectralGrid, margin: f64) -> Self {
        Self {
            dt: margin * stability_limit(coeffs, grid),
            stability_margin: margin,
            ceiling: 1e3,
            linear_only: false,
        }
    }
}

/// Media sampled on the simulation grid.
pub struct MediumOnGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl MediumOnGrid {
    pub fn new(coeffs: &PeriodicCoefficients, grid: SpectralGrid) -> Self {
        Self {
            a: coeffs.values_on(&coeffs.a, grid),
            b: coeffs.values_on(&coeffs.b, grid),
            c: coeffs.values_on(&coeffs.c, grid),
        }
    }
}

/// RK4 imaginary-axis stability bound for the frozen-coefficient symbol
/// ω(k) = sqrt(max_b k⁴ + max_a k²) at the grid Nyquist k = π/h:
/// dt_max = 2.8/ω.
pub fn stability_limit(coeffs: &PeriodicCoefficients, grid: SpectralGrid) -> f64 {
    let kmax = std::f64::consts::PI / grid.spacing();
    let max_a = coeffs.a.max_on_dense_grid();
    let max_b = coeffs.b.max_on_dense_grid();
    2.8 / (max_b * kmax.powi(4) + max_a * kmax.powi(2)).sqrt()
}

/// Right-hand side (du, dv) of the first-order system.
pub fn rhs(state: &SimState, medium: &MediumOnGrid, linear_only: bool) -> (GridField, GridField) {
    let grid = state.u.grid;
    let n = grid.n();
    let len = grid.len();
    let keep = fourier::dealias_keep(n);

    let mut uc = state.u.coeffs();
    fourier::truncate_above(&mut uc, keep);

    // ∂x(a ∂x u)
    let mut ux = uc.clone();
    fourier::derivative_symbol(&mut ux, 1, len);
    let ux_vals = fourier::values(&ux);
    let aux: Vec<Complex64> = ux_vals
        .iter()
        .zip(medium.a.iter())
        .map(|(v, a)| v * a)
        .collect();
    let mut term_a = fourier::coeffs(&aux);
    fourier::truncate_above(&mut term_a, keep);
    fourier::derivative_symbol(&mut term_a, 1, len);

    // ∂x²(b ∂x² u)
    let mut uxx = uc.clone();
    fourier::derivative_symbol(&mut uxx, 2, len);
    let uxx_vals = fourier::values(&uxx);
    let buxx: Vec<Complex64> = uxx_vals
        .iter()
        .zip(medium.b.iter())
        .map(|(v, b)| v * b)
        .collect();
    let mut term_b = fourier::coeffs(&buxx);
    fourier::truncate_above(&mut term_b, keep);
    fourier::derivative_symbol(&mut term_b, 2, len);

    let mut dv = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        dv[i] = term_a[i] - term_b[i];
    }

    if !linear_only {
        // ∂x(c ∂x(u²)), dealiased
        let u_vals = fourier::values(&uc);
        let u2: Vec<Complex64> = u_vals.iter().map(|v| v * v).collect();
        let mut u2c = fourier::coeffs(&u2);
        fourier::truncate_above(&mut u2c, keep);
        fourier::derivative_symbol(&mut u2c, 1, len);
        let u2x_vals = fourier::values(&u2c);
        let cu2x: Vec<Complex64> = u2x_vals
            .iter()
            .zip(medium.c.iter())
            .map(|(v, c)| v * c)
            .collect();
        let mut term_c = fourier::coeffs(&cu2x);
        fourier::truncate_above(&mut term_c, keep);
        fourier::derivative_symbol(&mut term_c, 1, len);
        for i in 0..n {
            dv[i] += term_c[i];
        }
    }

    // divergence form: the zero mode is analytically zero
    dv[0] = Complex64::new(0.0, 0.0);
    let dv_field =
        GridField::from_coeffs_tol(grid, &dv, 1e-10).expect("rhs of a real state is real");
    (state.v.clone(), dv_field)
}

/// Bloch-space route for the right-hand side: the linear part is applied as
/// the Galerkin matrix -H(l) fiber by fiber, the nonlinear part through the
/// Bloch convolution of the dealiased square. Oracle for [`rhs`].
pub fn rhs_bloch_route(
    state: &SimState,
    coeffs: &PeriodicCoefficients,
    cutoff: usize,
) -> GridField {
    use crate::bloch;
    let grid = state.u.grid;
    assert!(grid.points_per_cell >= 2 * cutoff + 2, "cell grid must hold the Galerkin band");
    let ub = bloch::forward(&state.u);
    let mut out = bloch::BlochField::zeros(grid);
    let m = cutoff as i64;
    let p = grid.points_per_cell;

    // linear part: -L_l on each fiber
    for r in 0..grid.cells {
        let l = grid.bloch_number(r);
        let matrix = crate::cell::assemble_bloch_matrix(coeffs, l, cutoff);
        let mut cellv = nalgebra::DVector::<Complex64>::zeros(2 * cutoff + 1);
        for idx in 0..2 * cutoff + 1 {
            let q = idx as i64 - m;
            cellv[idx] = ub.entry(r, fourier::bin_of_signed(q, p));
        }
        let applied = &matrix.h * &cellv;
        for idx in 0..2 * cutoff + 1 {
            let q = idx as i64 - m;
            *out.entry_mut(r, fourier::bin_of_signed(q, p)) = -applied[idx];
        }
    }

    // nonlinear part: (∂x + il)(c (∂x + il) (u~ * u~)) via the product route
    let u2 = crate::spectral::dealiased_product(&state.u, &state.u);
    let u2b = bloch::forward(&u2);
    let cvals: Vec<f64> = (0..p)
        .map(|i| coeffs.c.eval(crate::grid::TAU * i as f64 / p as f64))
        .collect();
    for r in 0..grid.cells {
        let l = grid.bloch_number(r);
        // (∂x + il) in cell coefficients
        let mut cell: Vec<Complex64> = (0..p).map(|qb| u2b.entry(r, qb)).collect();
        for (qb, z) in cell.iter_mut().enumerate() {
            let q = fourier::signed_index(qb, p) as f64;
            *z *= Complex64::new(0.0, q + l);
        }
        let vals = fourier::values(&cell);
        let prod: Vec<Complex64> = vals.iter().zip(cvals.iter()).map(|(v, c)| v * c).collect();
        let mut cell2 = fourier::coeffs(&prod);
        for (qb, z) in cell2.iter_mut().enumerate() {
            let q = fourier::signed_index(qb, p) as f64;
            *z *= Complex64::new(0.0, q + l);
        }
        for (qb, z) in cell2.iter().enumerate() {
            *out.entry_mut(r, qb) += z;
        }
    }

    bloch::inverse(&out)
        .into_real(1e-9)
        .expect("bloch-route rhs of a real state is real")
}

fn rk4_step(state: &mut SimState, medium: &MediumOnGrid, dt: f64, linear_only: bool) {
    let grid = state.u.grid;
    let n = grid.n();
    let eval = |u: &GridField, v: &GridField| -> (GridField, GridField) {
        let s = SimState { t: 0.0, u: u.clone(), v: v.clone() };
        rhs(&s, medium, linear_only)
    };
    let (k1u, k1v) = eval(&state.u, &state.v);
    let mk = |base: &GridField, s: f64, k: &GridField| {
        let mut out = base.clone();
        out.axpy(s, k);
        out
    };
    let (k2u, k2v) = eval(&mk(&state.u, 0.5 * dt, &k1u), &mk(&state.v, 0.5 * dt, &k1v));
    let (k3u, k3v) = eval(&mk(&state.u, 0.5 * dt, &k2u), &mk(&state.v, 0.5 * dt, &k2v));
    let (k4u, k4v) = eval(&mk(&state.u, dt, &k3u), &mk(&state.v, dt, &k3v));
    for i in 0..n {
        state.u.values[i] +=
            dt / 6.0 * (k1u.values[i] + 2.0 * k2u.values[i] + 2.0 * k3u.values[i] + k4u.values[i]);
        state.v.values[i] +=
            dt / 6.0 * (k1v.values[i] + 2.0 * k2v.values[i] + 2.0 * k3v.values[i] + k4v.values[i]);
    }
}

/// Evolve to `t_end`, invoking the observer at every sample stride (and at
/// both endpoints). The observer sees the state at exact sample times.
pub fn evolve(
    initial: SimState,
    coeffs: &PeriodicCoefficients,
    t_end: f64,
    config: &StepperConfig,
    sample_times: &[f64],
    mut observer: impl FnMut(&SimState),
) -> Result<SimState> {
    let medium = MediumOnGrid::new(coeffs, initial.u.grid);
    let mut state = initial;
    let mut samples: Vec<f64> = sample_times
        .iter()
        .copied()
        .filter(|&t| t >= state.t - 1e-12 && t <= t_end + 1e-12)
        .collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    for &ts in &samples {
        while state.t < ts - 1e-12 {
            let dt = config.dt.min(ts - state.t);
            rk4_step(&mut state, &medium, dt, config.linear_only);
            state.t += dt;
            let sup = state.u.sup_norm();
            if !sup.is_finite() || sup > config.ceiling {
                return Err(Error::BlowUp { t: state.t, norm: sup, ceiling: config.ceiling });
            }
        }
        state.t = ts;
        observer(&state);
    }
    while state.t < t_end - 1e-12 {
        let dt = config.dt.min(t_end - state.t);
        rk4_step(&mut state, &medium, dt, config.linear_only);
        state.t += dt;
        let sup = state.u.sup_norm();
        if !sup.is_finite() || sup > config.ceiling {
            return Err(Error::BlowUp { t: state.t, norm: sup, ceiling: config.ceiling });
        }
    }
    Ok(state)
}

/// Discrete energy of the linearized flow: ∫ v² + a (∂x u)² + b (∂x² u)² dx.
/// Conserved by the linear semigroup (self-adjoint divergence form).
pub fn linear_energy(state: &SimState, medium: &MediumOnGrid) -> f64 {
    let grid = state.u.grid;
    let h = grid.spacing();
    let ux = crate::spectral::derivative(&state.u, 1);
    let uxx = crate::spectral::derivative(&state.u, 2);
    let mut acc = 0.0;
    for i in 0..grid.n() {
        acc += state.v.values[i] * state.v.values[i]
            + medium.a[i] * ux.values[i] * ux.values[i]
            + medium.b[i] * uxx.values[i] * uxx.values[i];
    }
    acc * h
}

/// Raw little-endian checkpoint of (u, v) plus a JSON sidecar.
pub fn save_checkpoint(state: &SimState, coeffs: &PeriodicCoefficients, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut raw = Vec::with_capacity(16 * state.u.grid.n());
    for v in state.u.values.iter().chain(state.v.values.iter()) {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, raw)?;
    let sidecar = serde_json::json!({
        "t": state.t,
        "cells": state.u.grid.cells,
        "points_per_cell": state.u.grid.points_per_cell,
        "coeff_hash": coeffs.content_hash(),
    });
    let mut f = std::fs::File::create(path.with_extension("json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<SimState> {
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let cells = sidecar["cells"].as_u64().unwrap() as usize;
    let ppc = sidecar["points_per_cell"].as_u64().unwrap() as usize;
    let t = sidecar["t"].as_f64().unwrap();
    let grid = SpectralGrid::new(cells, ppc);
    let raw = std::fs::read(path)?;
    let n = grid.n();
    if raw.len() != 16 * n {
        return Err(Error::Config(format!(
            "checkpoint holds {} bytes, expected {}",
            raw.len(),
            16 * n
        )));
    }
    let read = |i: usize| -> f64 {
        let mut b = [0u8; 8];
        b.copy_from_slice(&raw[8 * i..8 * i + 8]);
        f64::from_le_bytes(b)
    };
    let u = GridField::new(grid, (0..n).map(&read).collect());
    let v = GridField::new(grid, (n..2 * n).map(&read).collect());
    Ok(SimState { t, u, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral;

    #[test]
    fn stability_limit_reference_value() {
        // a = b = 1, 32 points per cell: dt = 2.8/sqrt(16^4 + 16^2)
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(4, 32);
        let got = stability_limit(&coeffs, grid);
        let expect = 2.8 / (16.0f64.powi(4) + 16.0f64.powi(2)).sqrt();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.0109).abs() < 1e-4);

        // doubling resolution quarters the limit asymptotically (k^4)
        let fine = stability_limit(&coeffs, SpectralGrid::new(4, 64));
        assert!((got / fine - 4.0).abs() < 0.05);

        // b four times larger halves it asymptotically
        let heavy = PeriodicCoefficients::new(
            crate::coeffs::CellFunction::constant(1.0),
            crate::coeffs::CellFunction::constant(4.0),
            crate::coeffs::CellFunction::constant(1.0),
        )
        .unwrap();
        let hb = stability_limit(&heavy, grid);
        assert!((got / hb - 2.0).abs() < 0.02);
    }

    #[test]
    fn rest_state_stays_at_rest_and_rhs_is_mean_free() {
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(8, 16);
        let medium = MediumOnGrid::new(&coeffs, grid);
        let state = SimState::rest(grid);
        let (du, dv) = rhs(&state, &medium, false);
        assert!(du.sup_norm() == 0.0 && dv.sup_norm() == 0.0);

        let mut s2 = SimState::rest(grid);
        s2.u = GridField::from_fn(grid, |x| 0.1 * (x / 8.0).sin() + 0.05 * x.cos());
        let (_, dv) = rhs(&s2, &medium, false);
        assert!(dv.mean().abs() < 1e-14, "dv mean {}", dv.mean());
    }

    #[test]
    fn constant_coefficient_linear_symbol() {
        // u = cos(kx), v = 0: dv = -(k² + k⁴) cos(kx) plus the nonlinear term
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(1, 64);
        let medium = MediumOnGrid::new(&coeffs, grid);
        let k = 3.0;
        let mut state = SimState::rest(grid);
        state.u = GridField::from_fn(grid, |x| (k * x).cos());
        let (_, dv) = rhs(&state, &medium, true);
        let expect = GridField::from_fn(grid, |x| -(k * k + k.powi(4)) * (k * x).cos());
        let err = dv
            .values
            .iter()
            .zip(expect.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "linear symbol error {err}");
    }

    #[test]
    fn physical_and_bloch_routes_agree() {
        let coeffs = PeriodicCoefficients::mixed();
        let grid = SpectralGrid::new(6, 64);
        let medium = MediumOnGrid::new(&coeffs, grid);
        // band-limited state within the Galerkin band
        let mut state = SimState::rest(grid);
        state.u = GridField::from_fn(grid, |x| {
            0.05 * (x / 6.0).sin() + 0.02 * ((2.0 * x / 6.0) + 0.7).cos() + 0.01 * (x + 1.0 / 3.0).cos()
        });
        let (_, dv) = rhs(&state, &medium, false);
        let dv_bloch = rhs_bloch_route(&state, &coeffs, 20);
        let scale = dv.sup_norm().max(1.0);
        let err = dv
            .values
            .iter()
            .zip(dv_bloch.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9 * scale, "route mismatch {err} (scale {scale})");
    }

    #[test]
    fn zero_data_evolves_to_zero_and_step_halving_is_fourth_order() {
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(4, 16);
        let config = StepperConfig::at_margin(&coeffs, grid, 0.5);
        let end = evolve(SimState::rest(grid), &coeffs, 1.0, &config, &[], |_| {}).unwrap();
        assert!(end.u.sup_norm() == 0.0);

        // small single-mode data: dt vs dt/2 difference shrinks ~16x
        let mut init = SimState::rest(grid);
        init.u = GridField::from_fn(grid, |x| 1e-2 * (x / 4.0).cos());
        let run = |dt: f64| {
            let cfg = StepperConfig { dt, ..config };
            evolve(init.clone(), &coeffs, 0.5, &cfg, &[], |_| {}).unwrap()
        };
        let full = run(config.dt);
        let half = run(config.dt / 2.0);
        let quarter = run(config.dt / 4.0);
        let d1: f64 = full
            .u
            .values
            .iter()
            .zip(half.u.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let d2: f64 = half
            .u
            .values
            .iter()
            .zip(quarter.u.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let order = (d1 / d2).log2();
        assert!(order > 3.5 && order < 4.8, "observed order {order}");
    }

    #[test]
    fn linear_runs_conserve_energy_and_mean() {
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(6, 16);
        let medium = MediumOnGrid::new(&coeffs, grid);
        let mut init = SimState::rest(grid);
        init.u = GridField::from_fn(grid, |x| 0.01 * (x / 6.0).sin() + 0.004 * (x / 3.0).cos());
        let mean0 = init.u.mean();
        let e0 = linear_energy(&init, &medium);
        let mut config = StepperConfig::at_margin(&coeffs, grid, 0.4);
        config.linear_only = true;
        let steps = 1000.0;
        let end = evolve(init, &coeffs, steps * config.dt, &config, &[], |_| {}).unwrap();
        let e1 = linear_energy(&end, &medium);
        assert!(
            (e1 - e0).abs() < 1e-8 * e0,
            "energy drift {} over {steps} steps",
            (e1 - e0) / e0
        );
        assert!((end.u.mean() - mean0).abs() < 1e-12, "mean drift");
    }

    #[test]
    fn spectral_convergence_in_space() {
        // smooth data on P and 2P points per cell: the coarse run must match
        // the fine run to spectral accuracy (waves resolved on both)
        let coeffs = PeriodicCoefficients::periodic();
        let t_end = 0.2;
        let run = |ppc: usize| {
            let grid = SpectralGrid::new(4, ppc);
            let mut init = SimState::rest(grid);
            init.u = GridField::from_fn(grid, |x| 0.05 * (x / 4.0).sin() + 0.02 * x.cos());
            let cfg = StepperConfig {
                dt: 1e-4,
                stability_margin: 0.0,
                ceiling: 10.0,
                linear_only: false,
            };
            evolve(init, &coeffs, t_end, &cfg, &[], |_| {}).unwrap()
        };
        let coarse = run(16);
        let fine = run(32);
        // compare on the coarse points (every second fine point)
        let mut err: f64 = 0.0;
        for i in 0..coarse.u.grid.n() {
            err = err.max((coarse.u.values[i] - fine.u.values[2 * i]).abs());
        }
        assert!(err < 1e-9, "spatial truncation error {err}");
    }

    #[test]
    fn blow_up_guard_triggers() {
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(2, 16);
        let mut init = SimState::rest(grid);
        init.u = GridField::from_fn(grid, |x| 0.5 * x.cos());
        let cfg = StepperConfig {
            dt: stability_limit(&coeffs, grid) * 0.5,
            stability_margin: 0.5,
            ceiling: 0.4,
            linear_only: false,
        };
        assert!(matches!(
            evolve(init, &coeffs, 10.0, &cfg, &[], |_| {}),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(3, 8);
        let mut state = SimState::rest(grid);
        state.t = 1.75;
        state.u = GridField::from_fn(grid, |x| (x / 3.0).sin());
        state.v = GridField::from_fn(grid, |x| 0.1 * (x / 3.0).cos());
        let dir = std::env::temp_dir().join("bb_checkpoint_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.bin");
        save_checkpoint(&state, &coeffs, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.t, state.t);
        assert_eq!(back.u.values, state.u.values);
        assert_eq!(back.v.values, state.v.values);
        let _ = spectral::l2_norm(&back.u);
    }
}
