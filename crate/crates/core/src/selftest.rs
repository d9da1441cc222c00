//! Property self-tests over seeded random fields: the Bloch-transform
//! identities and the cross-implementation oracle equivalences. Shared by the
//! CLI `bloch-selftest` subcommand and the acceptance suite.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bloch;
use crate::coeffs::PeriodicCoefficients;
use crate::fourier;
use crate::grid::{ComplexGridField, GridField, SpectralGrid};
use crate::report::CheckResult;
use crate::spectral;

fn random_complex_field(grid: SpectralGrid, kmax: i64, rng: &mut ChaCha8Rng) -> ComplexGridField {
    let n = grid.n();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for s in -kmax..=kmax {
        c[fourier::bin_of_signed(s, n)] =
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    ComplexGridField::from_coeffs(grid, &c)
}

pub fn random_real_field(
    grid: SpectralGrid,
    kmax: i64,
    zero_mean: bool,
    rng: &mut ChaCha8Rng,
) -> GridField {
    let n = grid.n();
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for s in 1..=kmax.min(n as i64 / 2 - 1) {
        let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        c[fourier::bin_of_signed(s, n)] = z;
        c[fourier::bin_of_signed(-s, n)] = z.conj();
    }
    if !zero_mean {
        c[0] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
    }
    GridField::from_coeffs(grid, &c).unwrap()
}

/// Bloch-transform identities on `draws` seeded random fields:
/// round trip, Parseval isometry, multiplication by a periodic factor, and
/// the convolution-vs-product identity. All must hold to 1e-10.
pub fn bloch_selftest(draws: usize, seed: u64) -> Vec<CheckResult> {
    let grid = SpectralGrid::new(8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_round: f64 = 0.0;
    let mut worst_iso: f64 = 0.0;
    let mut worst_mult: f64 = 0.0;
    let mut worst_conv: f64 = 0.0;

    for _ in 0..draws {
        let f = random_complex_field(grid, grid.n() as i64 / 2 - 1, &mut rng);
        let b = bloch::forward_complex(&f);
        let back = bloch::inverse(&b);
        let round = f
            .values
            .iter()
            .zip(back.values.iter())
            .map(|(a, c)| (a - c).norm())
            .fold(0.0, f64::max);
        worst_round = worst_round.max(round);

        let phys = fourier::l2_norm(&f.coeffs(), grid.len());
        let iso = (phys - b.norm_sqr().sqrt()).abs() / phys.max(1.0);
        worst_iso = worst_iso.max(iso);

        // multiplication identity with a periodic factor
        let chi = |x: f64| 1.0 + 0.4 * x.cos() - 0.2 * (2.0 * x).sin();
        let chif = ComplexGridField::new(
            grid,
            f.values
                .iter()
                .enumerate()
                .map(|(i, v)| v * chi(grid.point(i)))
                .collect(),
        );
        let lhs = bloch::forward_complex(&chif);
        let rhs = bloch::forward_complex(&f);
        let mut mult_err: f64 = 0.0;
        for r in 0..grid.cells {
            let lv = fourier::values(lhs.cell(r));
            let rv = fourier::values(rhs.cell(r));
            for i in 0..grid.points_per_cell {
                let x = crate::grid::TAU * i as f64 / grid.points_per_cell as f64;
                mult_err = mult_err.max((lv[i] - rv[i] * chi(x)).norm());
            }
        }
        worst_mult = worst_mult.max(mult_err);

        // convolution identity against the physical product route
        let g = random_complex_field(grid, 9, &mut rng);
        let f9 = random_complex_field(grid, 9, &mut rng);
        let direct = bloch::convolve(&bloch::forward_complex(&f9), &bloch::forward_complex(&g));
        let product =
            bloch::forward_complex(&spectral::dealiased_product_complex(&f9, &g));
        let conv_err = direct
            .data
            .iter()
            .zip(product.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst_conv = worst_conv.max(conv_err);
    }

    vec![
        CheckResult::at_most("bloch_roundtrip", worst_round, 1e-10),
        CheckResult::at_most("bloch_isometry", worst_iso, 1e-10),
        CheckResult::at_most("bloch_multiplication", worst_mult, 1e-10),
        CheckResult::at_most("bloch_convolution", worst_conv, 1e-10),
    ]
}

/// Cross-implementation oracle equivalences:
/// physical vs Bloch-route right-hand side, the corrector residual
/// L0 g1 = a', the energy-operator square root, and Burgers characteristics.
pub fn oracle_selftest(seed: u64) -> Vec<CheckResult> {
    use crate::effective::{amplitude_coefficients, AmplitudeKind, EffectiveModel};
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // rhs: physical route vs Bloch-Galerkin route
    {
        let coeffs = PeriodicCoefficients::mixed();
        let grid = SpectralGrid::new(6, 64);
        let medium = crate::sim::MediumOnGrid::new(&coeffs, grid);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let mut state = crate::sim::SimState::rest(grid);
            state.u = random_real_field(grid, 12, false, &mut rng);
            state.u.scale(0.05);
            let (_, dv) = crate::sim::rhs(&state, &medium, false);
            let dv_bloch = crate::sim::rhs_bloch_route(&state, &coeffs, 20);
            let scale = dv.sup_norm().max(1.0);
            let err = dv
                .values
                .iter()
                .zip(dv_bloch.values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / scale;
            worst = worst.max(err);
        }
        out.push(CheckResult::at_most("rhs_physical_vs_bloch", worst, 1e-9));
    }

    // corrector residual ||L0 g1 - a'|| over the presets
    {
        let mut worst: f64 = 0.0;
        for preset in ["periodic", "mixed"] {
            let coeffs = PeriodicCoefficients::preset(preset).unwrap();
            let m = 16;
            let g1 = crate::effective::compute_g1(&coeffs, m).unwrap();
            let g1_vec: Vec<Complex64> = (0..2 * m + 1)
                .map(|i| Complex64::new(g1.re[i], g1.im[i]))
                .collect();
            let applied = crate::cell::apply_operator_quadrature(&coeffs, 0.0, &g1_vec, 256);
            for idx in 0..2 * m + 1 {
                let p = idx as i64 - m as i64;
                let rhs = Complex64::new(0.0, p as f64) * coeffs.a.coeff(p);
                worst = worst.max((applied[idx] - rhs).norm());
            }
        }
        out.push(CheckResult::at_most("g1_residual", worst, 1e-10));
    }

    // energy operator: A² = B on random mean-free vectors
    {
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(8, 4);
        let psi = GridField::from_fn(grid, |x| 0.03 * (x / 8.0).sin());
        let op = crate::energy::EnergyOperator::build(&coeffs, &psi).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let v = random_real_field(grid, grid.n() as i64 / 2 - 1, true, &mut rng);
            let a2 = op.apply_sqrt(&op.apply_sqrt(&v));
            let bv = op.apply_b(&v);
            let scale = bv.sup_norm().max(1.0);
            let err = a2
                .values
                .iter()
                .zip(bv.values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / scale;
            worst = worst.max(err);
        }
        out.push(CheckResult::at_most("sqrt_squared_is_b", worst, 1e-9));
    }

    // Burgers solver vs method of characteristics
    {
        let coeffs = PeriodicCoefficients::constant();
        let model = EffectiveModel::compute(&coeffs, 16, 1e-3).unwrap();
        let eq = crate::amplitude::AmplitudeEquation::new(
            amplitude_coefficients(&model, AmplitudeKind::Burgers),
            1.0,
        );
        let grid = crate::slow::SlowGrid::new(512, 60.0);
        let prof = crate::slow::gaussian_profile(1.0, 4.0);
        let prof_dx = |x: f64| -2.0 * x / 16.0 * crate::slow::gaussian_profile(1.0, 4.0)(x);
        let a0 = grid.coeffs_of(&prof);
        let ts = crate::amplitude::burgers_shock_time(&grid, &eq, &a0);
        let t_end = 0.45 * ts;
        let mut s = crate::amplitude::AmplitudeSolver::new(
            grid,
            eq,
            a0,
            1e-3,
            crate::amplitude::AmplitudeGuards::default(),
        )
        .unwrap();
        s.advance_to(t_end).unwrap();
        let got = grid.values(s.state.a_coeffs());
        let mut worst: f64 = 0.0;
        for i in 0..grid.n {
            let x = grid.point(i) - 0.5 * grid.len;
            let want = crate::amplitude::burgers_characteristics(&eq, &prof, &prof_dx, x, t_end);
            worst = worst.max((got[i] - want).abs());
        }
        out.push(CheckResult::at_most("burgers_vs_characteristics", worst, 1e-6));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bloch_selftest_passes_100_draws() {
        for check in bloch_selftest(100, 7) {
            assert!(check.passed, "{}", check.line());
        }
    }

    #[test]
    fn oracle_selftest_passes() {
        for check in oracle_selftest(7) {
            assert!(check.passed, "{}", check.line());
        }
    }
}
