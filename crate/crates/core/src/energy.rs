//! Error-energy meter: the positive operator B = (a + 2cΨ) - ∂x(b ∂x·)
//! frozen at a snapshot, its square root 𝒜, the quadratic error energy
//!
//!   E(t) = ½( ||∂tR||² + ||𝒜⁻¹∂x⁻¹∂tR||² + ||R||² + ||𝒜∂xR||² ),
//!
//! the homogeneous-case energy with the cubic term, the Hamiltonian
//! H = ½∫ (∂tR)² + (𝒜∂xR)² and the Gronwall/drift audit. Here Ψ denotes the
//! already-scaled approximant (u ≈ Ψ), so B matches (a + 2c ε^α Ψ_paper).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeffs::PeriodicCoefficients;
use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{GridField, SpectralGrid};

/// Scaled error pair R = ε^{-(3+2α)/2}(u - Ψ) and its time derivative.
#[derive(Clone, Debug)]
pub struct ErrorState {
    pub r: GridField,
    pub rt: GridField,
}

/// Dense symmetric discretization of B with its eigendecomposition.
pub struct EnergyOperator {
    pub grid: SpectralGrid,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    sqrt_l: DVector<f64>,
    pub min_eig: f64,
}

/// Spectral differentiation matrix on an even periodic grid (antisymmetric).
fn differentiation_matrix(grid: SpectralGrid) -> DMatrix<f64> {
    let n = grid.n();
    let scale = 2.0 * std::f64::consts::PI / grid.len();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = i as i64 - j as i64;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let arg = std::f64::consts::PI * k as f64 / n as f64;
                d[(i, j)] = scale * 0.5 * sign / arg.tan();
            }
        }
    }
    d
}

impl EnergyOperator {
    /// Assemble B = diag(a + 2cΨ) + Dᵀ diag(b) D and take its square root by
    /// symmetric eigendecomposition. Fails when a + 2cΨ loses positivity or
    /// when B itself is not positive definite.
    pub fn build(
        coeffs: &PeriodicCoefficients,
        psi_scaled: &GridField,
    ) -> Result<Self> {
        let grid = psi_scaled.grid;
        let n = grid.n();
        let a_vals = coeffs.values_on(&coeffs.a, grid);
        let b_vals = coeffs.values_on(&coeffs.b, grid);
        let c_vals = coeffs.values_on(&coeffs.c, grid);
        let m_vals: Vec<f64> = (0..n)
            .map(|i| a_vals[i] + 2.0 * c_vals[i] * psi_scaled.values[i])
            .collect();
        let m_min = m_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if m_min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eig: m_min });
        }

        let d = differentiation_matrix(grid);
        let mut b = DMatrix::<f64>::zeros(n, n);
        // Dᵀ diag(b) D
        for k in 0..n {
            let bk = b_vals[k];
            for i in 0..n {
                let dki = d[(k, i)];
                if dki == 0.0 {
                    continue;
                }
                for j in 0..n {
                    b[(i, j)] += dki * bk * d[(k, j)];
                }
            }
        }
        for i in 0..n {
            b[(i, i)] += m_vals[i];
        }
        // symmetrize against roundoff
        let b = (&b + &b.transpose()) * 0.5;

        let eig = nalgebra::linalg::SymmetricEigen::new(b.clone());
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eig });
        }
        let sqrt_l = eig.eigenvalues.map(|l| l.sqrt());
        Ok(Self { grid, b, q: eig.eigenvectors, sqrt_l, min_eig })
    }

    fn in_basis(&self, f: impl Fn(f64) -> f64, v: &GridField) -> GridField {
        let x = DVector::<f64>::from_vec(v.values.clone());
        let y = self.q.transpose() * x;
        let y = DVector::<f64>::from_iterator(
            y.len(),
            y.iter().zip(self.sqrt_l.iter()).map(|(yi, li)| yi * f(*li)),
        );
        let out = &self.q * y;
        GridField::new(self.grid, out.iter().cloned().collect())
    }

    /// 𝒜 v = B^{1/2} v.
    pub fn apply_sqrt(&self, v: &GridField) -> GridField {
        self.in_basis(|s| s, v)
    }

    /// 𝒜⁻¹ v.
    pub fn apply_inv_sqrt(&self, v: &GridField) -> GridField {
        self.in_basis(|s| 1.0 / s, v)
    }

    /// B v (for the 𝒜² = B self-consistency check).
    pub fn apply_b(&self, v: &GridField) -> GridField {
        let x = DVector::<f64>::from_vec(v.values.clone());
        let out = &self.b * x;
        GridField::new(self.grid, out.iter().cloned().collect())
    }
}

fn l2_quadrature(f: &GridField) -> f64 {
    let h = f.grid.spacing();
    (f.values.iter().map(|v| v * v).sum::<f64>() * h).sqrt()
}

fn check_mean_free(f: &GridField) -> Result<()> {
    let norm = l2_quadrature(f);
    let mean = f.mean().abs() * f.grid.len().sqrt();
    if mean > 1e-8 * norm.max(1e-300) && mean > 1e-14 {
        return Err(Error::NonZeroMean { mean, norm });
    }
    Ok(())
}

fn antiderivative_lossy(f: &GridField) -> GridField {
    let mut c = f.coeffs();
    fourier::antiderivative_symbol(&mut c, f.grid.len());
    GridField::from_coeffs_tol(f.grid, &c, 1e-9).expect("antiderivative of real field")
}

/// The four-term error energy E(t).
pub fn error_energy(state: &ErrorState, op: &EnergyOperator) -> Result<f64> {
    check_mean_free(&state.r)?;
    check_mean_free(&state.rt)?;
    let mut r = state.r.clone();
    let m = r.mean();
    for v in &mut r.values {
        *v -= m;
    }
    let mut rt = state.rt.clone();
    let m = rt.mean();
    for v in &mut rt.values {
        *v -= m;
    }

    let rx = crate::spectral::derivative(&r, 1);
    let a_rx = op.apply_sqrt(&rx);
    let ixrt = antiderivative_lossy(&rt);
    let ai_ixrt = op.apply_inv_sqrt(&ixrt);
    Ok(0.5
        * (l2_quadrature(&rt).powi(2)
            + l2_quadrature(&ai_ixrt).powi(2)
            + l2_quadrature(&r).powi(2)
            + l2_quadrature(&a_rx).powi(2)))
}

/// Hamiltonian H = ½ ∫ (∂tR)² + (𝒜 ∂xR)² dx.
pub fn hamiltonian(state: &ErrorState, op: &EnergyOperator) -> f64 {
    let rx = crate::spectral::derivative(&state.r, 1);
    let a_rx = op.apply_sqrt(&rx);
    0.5 * (l2_quadrature(&state.rt).powi(2) + l2_quadrature(&a_rx).powi(2))
}

/// Homogeneous-case energy
/// ∫ (∂t∂x⁻¹R)² + R² + (∂xR)² + 2Ψ R² + (2/3) ε^{(3+2α)/2} R³ dx
/// with Ψ the scaled approximant.
pub fn homogeneous_energy(
    state: &ErrorState,
    psi_scaled: &GridField,
    epsilon: f64,
    alpha: f64,
) -> Result<f64> {
    check_mean_free(&state.r)?;
    check_mean_free(&state.rt)?;
    let grid = state.r.grid;
    let h = grid.spacing();
    let ixrt = antiderivative_lossy(&state.rt);
    let rx = crate::spectral::derivative(&state.r, 1);
    let cubic_scale = 2.0 / 3.0 * epsilon.powf((3.0 + 2.0 * alpha) / 2.0);
    let mut acc = 0.0;
    for i in 0..grid.n() {
        let r = state.r.values[i];
        acc += ixrt.values[i] * ixrt.values[i]
            + r * r
            + rx.values[i] * rx.values[i]
            + 2.0 * psi_scaled.values[i] * r * r
            + cubic_scale * r * r * r;
    }
    Ok(acc * h)
}

/// One sampled row of the energy trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub e: f64,
    pub h: f64,
}

/// Gronwall-style audit of an energy trace over [0, T0/ε^{1+α}].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GronwallReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub sup_e: f64,
    /// Fitted growth rate γ in E(t) <= E(0) + γ ε^{1+α} t (1 + sup E).
    pub gamma: f64,
    /// Normalized Hamiltonian drift max |H - H(0)| / (t (1 + sup E)).
    pub drift: f64,
    pub finite: bool,
}

pub fn gronwall_audit(rows: &[EnergyRow], epsilon: f64, alpha: f64) -> GronwallReport {
    let finite = rows.iter().all(|r| r.e.is_finite() && r.h.is_finite());
    let sup_e = rows.iter().map(|r| r.e).fold(0.0, f64::max);
    let e0 = rows.first().map(|r| r.e).unwrap_or(0.0);
    let h0 = rows.first().map(|r| r.h).unwrap_or(0.0);
    let eps_rate = epsilon.powf(1.0 + alpha);
    let mut gamma: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for r in rows.iter().skip(1) {
        if r.t <= 0.0 {
            continue;
        }
        gamma = gamma.max((r.e - e0) / (eps_rate * r.t * (1.0 + sup_e)));
        drift = drift.max((r.h - h0).abs() / (r.t * (1.0 + sup_e)));
    }
    GronwallReport { epsilon, alpha, sup_e, gamma: gamma.max(0.0), drift, finite }
}

/// Restrict a field to the coarser energy grid by spectral truncation.
pub fn restrict_to(field: &GridField, target: SpectralGrid) -> GridField {
    assert_eq!(field.grid.cells, target.cells);
    let c = field.coeffs();
    let n_src = field.grid.n();
    let n_dst = target.n();
    let mut out = vec![num_complex::Complex64::new(0.0, 0.0); n_dst];
    let keep = (n_dst as i64) / 2 - 1;
    for j in 0..n_src {
        let s = fourier::signed_index(j, n_src);
        if s.abs() <= keep {
            out[fourier::bin_of_signed(s, n_dst)] = c[j];
        }
    }
    GridField::from_coeffs_tol(target, &out, 1e-10).expect("restriction of a real field")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mean_free(grid: SpectralGrid, kmax: i64, rng: &mut ChaCha8Rng) -> GridField {
        let n = grid.n();
        let mut c = vec![num_complex::Complex64::new(0.0, 0.0); n];
        for s in 1..=kmax {
            let z = num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            c[fourier::bin_of_signed(s, n)] = z;
            c[fourier::bin_of_signed(-s, n)] = z.conj();
        }
        GridField::from_coeffs(grid, &c).unwrap()
    }

    #[test]
    fn constant_medium_symbol_and_energy_value() {
        // Ψ = 0, a = b = 1: B has symbol 1 + k², 𝒜 symbol sqrt(1 + k²);
        // R = cos x, Rt = 0 on one cell: E = ½(π + 2π) = 1.5π
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(1, 16);
        let op = EnergyOperator::build(&coeffs, &GridField::zeros(grid)).unwrap();
        let r = GridField::from_fn(grid, |x| x.cos());
        let state = ErrorState { r, rt: GridField::zeros(grid) };
        let e = error_energy(&state, &op).unwrap();
        assert!((e - 1.5 * std::f64::consts::PI).abs() < 1e-10, "E = {e}");

        // symbol check: 𝒜 cos(kx) = sqrt(1+k²) cos(kx)
        let f = GridField::from_fn(grid, |x| (3.0 * x).cos());
        let af = op.apply_sqrt(&f);
        let want = (1.0f64 + 9.0).sqrt();
        for (a, b) in af.values.iter().zip(f.values.iter()) {
            assert!((a - want * b).abs() < 1e-9);
        }
    }

    #[test]
    fn sqrt_squared_recovers_b_on_random_vectors() {
        let coeffs = PeriodicCoefficients::mixed();
        let grid = SpectralGrid::new(8, 4);
        let psi = GridField::from_fn(grid, |x| 0.05 * (x / 8.0).sin());
        let op = EnergyOperator::build(&coeffs, &psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let v = random_mean_free(grid, (grid.n() as i64) / 2 - 1, &mut rng);
            let a2 = op.apply_sqrt(&op.apply_sqrt(&v));
            let bv = op.apply_b(&v);
            let scale = l2_quadrature(&bv).max(1.0);
            let mut err: f64 = 0.0;
            for (x, y) in a2.values.iter().zip(bv.values.iter()) {
                err = err.max((x - y).abs());
            }
            assert!(err < 1e-9 * scale, "A² vs B error {err}");

            // inverse consistency
            let id = op.apply_inv_sqrt(&op.apply_sqrt(&v));
            let mut err: f64 = 0.0;
            for (x, y) in id.values.iter().zip(v.values.iter()) {
                err = err.max((x - y).abs());
            }
            assert!(err < 1e-9, "A⁻¹A error {err}");
        }
    }

    #[test]
    fn positivity_failure_detected() {
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(4, 8);
        // a + 2cΨ = 1 + 2Ψ < 0 somewhere
        let psi = GridField::from_fn(grid, |x| -0.6 + 0.01 * x.sin());
        assert!(matches!(
            EnergyOperator::build(&coeffs, &psi),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn energy_zero_iff_zero_and_positive() {
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(6, 4);
        let op = EnergyOperator::build(&coeffs, &GridField::zeros(grid)).unwrap();
        let zero = ErrorState { r: GridField::zeros(grid), rt: GridField::zeros(grid) };
        assert_eq!(error_energy(&zero, &op).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let state = ErrorState {
                r: random_mean_free(grid, 8, &mut rng),
                rt: random_mean_free(grid, 8, &mut rng),
            };
            let e = error_energy(&state, &op).unwrap();
            assert!(e > 0.0);
        }
    }

    #[test]
    fn equivalence_constants_bracket_h1() {
        // c1 ||R||_{H1}² <= 2E <= c2 (||R||_{H1}² + ||Rt||-part): report the
        // Rayleigh quotients over random draws and require stability
        let coeffs = PeriodicCoefficients::periodic();
        let grid = SpectralGrid::new(6, 4);
        let op = EnergyOperator::build(&coeffs, &GridField::zeros(grid)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut qmin = f64::INFINITY;
        let mut qmax = 0.0f64;
        for _ in 0..100 {
            let r = random_mean_free(grid, 8, &mut rng);
            let state = ErrorState { r: r.clone(), rt: GridField::zeros(grid) };
            let e = error_energy(&state, &op).unwrap();
            let h1 = crate::spectral::sobolev_norm(&r, 1.0).powi(2);
            let q = 2.0 * e / h1;
            qmin = qmin.min(q);
            qmax = qmax.max(q);
        }
        assert!(qmin > 0.2 && qmax < 5.0, "equivalence constants ({qmin}, {qmax})");
    }

    #[test]
    fn homogeneous_energy_terms() {
        let coeffs = PeriodicCoefficients::constant();
        let grid = SpectralGrid::new(4, 8);
        let _ = &coeffs;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = random_mean_free(grid, 6, &mut rng);
        let rt = random_mean_free(grid, 6, &mut rng);
        let state = ErrorState { r: r.clone(), rt: rt.clone() };
        // ε-terms off (Ψ = 0, ε = 0): reduces to ||∂t∂x⁻¹R||² + ||R||²_{H1}
        let e = homogeneous_energy(&state, &GridField::zeros(grid), 0.0, 2.0).unwrap();
        let ix = antiderivative_lossy(&rt);
        let expect = l2_quadrature(&ix).powi(2)
            + crate::spectral::sobolev_norm(&r, 1.0).powi(2);
        assert!((e - expect).abs() < 1e-9 * expect, "e = {e}, expect = {expect}");

        // cubic-term smallness: |E(ε) - E(0)| <= ε^{(3+2α)/2}·C·||R||³-ish
        let alpha = 2.0;
        let eps = 0.3;
        let e_eps = homogeneous_energy(&state, &GridField::zeros(grid), eps, alpha).unwrap();
        let bound = eps.powf((3.0 + 2.0 * alpha) / 2.0)
            * crate::spectral::sobolev_norm(&r, 1.0).powi(3)
            * 2.0;
        assert!((e_eps - e).abs() <= bound, "cubic term too large");
    }

    #[test]
    fn gronwall_audit_shapes() {
        let rows: Vec<EnergyRow> = (0..20)
            .map(|i| {
                let t = i as f64;
                EnergyRow { t, e: 0.1 * t / 20.0, h: 1.0 + 1e-3 * t }
            })
            .collect();
        let rep = gronwall_audit(&rows, 0.2, 2.0);
        assert!(rep.finite);
        assert!(rep.sup_e > 0.0 && rep.gamma > 0.0 && rep.drift > 0.0);
    }

    #[test]
    fn restriction_keeps_low_modes() {
        let fine = SpectralGrid::new(8, 16);
        let coarse = SpectralGrid::new(8, 2);
        let f = GridField::from_fn(fine, |x| (x / 8.0).sin() + 0.3 * (x / 4.0).cos());
        let r = restrict_to(&f, coarse);
        let want = GridField::from_fn(coarse, |x| (x / 8.0).sin() + 0.3 * (x / 4.0).cos());
        for (a, b) in r.values.iter().zip(want.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
