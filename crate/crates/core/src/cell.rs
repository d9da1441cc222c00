//! The Bloch cell operator L_l on the 2π cell: Fourier–Galerkin assembly,
//! Hermitian eigensolves, zero-mean cell solves and the band projections.
//!
//! L_l(∂x) w = -(∂x+il)(a(x)(∂x+il)w) + (∂x+il)²(b(x)(∂x+il)²w)
//!
//! In the cell Fourier basis e^{ijx} the Galerkin matrix is
//! H[j',j] = (j'+l)(j+l) a_{j'-j} + (j'+l)²(j+l)² b_{j'-j},
//! Hermitian and positive semidefinite by construction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coeffs::PeriodicCoefficients;
use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::TAU;

/// Degeneracy tolerance for the first two bands inside a requested gap region.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Bloch operator matrix at a fixed Bloch number.
#[derive(Clone, Debug)]
pub struct BlochOperatorMatrix {
    pub l: f64,
    pub cutoff: usize,
    pub h: DMatrix<Complex64>,
}

/// Assemble the Fourier–Galerkin matrix of L_l with cell modes -M..M.
pub fn assemble_bloch_matrix(
    coeffs: &PeriodicCoefficients,
    l: f64,
    m: usize,
) -> BlochOperatorMatrix {
    let n = 2 * m + 1;
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for row in 0..n {
        let jp = row as i64 - m as i64;
        let kp = jp as f64 + l;
        for col in 0..n {
            let j = col as i64 - m as i64;
            let k = j as f64 + l;
            let av = coeffs.a.coeff(jp - j);
            let bv = coeffs.b.coeff(jp - j);
            h[(row, col)] = av * (kp * k) + bv * (kp * kp * k * k);
        }
    }
    BlochOperatorMatrix { l, cutoff: m, h }
}

/// Apply L_l pseudospectrally on a fine one-cell grid; quadrature oracle for
/// the Galerkin assembly. Input and output are cell coefficients -M..M.
pub fn apply_operator_quadrature(
    coeffs: &PeriodicCoefficients,
    l: f64,
    input: &[Complex64],
    fine: usize,
) -> Vec<Complex64> {
    let m = (input.len() - 1) / 2;
    assert!(fine >= 4 * (m + coeffs.coef_cutoff + 1));
    let mut c = vec![Complex64::new(0.0, 0.0); fine];
    for (idx, v) in input.iter().enumerate() {
        let j = idx as i64 - m as i64;
        c[fourier::bin_of_signed(j, fine)] = *v;
    }
    let dxil = |c: &[Complex64]| -> Vec<Complex64> {
        let mut out = c.to_vec();
        fourier::derivative_symbol(&mut out, 1, TAU);
        for (j, z) in out.iter_mut().enumerate() {
            *z += Complex64::new(0.0, l) * c[j];
        }
        out
    };
    let mult = |f: &crate::coeffs::CellFunction, c: &[Complex64]| -> Vec<Complex64> {
        let vals = fourier::values(c);
        let prod: Vec<Complex64> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| v * f.eval(TAU * i as f64 / fine as f64))
            .collect();
        fourier::coeffs(&prod)
    };
    // -(∂x+il)(a (∂x+il) u)
    let part_a = dxil(&mult(&coeffs.a, &dxil(&c)));
    // (∂x+il)² (b (∂x+il)² u)
    let part_b = dxil(&dxil(&mult(&coeffs.b, &dxil(&dxil(&c)))));
    (0..2 * m + 1)
        .map(|idx| {
            let j = idx as i64 - m as i64;
            let bin = fourier::bin_of_signed(j, fine);
            -part_a[bin] + part_b[bin]
        })
        .collect()
}

/// Eigendecomposition of a Hermitian matrix via the symmetric real embedding
/// [[Re, -Im], [Im, Re]]; returns ascending eigenvalues with orthonormal
/// complex eigenvectors.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> (Vec<f64>, Vec<DVector<Complex64>>) {
    let n = h.nrows();
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            big[(i, j)] = z.re;
            big[(i, j + n)] = -z.im;
            big[(i + n, j)] = z.im;
            big[(i + n, j + n)] = z.re;
        }
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(big);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    // each complex eigenvalue appears twice; take every other sorted entry
    let mut lambdas = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for pair in 0..n {
        let idx = order[2 * pair];
        lambdas.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        let mut w = DVector::<Complex64>::zeros(n);
        for i in 0..n {
            w[i] = Complex64::new(col[i], col[i + n]);
        }
        // orthogonalize against previous vectors (guards degenerate clusters)
        for prev in &vectors {
            let coef: Complex64 = prev.iter().zip(w.iter()).map(|(p, x)| p.conj() * x).sum();
            for i in 0..n {
                let d = coef * prev[i];
                w[i] -= d;
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w /= Complex64::new(norm, 0.0);
        vectors.push(w);
    }
    (lambdas, vectors)
}

/// Rayleigh-quotient inverse-iteration polish of one eigenpair.
pub fn polish_eigenpair(
    h: &DMatrix<Complex64>,
    lambda: f64,
    w: &DVector<Complex64>,
    iters: usize,
) -> (f64, DVector<Complex64>) {
    let n = h.nrows();
    let mut lam = lambda;
    let mut v = w.clone();
    for _ in 0..iters {
        let mut shifted = h.clone();
        for i in 0..n {
            shifted[(i, i)] -= Complex64::new(lam, 0.0);
        }
        let lu = nalgebra::linalg::LU::new(shifted);
        let Some(x) = lu.solve(&v) else { break };
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        v = x / Complex64::new(norm, 0.0);
        let hv = h * &v;
        let rho: Complex64 = v.iter().zip(hv.iter()).map(|(a, b)| a.conj() * b).sum();
        lam = rho.re;
    }
    (lam, v)
}

/// Ascending eigenpairs of the assembled operator; band 1 is polished.
pub fn band_eigenpairs(
    matrix: &BlochOperatorMatrix,
    n_max: usize,
) -> Vec<(f64, DVector<Complex64>)> {
    let (lambdas, vectors) = hermitian_eigen(&matrix.h);
    let mut out: Vec<(f64, DVector<Complex64>)> = lambdas
        .into_iter()
        .zip(vectors)
        .take(n_max)
        .collect();
    if let Some(first) = out.first_mut() {
        let (lam, v) = polish_eigenpair(&matrix.h, first.0, &first.1, 2);
        // keep the polish only when it stayed on the same branch
        let gap = out.get(1).map(|s| s.0 - out[0].0).unwrap_or(f64::INFINITY);
        if (lam - out[0].0).abs() < 0.5 * gap.max(1e-12) {
            out[0] = (lam, v);
        }
    }
    out
}

/// Fix the phase so the cell mean of w is real and positive.
pub fn normalize_phase(w: &mut DVector<Complex64>, m: usize) {
    let mean = w[m];
    if mean.norm() > 1e-14 {
        let phase = mean.conj() / Complex64::new(mean.norm(), 0.0);
        for z in w.iter_mut() {
            *z *= phase;
        }
    }
}

/// One sampled point of the dispersion relation.
#[derive(Clone, Debug)]
pub struct BandSample {
    pub l: f64,
    /// Ascending eigenvalues λ_1..λ_n at this Bloch number.
    pub lambdas: Vec<f64>,
    /// Phase-normalized first-band eigenfunction (cell coefficients -M..M).
    pub w1: DVector<Complex64>,
}

/// Sampled band structure with the measured spectral-gap half-width.
#[derive(Clone, Debug)]
pub struct BlochBand {
    pub cutoff: usize,
    pub samples: Vec<BandSample>,
    pub gap_margin: f64,
    pub gap_tol: f64,
}

impl BlochBand {
    pub fn sample_at(&self, l: f64) -> Option<&BandSample> {
        self.samples.iter().find(|s| (s.l - l).abs() < 1e-12)
    }

    /// First-band eigenvalue at a sampled Bloch number.
    pub fn lambda1(&self, l: f64) -> Option<f64> {
        self.sample_at(l).map(|s| s.lambdas[0])
    }

    pub fn csv(&self) -> String {
        let bands = self.samples.first().map(|s| s.lambdas.len()).unwrap_or(0);
        let mut out = String::from("l");
        for n in 1..=bands {
            out.push_str(&format!(",lambda{n}"));
        }
        out.push('\n');
        let mut rows: Vec<&BandSample> = self.samples.iter().collect();
        rows.sort_by(|a, b| a.l.partial_cmp(&b.l).unwrap());
        for s in rows {
            out.push_str(&format!("{:.17e}", s.l));
            for v in &s.lambdas {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Sample the first `n_bands` dispersion curves at the given Bloch numbers.
///
/// `expect_gap_within`: if set, a λ2-λ1 degeneracy below [`DEGENERACY_TOL`]
/// at |l| inside that radius raises [`Error::DegenerateBranch`].
pub fn dispersion_curve(
    coeffs: &PeriodicCoefficients,
    n_bands: usize,
    l_samples: &[f64],
    m: usize,
    gap_tol: f64,
    expect_gap_within: Option<f64>,
) -> Result<BlochBand> {
    let n_bands = n_bands.max(2);
    let mut samples: Vec<BandSample> = l_samples
        .par_iter()
        .map(|&l| {
            let matrix = assemble_bloch_matrix(coeffs, l, m);
            let pairs = band_eigenpairs(&matrix, n_bands);
            let mut w1 = pairs[0].1.clone();
            normalize_phase(&mut w1, m);
            BandSample { l, lambdas: pairs.iter().map(|p| p.0).collect(), w1 }
        })
        .collect();
    samples.sort_by(|a, b| a.l.partial_cmp(&b.l).unwrap());

    if let Some(radius) = expect_gap_within {
        for s in &samples {
            if s.l.abs() <= radius && s.lambdas[1] - s.lambdas[0] < DEGENERACY_TOL {
                return Err(Error::DegenerateBranch { l: s.l, gap: s.lambdas[1] - s.lambdas[0] });
            }
        }
    }

    // largest sampled half-width on which band 1 stays gap_tol-separated
    let mut by_abs: Vec<&BandSample> = samples.iter().collect();
    by_abs.sort_by(|a, b| a.l.abs().partial_cmp(&b.l.abs()).unwrap());
    let mut margin = 0.0_f64;
    for s in by_abs {
        if s.lambdas[1] - s.lambdas[0] > gap_tol {
            margin = margin.max(s.l.abs());
        } else {
            break;
        }
    }
    Ok(BlochBand { cutoff: m, samples, gap_margin: margin, gap_tol })
}

/// Solve L_0 u = rhs on the zero-mean subspace (cell coefficients -M..M).
pub fn cell_solve_zero_mean(
    coeffs: &PeriodicCoefficients,
    rhs: &[Complex64],
    m: usize,
) -> Result<Vec<Complex64>> {
    let n = 2 * m + 1;
    assert_eq!(rhs.len(), n);
    let norm = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mean = rhs[m].norm();
    if mean > 1e-10 * norm.max(1e-300) {
        return Err(Error::NonZeroMean { mean, norm });
    }
    let matrix = assemble_bloch_matrix(coeffs, 0.0, m);
    // the j = 0 row and column of H(0) vanish; solve on the complement
    let mut sub = DMatrix::<Complex64>::zeros(n - 1, n - 1);
    let keep: Vec<usize> = (0..n).filter(|&i| i != m).collect();
    for (ri, &i) in keep.iter().enumerate() {
        for (ci, &j) in keep.iter().enumerate() {
            sub[(ri, ci)] = matrix.h[(i, j)];
        }
    }
    let mut b = DVector::<Complex64>::zeros(n - 1);
    for (ri, &i) in keep.iter().enumerate() {
        b[ri] = rhs[i];
    }
    let lu = nalgebra::linalg::LU::new(sub);
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::Config("singular zero-mean cell solve".into()))?;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (ri, &i) in keep.iter().enumerate() {
        out[i] = x[ri];
    }
    Ok(out)
}

/// Factorized solver for L_l on the range of P_s.
///
/// Inside the gap region the first-band direction is deflated before the LU
/// solve and projected out of the result; beyond it L_l itself is inverted.
pub struct CellSolver {
    pub l: f64,
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    pub w1: Option<DVector<Complex64>>,
}

impl CellSolver {
    pub fn new(matrix: &BlochOperatorMatrix, w1: Option<DVector<Complex64>>) -> Self {
        let n = matrix.h.nrows();
        let mut h = matrix.h.clone();
        if let Some(w) = &w1 {
            let tau = (h.diagonal().iter().map(|z| z.re).sum::<f64>() / n as f64).max(1.0);
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += Complex64::new(tau, 0.0) * w[i] * w[j].conj();
                }
            }
        }
        let lu = nalgebra::linalg::LU::new(h);
        Self { l: matrix.l, lu, w1 }
    }

    fn project_off_band(&self, v: &mut DVector<Complex64>) {
        if let Some(w) = &self.w1 {
            let coef: Complex64 = w.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            for i in 0..v.len() {
                let d = coef * w[i];
                v[i] -= d;
            }
        }
    }

    /// Solve L_l x = P_s rhs with x in the range of P_s.
    pub fn solve_ps(&self, rhs: &DVector<Complex64>) -> DVector<Complex64> {
        let mut b = rhs.clone();
        self.project_off_band(&mut b);
        let mut x = self.lu.solve(&b).expect("deflated cell operator is invertible");
        self.project_off_band(&mut x);
        x
    }
}

/// Split a Bloch field into first-band coefficients (|l| <= delta) and the
/// P_s remainder. The band must be sampled at the grid Bloch numbers.
pub fn project_first_band(
    field: &crate::bloch::BlochField,
    band: &BlochBand,
    delta: f64,
) -> Result<(Vec<Complex64>, crate::bloch::BlochField)> {
    if delta > band.gap_margin + 1e-12 {
        return Err(Error::GapViolation { requested: delta, margin: band.gap_margin });
    }
    let grid = field.grid;
    let p = grid.points_per_cell;
    let m = band.cutoff;
    let mut coefficients = vec![Complex64::new(0.0, 0.0); grid.cells];
    let mut remainder = field.clone();
    for r in 0..grid.cells {
        let l = grid.bloch_number(r);
        if l.abs() > delta {
            continue;
        }
        let sample = band
            .sample_at(l)
            .ok_or_else(|| Error::Config(format!("band not sampled at l = {l}")))?;
        // cell inner product <w1, u~(l,.)> = sum_j conj(w1_j) u_j
        let mut coef = Complex64::new(0.0, 0.0);
        for idx in 0..2 * m + 1 {
            let j = idx as i64 - m as i64;
            let bin = fourier::bin_of_signed(j, p);
            coef += sample.w1[idx].conj() * field.entry(r, bin);
        }
        coefficients[r] = coef;
        for idx in 0..2 * m + 1 {
            let j = idx as i64 - m as i64;
            let bin = fourier::bin_of_signed(j, p);
            *remainder.entry_mut(r, bin) -= coef * sample.w1[idx];
        }
    }
    Ok((coefficients, remainder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_coefficients_matrix_is_diagonal_symbol() {
        let coeffs = PeriodicCoefficients::constant();
        let m = assemble_bloch_matrix(&coeffs, 0.3, 8);
        for row in 0..17 {
            for col in 0..17 {
                let j = col as f64 - 8.0 + 0.3;
                let expect = if row == col { j * j + j.powi(4) } else { 0.0 };
                let tol = 1e-13 * expect.abs().max(1.0);
                assert_abs_diff_eq!(m.h[(row, col)].re, expect, epsilon = tol);
                assert_abs_diff_eq!(m.h[(row, col)].im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_bloch_number_has_zero_row_and_column() {
        let coeffs = PeriodicCoefficients::periodic();
        let m = assemble_bloch_matrix(&coeffs, 0.0, 8);
        for i in 0..17 {
            assert_eq!(m.h[(i, 8)], Complex64::new(0.0, 0.0));
            assert_eq!(m.h[(8, i)], Complex64::new(0.0, 0.0));
        }
        let pairs = band_eigenpairs(&m, 2);
        assert!(pairs[0].0.abs() < 1e-12, "lambda1(0) = {}", pairs[0].0);
        // eigenfunction is the constant
        let w = &pairs[0].1;
        assert!((w[8].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn assembly_matches_quadrature_oracle() {
        let coeffs = PeriodicCoefficients::mixed();
        let m = 10usize;
        let l = 0.17;
        let matrix = assemble_bloch_matrix(&coeffs, l, m);
        let n = 2 * m + 1;
        for col in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[col] = Complex64::new(1.0, 0.0);
            let applied = apply_operator_quadrature(&coeffs, l, &e, 128);
            for row in 0..n {
                // Galerkin truncation only drops modes beyond the tested band
                let jrow = row as i64 - m as i64;
                let jcol = col as i64 - m as i64;
                if (jrow - jcol).unsigned_abs() as usize <= coeffs.coef_cutoff {
                    let diff = (matrix.h[(row, col)] - applied[row]).norm();
                    assert!(diff < 1e-10, "entry ({row},{col}) differs by {diff}");
                }
            }
        }
    }

    #[test]
    fn hermitian_and_positive_semidefinite() {
        for coeffs in [PeriodicCoefficients::periodic(), PeriodicCoefficients::mixed()] {
            for &l in &[0.0, 0.11, -0.37, 0.5] {
                let m = assemble_bloch_matrix(&coeffs, l, 12);
                let scale = m.h.diagonal().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
                for i in 0..m.h.nrows() {
                    for j in 0..m.h.ncols() {
                        let d = (m.h[(i, j)] - m.h[(j, i)].conj()).norm();
                        assert!(d <= 1e-14 * scale.max(1.0));
                    }
                }
                let (lambdas, _) = hermitian_eigen(&m.h);
                assert!(lambdas[0] >= -1e-10 * scale.max(1.0), "min {}", lambdas[0]);
            }
        }
    }

    #[test]
    fn constant_coefficient_eigenvalue_closed_form() {
        let coeffs = PeriodicCoefficients::constant();
        let m = assemble_bloch_matrix(&coeffs, 0.1, 16);
        let pairs = band_eigenpairs(&m, 1);
        assert_abs_diff_eq!(pairs[0].0, 0.1f64.powi(2) + 0.1f64.powi(4), epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_stable_under_cutoff_refinement() {
        let coeffs = PeriodicCoefficients::periodic();
        for &l in &[0.05, 0.2] {
            let a = band_eigenpairs(&assemble_bloch_matrix(&coeffs, l, 16), 1)[0].0;
            let b = band_eigenpairs(&assemble_bloch_matrix(&coeffs, l, 32), 1)[0].0;
            assert!((a - b).abs() < 1e-8, "l={l}: {a} vs {b}");
        }
    }

    #[test]
    fn eigen_residual_small() {
        let coeffs = PeriodicCoefficients::mixed();
        let matrix = assemble_bloch_matrix(&coeffs, 0.23, 16);
        let scale = matrix.h.diagonal().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        for (lam, w) in band_eigenpairs(&matrix, 4) {
            let r = &matrix.h * &w - &w * Complex64::new(lam, 0.0);
            let res = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(res <= 1e-9 * scale.max(1.0), "residual {res}");
        }
    }

    #[test]
    fn dispersion_curve_constant_medium_and_evenness() {
        let coeffs = PeriodicCoefficients::constant();
        let ls: Vec<f64> = (-24..=24).map(|i| i as f64 / 50.0).collect();
        let band = dispersion_curve(&coeffs, 2, &ls, 16, 1e-3, Some(0.3)).unwrap();
        for s in &band.samples {
            let expect = s.l * s.l + s.l.powi(4);
            assert!((s.lambdas[0] - expect).abs() < 1e-10, "l={}, err={}", s.l, s.lambdas[0] - expect);
        }
        assert!(band.gap_margin > 0.4);

        let periodic = PeriodicCoefficients::periodic();
        let band = dispersion_curve(&periodic, 2, &ls, 16, 1e-3, Some(0.3)).unwrap();
        for s in &band.samples {
            let mirror = band.sample_at(-s.l).unwrap();
            assert!((s.lambdas[0] - mirror.lambdas[0]).abs() < 1e-10);
        }
        assert!(band.gap_margin > 0.1, "gap margin {}", band.gap_margin);
    }

    #[test]
    fn eigenfunction_conjugation_under_reflection() {
        // w1(-l, x) = conj(w1(l, x)) pointwise after phase normalization
        let coeffs = PeriodicCoefficients::periodic();
        let m = 12usize;
        for &l in &[0.07, 0.19] {
            let wp = {
                let mut pairs = band_eigenpairs(&assemble_bloch_matrix(&coeffs, l, m), 1);
                normalize_phase(&mut pairs[0].1, m);
                pairs.remove(0).1
            };
            let wm = {
                let mut pairs = band_eigenpairs(&assemble_bloch_matrix(&coeffs, -l, m), 1);
                normalize_phase(&mut pairs[0].1, m);
                pairs.remove(0).1
            };
            // conj in coefficient space: conj(w)_j = conj(w_{-j})
            for idx in 0..2 * m + 1 {
                let flip = 2 * m - idx;
                let d = (wm[idx] - wp[flip].conj()).norm();
                assert!(d < 1e-9, "l={l} idx={idx} diff={d}");
            }
        }
    }

    #[test]
    fn degenerate_branch_detected_at_brillouin_edge() {
        // constant medium: bands 1 and 2 touch at l = 1/2
        let coeffs = PeriodicCoefficients::constant();
        let err = dispersion_curve(&coeffs, 2, &[0.0, 0.25, 0.5], 8, 1e-3, Some(0.5));
        assert!(matches!(err, Err(Error::DegenerateBranch { .. })));
    }

    #[test]
    fn cell_solve_constant_medium_closed_form() {
        // -u'' + u'''' = sin x  =>  u = sin(x)/2
        let coeffs = PeriodicCoefficients::constant();
        let m = 8usize;
        let mut rhs = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        rhs[m + 1] = Complex64::new(0.0, -0.5); // sin x = (e^{ix} - e^{-ix})/(2i)
        rhs[m - 1] = Complex64::new(0.0, 0.5);
        let u = cell_solve_zero_mean(&coeffs, &rhs, m).unwrap();
        for idx in 0..2 * m + 1 {
            let expect = rhs[idx] * 0.5;
            assert!((u[idx] - expect).norm() < 1e-12);
        }
        // zero rhs -> zero
        let z = cell_solve_zero_mean(&coeffs, &vec![Complex64::new(0.0, 0.0); 2 * m + 1], m).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cell_solve_rejects_nonzero_mean_and_preserves_parity() {
        let coeffs = PeriodicCoefficients::periodic();
        let m = 12usize;
        let mut rhs = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        rhs[m] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            cell_solve_zero_mean(&coeffs, &rhs, m),
            Err(Error::NonZeroMean { .. })
        ));

        // odd rhs (sin x): solution stays odd and real; even rhs: even and real
        let mut odd = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        odd[m + 1] = Complex64::new(0.0, -0.5);
        odd[m - 1] = Complex64::new(0.0, 0.5);
        let sol = cell_solve_zero_mean(&coeffs, &odd, m).unwrap();
        for idx in 0..2 * m + 1 {
            let flip = 2 * m - idx;
            assert!((sol[idx] + sol[flip]).norm() < 1e-11, "oddness broken");
            assert!((sol[idx] - sol[flip].conj()).norm() < 1e-11, "realness broken");
        }

        let mut even = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
        even[m + 1] = Complex64::new(0.5, 0.0);
        even[m - 1] = Complex64::new(0.5, 0.0);
        let sol = cell_solve_zero_mean(&coeffs, &even, m).unwrap();
        for idx in 0..2 * m + 1 {
            let flip = 2 * m - idx;
            assert!((sol[idx] - sol[flip]).norm() < 1e-11, "evenness broken");
            assert!((sol[idx] - sol[flip].conj()).norm() < 1e-11, "realness broken");
        }
    }

    #[test]
    fn cell_solver_inverts_on_ps_range() {
        let coeffs = PeriodicCoefficients::mixed();
        let m = 12usize;
        for &l in &[0.0, 0.06, 0.31] {
            let matrix = assemble_bloch_matrix(&coeffs, l, m);
            let mut pairs = band_eigenpairs(&matrix, 1);
            normalize_phase(&mut pairs[0].1, m);
            let w1 = pairs.remove(0).1;
            let solver = CellSolver::new(&matrix, Some(w1.clone()));
            // random rhs, projected
            let mut rhs = DVector::<Complex64>::zeros(2 * m + 1);
            for i in 0..2 * m + 1 {
                rhs[i] = Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
            }
            let x = solver.solve_ps(&rhs);
            // orthogonality to w1
            let ip: Complex64 = w1.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!(ip.norm() < 1e-10, "not orthogonal: {}", ip.norm());
            // L x recovers P_s rhs
            let lx = &matrix.h * &x;
            let mut ps_rhs = rhs.clone();
            let coef: Complex64 = w1.iter().zip(ps_rhs.iter()).map(|(a, b)| a.conj() * b).sum();
            for i in 0..ps_rhs.len() {
                let d = coef * w1[i];
                ps_rhs[i] -= d;
            }
            let err = (lx - ps_rhs).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-9, "l={l} residual {err}");
        }
    }
}
