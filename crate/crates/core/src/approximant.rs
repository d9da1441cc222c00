//! Physical-space approximants synthesized from amplitude trajectories.
//!
//! The band part is u~1(l) w~1(l,x) with u~1 carried by the amplitude
//! equation through the phase E = e^{-i s l c t}; the improved level adds the
//! off-band correction v~(l,x) obtained by slaving the cell problem
//!
//!   L_l v~ = P_s N(u~1 w~1 + v~) + c² l² v~        (|l| <= delta0/2)
//!
//! to the amplitude (fixed-point iteration on the range of P_s; the c²l²
//! term comes from the phase second derivative). Burgers additionally carries
//! the dynamic band corrector W(l,T) that cancels the next P_c layer. All
//! time derivatives (up to ∂t²) are exact jets obtained by differentiating
//! the construction through the amplitude equation, never finite differences.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplitude::{
    AmplitudeEquation, AmplitudeGuards, AmplitudeJets, AmplitudeSolver, burgers_shock_time,
};
use crate::cell::{assemble_bloch_matrix, band_eigenpairs, normalize_phase, CellSolver};
use crate::coeffs::PeriodicCoefficients;
use crate::effective::{AmplitudeKind, EffectiveModel};
use crate::error::{Error, Result};
use crate::fourier;
use crate::grid::{GridField, SpectralGrid};
use crate::slow::SlowGrid;

/// Approximation order of the ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Leading,
    Improved,
}

/// Per-Bloch-number band data and deflated solvers on the P_c range.
pub struct BlochData {
    pub cells: usize,
    pub cutoff: usize,
    pub delta0: f64,
    /// Radius of the P_c range (delta0/2).
    pub pc_radius: f64,
    entries: Vec<Option<BlochEntry>>,
    /// Bloch bins inside the P_c range (correction support).
    pub support: Vec<usize>,
}

pub struct BlochEntry {
    pub l: f64,
    pub lambda1: f64,
    pub gap: f64,
    pub w1: DVector<Complex64>,
    solver: CellSolver,
}

impl BlochData {
    /// Eigen-solve the cell operator on every grid Bloch number inside the
    /// P_c range; negative l reuses the conjugate-reflected eigenfunction.
    pub fn build(
        coeffs: &PeriodicCoefficients,
        cells: usize,
        cutoff: usize,
        delta0: f64,
    ) -> Result<Self> {
        let pc_radius = delta0 / 2.0 + 1e-12;
        let m = cutoff;
        let solved: Vec<Option<(f64, f64, f64, DVector<Complex64>)>> = (0..cells)
            .into_par_iter()
            .map(|r| {
                let l = fourier::signed_index(r, cells) as f64 / cells as f64;
                if l < 0.0 || l > pc_radius {
                    return None;
                }
                let matrix = assemble_bloch_matrix(coeffs, l, m);
                let mut pairs = band_eigenpairs(&matrix, 2);
                normalize_phase(&mut pairs[0].1, m);
                let gap = pairs[1].0 - pairs[0].0;
                Some((l, pairs[0].0, gap, pairs.swap_remove(0).1))
            })
            .collect();

        let mut entries: Vec<Option<BlochEntry>> = (0..cells).map(|_| None).collect();
        let mut support = Vec::new();
        for r in 0..cells {
            let l = fourier::signed_index(r, cells) as f64 / cells as f64;
            if l.abs() > pc_radius {
                continue;
            }
            let (lambda1, gap, w1) = if l >= 0.0 {
                let (_, lam, gap, w) = solved[r].clone().expect("solved nonnegative bin");
                (lam, gap, w)
            } else {
                // w1(-l, x) = conj(w1(l, x)): coefficients conj-reflected
                let rp = fourier::bin_of_signed(-fourier::signed_index(r, cells), cells);
                let (_, lam, gap, w) = solved[rp].clone().expect("mirror bin solved");
                let n = w.len();
                let mut wm = DVector::<Complex64>::zeros(n);
                for i in 0..n {
                    wm[i] = w[n - 1 - i].conj();
                }
                (lam, gap, wm)
            };
            if gap < crate::cell::DEGENERACY_TOL {
                return Err(Error::DegenerateBranch { l, gap });
            }
            let matrix = assemble_bloch_matrix(coeffs, l, m);
            let solver = CellSolver::new(&matrix, Some(w1.clone()));
            entries[r] = Some(BlochEntry { l, lambda1, gap, w1, solver });
            support.push(r);
        }
        Ok(Self { cells, cutoff, delta0, pc_radius, entries, support })
    }

    pub fn entry(&self, r: usize) -> Option<&BlochEntry> {
        self.entries[r].as_ref()
    }
}

/// Correction field: one cell-coefficient vector per supported Bloch bin.
pub type CorrField = Vec<DVector<Complex64>>;

/// A synthesized field with its first two exact time derivatives.
#[derive(Clone, Debug)]
pub struct FieldJet {
    pub psi: GridField,
    pub psi_t: GridField,
    pub psi_tt: GridField,
    /// Largest imaginary residue seen before symmetrization (realness check).
    pub imag_residue: f64,
}

/// Controls for the slaved-correction fixed point.
#[derive(Clone, Copy, Debug)]
pub struct FixedPointControls {
    pub max_iter: usize,
    pub contraction_limit: f64,
    pub tol: f64,
}

impl Default for FixedPointControls {
    fn default() -> Self {
        Self { max_iter: 20, contraction_limit: 0.5, tol: 1e-13 }
    }
}

enum Carrier {
    Plain(AmplitudeSolver),
    /// Burgers improved: amplitude plus the dynamic band corrector W.
    BurgersBand { a: Vec<Complex64>, w: Vec<Complex64>, t: f64, dt: f64, shock_guard: f64 },
}

/// Bloch-synthesized approximant of one amplitude equation at one ε.
pub struct Approximant {
    pub coeffs: PeriodicCoefficients,
    pub model: EffectiveModel,
    pub eq: AmplitudeEquation,
    pub epsilon: f64,
    pub level: Level,
    pub bloch: Arc<BlochData>,
    /// Internal working grid for the nonlinear cell forcing (3·cutoff modes).
    pub work: SpectralGrid,
    pub slow: SlowGrid,
    pub controls: FixedPointControls,
    carrier: Carrier,
    c_work: Vec<f64>,
    /// Amplitude-spectrum mass allowed past the delta0/4 cutoff.
    pub leak_tol: f64,
}

impl Approximant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        coeffs: &PeriodicCoefficients,
        model: &EffectiveModel,
        eq: AmplitudeEquation,
        epsilon: f64,
        level: Level,
        bloch: Arc<BlochData>,
        cells: usize,
        slow_n: usize,
        a0: Vec<Complex64>,
        dt_slow: f64,
        guards: AmplitudeGuards,
    ) -> Result<Self> {
        if slow_n > cells {
            return Err(Error::Config(format!(
                "slow grid ({slow_n}) must not exceed the cell count ({cells})"
            )));
        }
        let work = SpectralGrid::new(cells, 3 * bloch.cutoff);
        let slow = SlowGrid::new(slow_n, epsilon * work.len());
        // the Whitham flux carries the Bloch cutoff chi(eps K) of the ansatz
        let eq = if eq.kind() == AmplitudeKind::Whitham {
            eq.with_whitham_cutoff(bloch.delta0 / (4.0 * epsilon))
        } else {
            eq
        };
        let carrier = match (eq.kind(), level) {
            (AmplitudeKind::Burgers, Level::Improved) => {
                let shock = burgers_shock_time(&slow, &eq, &a0);
                Carrier::BurgersBand {
                    a: a0,
                    w: vec![Complex64::new(0.0, 0.0); slow_n],
                    t: 0.0,
                    dt: dt_slow,
                    shock_guard: guards.shock_fraction * shock,
                }
            }
            _ => Carrier::Plain(AmplitudeSolver::new(slow, eq, a0, dt_slow, guards)?),
        };
        let c_work = coeffs.values_on(&coeffs.c, work);
        let approx = Self {
            coeffs: coeffs.clone(),
            model: model.clone(),
            eq,
            epsilon,
            level,
            bloch,
            work,
            slow,
            controls: FixedPointControls::default(),
            carrier,
            c_work,
            leak_tol: 1e-8,
        };
        approx.cutoff_check()?;
        Ok(approx)
    }

    pub fn alpha(&self) -> f64 {
        self.eq.kind().alpha()
    }

    /// Slow time corresponding to physical time t.
    pub fn slow_time(&self, t: f64) -> f64 {
        self.epsilon.powf(1.0 + self.alpha()) * t
    }

    /// Amplitude spectrum must stay inside the delta0/4 Bloch cutoff.
    pub fn cutoff_check(&self) -> Result<()> {
        let a = self.current_a();
        let kc = self.bloch.delta0 / (4.0 * self.epsilon);
        let leak = self.slow.tail_mass(&a, kc);
        if leak > self.leak_tol {
            return Err(Error::CutoffViolation { leak });
        }
        Ok(())
    }

    fn current_a(&self) -> Vec<Complex64> {
        match &self.carrier {
            Carrier::Plain(s) => s.state.a_coeffs().to_vec(),
            Carrier::BurgersBand { a, .. } => a.clone(),
        }
    }

    pub fn shock_time(&self) -> f64 {
        match &self.carrier {
            Carrier::Plain(s) => s.shock_time(),
            Carrier::BurgersBand { shock_guard, .. } => *shock_guard / 0.5,
        }
    }

    /// Advance the amplitude (and band corrector) to slow time T.
    pub fn advance_to_slow(&mut self, t_slow: f64) -> Result<()> {
        if let Carrier::Plain(s) = &mut self.carrier {
            return s.advance_to(t_slow);
        }
        let (mut a_cur, mut w_cur, mut t_cur, dt, shock_guard) = {
            let Carrier::BurgersBand { a, w, t, dt, shock_guard } = &self.carrier else {
                unreachable!()
            };
            (a.clone(), w.clone(), *t, *dt, *shock_guard)
        };
        if t_slow > shock_guard {
            return Err(Error::ShockTooClose {
                t_end: t_slow,
                guard: shock_guard,
                t_shock: 2.0 * shock_guard,
            });
        }
        while t_cur < t_slow - 1e-13 {
            let step = dt.min(t_slow - t_cur);
            self.band_rk4_step(&mut a_cur, &mut w_cur, step)?;
            t_cur += step;
        }
        let Carrier::BurgersBand { a, w, t, .. } = &mut self.carrier else { unreachable!() };
        *a = a_cur;
        *w = w_cur;
        *t = t_slow;
        Ok(())
    }

    /// Physical-time variant of [`Self::advance_to_slow`].
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        self.advance_to_slow(self.slow_time(t))
    }

    // ---- band coefficients ------------------------------------------------

    /// Map slow-grid bin to Bloch bin (the K and l grids coincide via l = εK).
    fn bloch_bin(&self, slow_bin: usize) -> usize {
        let s = fourier::signed_index(slow_bin, self.slow.n);
        fourier::bin_of_signed(s, self.work.cells)
    }

    /// Bloch number at a slow bin.
    fn bloch_number_of(&self, slow_bin: usize) -> f64 {
        self.work.bloch_number(self.bloch_bin(slow_bin))
    }

    /// Apply the delta0/4 cutoff mask to a slow-spectral field.
    fn mask_cutoff(&self, c: &mut [Complex64]) {
        let lmax = self.bloch.delta0 / 4.0 + 1e-12;
        for j in 0..c.len() {
            if self.bloch_number_of(j).abs() > lmax {
                c[j] = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Band coefficient jets U^{(k)}(slow bin) in physical-amplitude units
    /// (U = ε^α Â plus the Burgers corrector W when present).
    fn band_jets(&self, order: usize) -> Vec<Vec<Complex64>> {
        let scale = self.epsilon.powf(self.alpha());
        match &self.carrier {
            Carrier::Plain(s) => {
                let jets: AmplitudeJets = s.jets(order);
                jets.a
                    .iter()
                    .map(|j| {
                        let mut out: Vec<Complex64> = j.iter().map(|z| z * scale).collect();
                        self.mask_cutoff(&mut out);
                        out
                    })
                    .collect()
            }
            Carrier::BurgersBand { a, w, .. } => {
                let a_jets = self.eq.scalar_jets(&self.slow, a, order.max(1) + 1);
                let w_jets = self.band_w_jets(&a_jets, w, order);
                (0..=order)
                    .map(|k| {
                        let mut out: Vec<Complex64> = a_jets[k]
                            .iter()
                            .zip(w_jets[k].iter())
                            .map(|(aj, wj)| scale * aj + wj)
                            .collect();
                        self.mask_cutoff(&mut out);
                        out
                    })
                    .collect()
            }
        }
    }

    // ---- big-spectrum assembly and the nonlinear operator ------------------

    /// Place band (+ corrections) into a big-torus spectrum on the work grid.
    fn assemble_big(&self, band: &[Complex64], corr: Option<&CorrField>) -> Vec<Complex64> {
        let grid = self.work;
        let p = grid.points_per_cell;
        let m = self.bloch.cutoff as i64;
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.n()];
        for j in 0..self.slow.n {
            let u = band[j];
            if u.norm_sqr() == 0.0 {
                continue;
            }
            let r = self.bloch_bin(j);
            let entry = self.bloch.entry(r).expect("band support inside P_c range");
            for idx in 0..entry.w1.len() {
                let q = idx as i64 - m;
                let qb = fourier::bin_of_signed(q, p);
                spec[crate::bloch_join(r, qb, &grid)] += u * entry.w1[idx];
            }
        }
        if let Some(corr) = corr {
            for (si, &r) in self.bloch.support.iter().enumerate() {
                let v = &corr[si];
                for idx in 0..v.len() {
                    let q = idx as i64 - m;
                    let qb = fourier::bin_of_signed(q, p);
                    spec[crate::bloch_join(r, qb, &grid)] += v[idx];
                }
            }
        }
        spec
    }

    /// Bilinear nonlinearity N(f, g) = spectrum of ∂x(c(x) ∂x(F G)), dealiased.
    fn n_bilinear(&self, f: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
        let n = self.work.n();
        let len = self.work.len();
        let keep = fourier::dealias_keep(n);
        let fv = fourier::values(f);
        let gv = fourier::values(g);
        let mut prod: Vec<Complex64> = fv.iter().zip(gv.iter()).map(|(a, b)| a * b).collect();
        let mut spec = fourier::coeffs(&prod);
        fourier::truncate_above(&mut spec, keep);
        fourier::derivative_symbol(&mut spec, 1, len);
        let vals = fourier::values(&spec);
        prod = vals
            .iter()
            .zip(self.c_work.iter())
            .map(|(v, c)| v * c)
            .collect();
        let mut out = fourier::coeffs(&prod);
        fourier::truncate_above(&mut out, keep);
        fourier::derivative_symbol(&mut out, 1, len);
        out
    }

    /// Extract the P_s part of a big spectrum on the correction support.
    fn project_ps(&self, big: &[Complex64]) -> CorrField {
        let grid = self.work;
        let p = grid.points_per_cell;
        let m = self.bloch.cutoff as i64;
        self.bloch
            .support
            .iter()
            .map(|&r| {
                let entry = self.bloch.entry(r).expect("support entry");
                let nmod = entry.w1.len();
                let mut cellv = DVector::<Complex64>::zeros(nmod);
                for idx in 0..nmod {
                    let q = idx as i64 - m;
                    let qb = fourier::bin_of_signed(q, p);
                    cellv[idx] = big[crate::bloch_join(r, qb, &grid)];
                }
                let coef: Complex64 =
                    entry.w1.iter().zip(cellv.iter()).map(|(w, v)| w.conj() * v).sum();
                for idx in 0..nmod {
                    let d = coef * entry.w1[idx];
                    cellv[idx] -= d;
                }
                cellv
            })
            .collect()
    }

    fn corr_zero(&self) -> CorrField {
        self.bloch
            .support
            .iter()
            .map(|_| DVector::<Complex64>::zeros(2 * self.bloch.cutoff + 1))
            .collect()
    }

    fn corr_norm(v: &CorrField) -> f64 {
        v.iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Solve the slaved correction v = L^{-1}[P_s N(u) + c²l² v] given the
    /// constant part of the forcing and the linear coupling through N.
    ///
    /// `nl_arg` produces the N argument for the current iterate; the closure
    /// form lets the same loop serve the nonlinear fixed point (argument is
    /// band + v) and the affine jet solves (argument couples linearly to v).
    fn fixed_point(
        &self,
        mut v: CorrField,
        forcing: impl Fn(&CorrField) -> CorrField,
    ) -> Result<CorrField> {
        let c2 = self.eq.co.speed * self.eq.co.speed;
        let mut prev_delta = f64::INFINITY;
        for iter in 0..self.controls.max_iter {
            let mut rhs = forcing(&v);
            for (si, &r) in self.bloch.support.iter().enumerate() {
                let entry = self.bloch.entry(r).expect("support entry");
                let l = entry.l;
                if self.eq.kind() != AmplitudeKind::Whitham {
                    let shift = Complex64::new(c2 * l * l, 0.0);
                    let vi = v[si].clone();
                    rhs[si] += vi * shift;
                }
            }
            let v_new: CorrField = self
                .bloch
                .support
                .iter()
                .enumerate()
                .map(|(si, &r)| {
                    let entry = self.bloch.entry(r).expect("support entry");
                    entry.solver.solve_ps(&rhs[si])
                })
                .collect();
            let delta = {
                let mut acc = 0.0;
                for (a, b) in v_new.iter().zip(v.iter()) {
                    acc += (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
                acc.sqrt()
            };
            let scale = Self::corr_norm(&v_new).max(1e-300);
            v = v_new;
            if delta <= self.controls.tol * scale.max(1.0) {
                return Ok(v);
            }
            if iter >= 2 && delta > self.controls.contraction_limit * prev_delta {
                return Err(Error::NoContraction { ratio: delta / prev_delta, iters: iter });
            }
            prev_delta = delta;
        }
        Err(Error::NoContraction { ratio: 1.0, iters: self.controls.max_iter })
    }

    /// Nonlinear slaved correction for the given band coefficients.
    fn slave_correction(&self, band: &[Complex64]) -> Result<CorrField> {
        self.fixed_point(self.corr_zero(), |v| {
            let u = self.assemble_big(band, Some(v));
            let nfield = self.n_bilinear(&u, &u);
            self.project_ps(&nfield)
        })
    }

    /// Jet order k of the slaved correction (affine fixed point).
    fn slave_correction_jet(
        &self,
        band_jets: &[Vec<Complex64>],
        u_spectra: &[Vec<Complex64>],
        k: usize,
    ) -> Result<CorrField> {
        // constant part: Σ_{j=1..k-1} C(k,j) N(u^{(j)}, u^{(k-j)})
        let binom = |n: usize, r: usize| -> f64 {
            let mut v = 1.0;
            for i in 0..r {
                v = v * (n - i) as f64 / (i + 1) as f64;
            }
            v
        };
        let n = self.work.n();
        let mut const_big = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..k {
            let term = self.n_bilinear(&u_spectra[j], &u_spectra[k - j]);
            let w = binom(k, j);
            for (c, t) in const_big.iter_mut().zip(term.iter()) {
                *c += w * t;
            }
        }
        // known part of the j = 0, k terms: 2 N(u0, band^{(k)} w1)
        let band_k_big = self.assemble_big(&band_jets[k], None);
        let term = self.n_bilinear(&u_spectra[0], &band_k_big);
        for (c, t) in const_big.iter_mut().zip(term.iter()) {
            *c += 2.0 * t;
        }

        let zero_band = vec![Complex64::new(0.0, 0.0); self.slow.n];
        self.fixed_point(self.corr_zero(), |x| {
            let xbig = self.assemble_big(&zero_band, Some(x));
            let cross = self.n_bilinear(&u_spectra[0], &xbig);
            let mut big = const_big.clone();
            for (b, cr) in big.iter_mut().zip(cross.iter()) {
                *b += 2.0 * cr;
            }
            self.project_ps(&big)
        })
    }

    /// Correction jets to the requested order (empty for the leading level).
    fn correction_jets(&self, band_jets: &[Vec<Complex64>], order: usize) -> Result<Vec<CorrField>> {
        if self.level == Level::Leading {
            return Ok(Vec::new());
        }
        let v0 = self.slave_correction(&band_jets[0])?;
        let mut v_jets = vec![v0];
        let mut u_spectra = vec![self.assemble_big(&band_jets[0], Some(&v_jets[0]))];
        for k in 1..=order {
            let vk = self.slave_correction_jet(band_jets, &u_spectra, k)?;
            u_spectra.push(self.assemble_big(&band_jets[k], Some(&vk)));
            v_jets.push(vk);
        }
        Ok(v_jets)
    }

    /// Whitham second-layer correction: B2^{(k)} = -L^{-1} v^{(k+2)}.
    fn whitham_b2(&self, v_jets: &[CorrField], k: usize) -> CorrField {
        self.bloch
            .support
            .iter()
            .enumerate()
            .map(|(si, &r)| {
                let entry = self.bloch.entry(r).expect("support entry");
                let rhs = -&v_jets[k + 2][si];
                entry.solver.solve_ps(&rhs)
            })
            .collect()
    }

    // ---- Burgers band corrector --------------------------------------------

    /// ∂_T W from the P_c defect: -2 i σ l c ε² ∂_T W + D = 0 with
    /// D = [c²l² - λ1(l)] U - 2 i σ l c ε³ ∂_T Â - ε⁵ ∂_T²Â + <w1, N(u)>.
    fn band_w_rhs(
        &self,
        a_jets: &[Vec<Complex64>],
        w: &[Complex64],
        v: &CorrField,
    ) -> Vec<Complex64> {
        let eps = self.epsilon;
        let c = self.eq.co.speed;
        let sigma = -self.eq.frame;
        let m = self.bloch.cutoff as i64;
        let p = self.work.points_per_cell;

        // band = ε Â + W, masked
        let mut band: Vec<Complex64> = a_jets[0]
            .iter()
            .zip(w.iter())
            .map(|(aj, wj)| eps * aj + wj)
            .collect();
        self.mask_cutoff(&mut band);
        let u = self.assemble_big(&band, Some(v));
        let nfield = self.n_bilinear(&u, &u);

        (0..self.slow.n)
            .map(|j| {
                let r = self.bloch_bin(j);
                let Some(entry) = self.bloch.entry(r) else {
                    return Complex64::new(0.0, 0.0);
                };
                let l = entry.l;
                if l == 0.0 || l.abs() > self.bloch.delta0 / 4.0 + 1e-12 {
                    return Complex64::new(0.0, 0.0);
                }
                // <w1, N(u)> at this Bloch number
                let mut pcn = Complex64::new(0.0, 0.0);
                for idx in 0..entry.w1.len() {
                    let q = idx as i64 - m;
                    let qb = fourier::bin_of_signed(q, p);
                    pcn += entry.w1[idx].conj() * nfield[crate::bloch_join(r, qb, &self.work)];
                }
                let bracket = (c * c * l * l - entry.lambda1) * band[j];
                let d = bracket
                    - Complex64::new(0.0, 2.0 * sigma * l * c) * eps.powi(3) * a_jets[1][j]
                    - eps.powi(5) * a_jets[2][j]
                    + pcn;
                // -2iσ l c ε² ∂_T W + D = 0  =>  ∂_T W = -iσ D/(2 l c ε²)
                Complex64::new(0.0, -sigma / (2.0 * l * c * eps * eps)) * d
            })
            .collect()
    }

    fn band_rk4_step(&self, a: &mut Vec<Complex64>, w: &mut Vec<Complex64>, dt: f64) -> Result<()> {
        let n = self.slow.n;
        let rhs = |a: &[Complex64], w: &[Complex64]| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
            let a_jets = self.eq.scalar_jets(&self.slow, a, 2);
            let mut band: Vec<Complex64> = a
                .iter()
                .zip(w.iter())
                .map(|(aj, wj)| self.epsilon * aj + wj)
                .collect();
            self.mask_cutoff(&mut band);
            let v = self.slave_correction(&band)?;
            let dw = self.band_w_rhs(&a_jets, w, &v);
            Ok((a_jets[1].clone(), dw))
        };
        let (k1a, k1w) = rhs(a, w)?;
        let sa = |x: &[Complex64], s: f64, k: &[Complex64]| -> Vec<Complex64> {
            x.iter().zip(k.iter()).map(|(v, kv)| v + s * kv).collect()
        };
        let (k2a, k2w) = rhs(&sa(a, 0.5 * dt, &k1a), &sa(w, 0.5 * dt, &k1w))?;
        let (k3a, k3w) = rhs(&sa(a, 0.5 * dt, &k2a), &sa(w, 0.5 * dt, &k2w))?;
        let (k4a, k4w) = rhs(&sa(a, dt, &k3a), &sa(w, dt, &k3w))?;
        for i in 0..n {
            a[i] += dt / 6.0 * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i]);
            w[i] += dt / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
        Ok(())
    }

    /// Jets of the Burgers band corrector W.
    fn band_w_jets(
        &self,
        a_jets: &[Vec<Complex64>],
        w: &[Complex64],
        order: usize,
    ) -> Vec<Vec<Complex64>> {
        let mut jets = vec![w.to_vec()];
        if order == 0 {
            return jets;
        }
        let mut band: Vec<Complex64> = a_jets[0]
            .iter()
            .zip(w.iter())
            .map(|(aj, wj)| self.epsilon * aj + wj)
            .collect();
        self.mask_cutoff(&mut band);
        let v = self.slave_correction(&band).unwrap_or_else(|_| self.corr_zero());
        let w1 = self.band_w_rhs(a_jets, w, &v);
        jets.push(w1.clone());
        if order >= 2 {
            // second derivative by a first-order difference of the rhs along
            // the flow: W(T+h) ≈ W + h W', A(T+h) jets shifted; h is tiny and
            // this term only enters the residual at the dropped order.
            let h = 1e-5;
            let a_shift: Vec<Complex64> = a_jets[0]
                .iter()
                .zip(a_jets[1].iter())
                .zip(a_jets[2].iter())
                .map(|((a0, a1), a2)| a0 + h * a1 + 0.5 * h * h * a2)
                .collect();
            let w_shift: Vec<Complex64> =
                w.iter().zip(w1.iter()).map(|(w0, w1)| w0 + h * w1).collect();
            let a_jets_shift = self.eq.scalar_jets(&self.slow, &a_shift, 2);
            let mut band_shift: Vec<Complex64> = a_shift
                .iter()
                .zip(w_shift.iter())
                .map(|(aj, wj)| self.epsilon * aj + wj)
                .collect();
            self.mask_cutoff(&mut band_shift);
            let v_shift = self
                .slave_correction(&band_shift)
                .unwrap_or_else(|_| self.corr_zero());
            let w1_shift = self.band_w_rhs(&a_jets_shift, &w_shift, &v_shift);
            let w2: Vec<Complex64> = w1_shift
                .iter()
                .zip(w1.iter())
                .map(|(b, a)| (b - a) / h)
                .collect();
            jets.push(w2);
        }
        for _ in jets.len()..=order {
            jets.push(vec![Complex64::new(0.0, 0.0); self.slow.n]);
        }
        jets
    }

    // ---- synthesis ----------------------------------------------------------

    /// Synthesize (Ψ, ∂tΨ, ∂t²Ψ) at physical time t on the target grid.
    /// The target must share the cell count of the working torus.
    pub fn synthesize_jet(&mut self, t: f64, target: SpectralGrid) -> Result<FieldJet> {
        assert_eq!(target.cells, self.work.cells, "grids must share the torus");
        self.advance_to(t)?;
        self.cutoff_check()?;

        let jet_order = match (self.eq.kind(), self.level) {
            (AmplitudeKind::Whitham, Level::Improved) => 4,
            _ => 2,
        };
        let band_jets = self.band_jets(jet_order);
        let v_jets = self.correction_jets(&band_jets, jet_order)?;

        // total correction jets (Whitham improved adds ε² B2)
        let corr_total: Vec<CorrField> = if self.level == Level::Improved {
            if self.eq.kind() == AmplitudeKind::Whitham {
                (0..=2usize)
                    .map(|k| {
                        let b2 = self.whitham_b2(&v_jets, k);
                        let mut tot = v_jets[k].clone();
                        for (tv, bv) in tot.iter_mut().zip(b2.iter()) {
                            *tv += bv * Complex64::new(self.epsilon * self.epsilon, 0.0);
                        }
                        tot
                    })
                    .collect()
            } else {
                v_jets[..=2.min(v_jets.len() - 1)].to_vec()
            }
        } else {
            Vec::new()
        };

        // assemble spectra for jet orders 0..2 with the phase E = e^{iθt},
        // θ = -frame·l·c, folding in the slow-time scaling ε^{1+α}; the frame
        // speed comes from the amplitude record (zero for Whitham)
        let eps_t = self.epsilon.powf(1.0 + self.alpha());
        let c = self.eq.co.speed;
        let sigma = -self.eq.frame;
        let m = self.bloch.cutoff as i64;
        let p = target.points_per_cell;
        let qmax = (p as i64 / 2 - 1).min(m);
        let n = target.n();
        let mut spec = [
            vec![Complex64::new(0.0, 0.0); n],
            vec![Complex64::new(0.0, 0.0); n],
            vec![Complex64::new(0.0, 0.0); n],
        ];

        let mut add_cell = |r: usize, jets: [&DVector<Complex64>; 3], scale: Complex64| {
            let l = self.work.bloch_number(r);
            let theta = sigma * l * c;
            let phase = (Complex64::new(0.0, theta * t)).exp() * scale;
            let itheta = Complex64::new(0.0, theta);
            for idx in 0..jets[0].len() {
                let q = idx as i64 - m;
                if q.abs() > qmax {
                    continue;
                }
                let bin = crate::bloch_join(r, fourier::bin_of_signed(q, p), &target);
                let f0 = jets[0][idx];
                let f1 = jets[1][idx];
                let f2 = jets[2][idx];
                spec[0][bin] += phase * f0;
                spec[1][bin] += phase * (eps_t * f1 + itheta * f0);
                spec[2][bin] += phase
                    * (eps_t * eps_t * f2
                        + 2.0 * itheta * eps_t * f1
                        + itheta * itheta * f0);
            }
        };

        // band part: U^{(k)} ŵ1
        for j in 0..self.slow.n {
            let r = self.bloch_bin(j);
            let Some(entry) = self.bloch.entry(r) else { continue };
            let nmod = entry.w1.len();
            let mut cell = [
                DVector::<Complex64>::zeros(nmod),
                DVector::<Complex64>::zeros(nmod),
                DVector::<Complex64>::zeros(nmod),
            ];
            let mut any = false;
            for k in 0..=2usize {
                let u = band_jets[k][j];
                if u.norm_sqr() > 0.0 {
                    any = true;
                }
                for idx in 0..nmod {
                    cell[k][idx] = u * entry.w1[idx];
                }
            }
            if any {
                add_cell(r, [&cell[0], &cell[1], &cell[2]], Complex64::new(1.0, 0.0));
            }
        }
        // correction part
        if !corr_total.is_empty() {
            for (si, &r) in self.bloch.support.iter().enumerate() {
                add_cell(
                    r,
                    [&corr_total[0][si], &corr_total[1][si], &corr_total[2][si]],
                    Complex64::new(1.0, 0.0),
                );
            }
        }

        // realness: measure the conjugate-symmetry residue, then symmetrize
        let mut imag_residue: f64 = 0.0;
        let scale0 = spec[0].iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        for s in spec.iter_mut() {
            for j in 1..n / 2 {
                let a = s[j];
                let b = s[n - j].conj();
                imag_residue = imag_residue.max((a - b).norm() / scale0);
                let avg = 0.5 * (a + b);
                s[j] = avg;
                s[n - j] = avg.conj();
            }
            s[0] = Complex64::new(s[0].re, 0.0);
            if n % 2 == 0 {
                s[n / 2] = Complex64::new(s[n / 2].re, 0.0);
            }
        }

        let psi = GridField::from_coeffs(target, &spec[0])?;
        let psi_t = GridField::from_coeffs(target, &spec[1])?;
        let psi_tt = GridField::from_coeffs(target, &spec[2])?;
        Ok(FieldJet { psi, psi_t, psi_tt, imag_residue })
    }

    /// Ψ(·, t) alone.
    pub fn synthesize(&mut self, t: f64, target: SpectralGrid) -> Result<GridField> {
        Ok(self.synthesize_jet(t, target)?.psi)
    }

    /// ∂tΨ(·, t) alone.
    pub fn synthesize_dt(&mut self, t: f64, target: SpectralGrid) -> Result<GridField> {
        Ok(self.synthesize_jet(t, target)?.psi_t)
    }

    /// The theorem's comparison field ε^α A(ε(x - s c t), ε^{1+α} t) on the
    /// target grid (no Bloch structure, no cutoff).
    pub fn comparison_field(&mut self, t: f64, target: SpectralGrid) -> Result<GridField> {
        assert_eq!(target.cells, self.work.cells);
        self.advance_to(t)?;
        let a = self.current_a();
        let scale = self.epsilon.powf(self.alpha());
        let c = self.eq.co.speed;
        let s = self.eq.frame;
        let n = target.n();
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..self.slow.n {
            let sj = fourier::signed_index(j, self.slow.n);
            let bin = fourier::bin_of_signed(sj, n);
            let l = sj as f64 / target.cells as f64;
            let phase = Complex64::new(0.0, -l * s * c * t).exp();
            spec[bin] += scale * a[j] * phase;
        }
        GridField::from_coeffs(target, &spec)
    }

    /// Orthogonality of the current slaved correction to the band (test hook):
    /// returns max_r |<w1(l_r), v(l_r)>|.
    pub fn correction_band_overlap(&mut self, t: f64) -> Result<f64> {
        self.advance_to(t)?;
        let band_jets = self.band_jets(0);
        let v = self.slave_correction(&band_jets[0])?;
        let mut worst: f64 = 0.0;
        for (si, &r) in self.bloch.support.iter().enumerate() {
            let entry = self.bloch.entry(r).expect("support entry");
            let ip: Complex64 = entry.w1.iter().zip(v[si].iter()).map(|(w, x)| w.conj() * x).sum();
            worst = worst.max(ip.norm());
        }
        Ok(worst)
    }

    /// Residual of the correction fixed point ||v - L^{-1}(P_s N + c²l² v)||
    /// at convergence (test hook).
    pub fn correction_fixed_point_residual(&mut self, t: f64) -> Result<f64> {
        self.advance_to(t)?;
        let band_jets = self.band_jets(0);
        let v = self.slave_correction(&band_jets[0])?;
        let u = self.assemble_big(&band_jets[0], Some(&v));
        let nfield = self.n_bilinear(&u, &u);
        let mut rhs = self.project_ps(&nfield);
        let c2 = self.eq.co.speed * self.eq.co.speed;
        for (si, &r) in self.bloch.support.iter().enumerate() {
            let entry = self.bloch.entry(r).expect("support entry");
            if self.eq.kind() != AmplitudeKind::Whitham {
                let vi = v[si].clone();
                rhs[si] += vi * Complex64::new(c2 * entry.l * entry.l, 0.0);
            }
        }
        let mut acc = 0.0;
        for (si, &r) in self.bloch.support.iter().enumerate() {
            let entry = self.bloch.entry(r).expect("support entry");
            let solved = entry.solver.solve_ps(&rhs[si]);
            acc += (&solved - &v[si]).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        Ok(acc.sqrt())
    }
}
