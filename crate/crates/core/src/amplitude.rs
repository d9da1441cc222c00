//! Amplitude-equation solvers on the slow domain.
//!
//! With effective coefficients (c, λ4, ν2, s2) and a frame sign s (the
//! physical frame is X = ε(x - s·c t)) the equations integrated here are
//!
//!   KdV:      ∂_T A = s [ (λ4/48c) ∂_X³A + (ν2/2c) ∂_X(A²) ]
//!   Burgers:  ∂_T A = s (ν2/2c) ∂_X(A²)
//!   Whitham:  ∂_T A = ∂_X V,  ∂_T V = ∂_X( (λ2/2) A + (s2/2) A² )
//!
//! all pseudospectral in X; KdV uses an integrating factor for the ∂_X³ term.
//! Time derivatives of any state are produced to order 4 by chaining the
//! right-hand sides (quadratic nonlinearities, Leibniz rule), which the
//! approximant uses for exact ∂t-jets of the synthesized fields.

use num_complex::Complex64;

use crate::effective::{AmplitudeCoefficients, AmplitudeKind};
use crate::error::{Error, Result};
use crate::slow::SlowGrid;

const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// One amplitude equation in a fixed frame.
#[derive(Clone, Copy, Debug)]
pub struct AmplitudeEquation {
    pub co: AmplitudeCoefficients,
    /// Frame sign s: the comparison field is ε^α A(ε(x - s·c t), ε^{1+α} t).
    pub frame: f64,
    /// Whitham only: truncate the flux at |K| > kcut, matching the Bloch
    /// cutoff χ(εK) the synthesized ansatz carries. None leaves it untouched.
    pub whitham_flux_kcut: Option<f64>,
}

impl AmplitudeEquation {
    pub fn new(co: AmplitudeCoefficients, frame: f64) -> Self {
        assert!(frame == 1.0 || frame == -1.0);
        Self { co, frame, whitham_flux_kcut: None }
    }

    pub fn with_whitham_cutoff(mut self, kcut: f64) -> Self {
        self.whitham_flux_kcut = Some(kcut);
        self
    }

    fn mask_flux(&self, grid: &SlowGrid, flux: &mut [Complex64]) {
        if let Some(kcut) = self.whitham_flux_kcut {
            for (j, f) in flux.iter_mut().enumerate() {
                if grid.wavenumber(j).abs() > kcut {
                    *f = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn kind(&self) -> AmplitudeKind {
        self.co.kind
    }

    /// Scalar right-hand side (KdV / Burgers).
    fn rhs_scalar(&self, grid: &SlowGrid, a: &[Complex64]) -> Vec<Complex64> {
        let a2 = grid.product(a, a);
        let mut out = grid.derivative(&a2, 1);
        for v in &mut out {
            *v *= self.frame * self.co.nonlin;
        }
        if self.co.dispersion != 0.0 {
            let d3 = grid.derivative(a, 3);
            for (o, d) in out.iter_mut().zip(d3.iter()) {
                *o += self.frame * self.co.dispersion * d;
            }
        }
        out
    }

    /// T-derivative jets (orders 0..=order) of a scalar amplitude state.
    pub fn scalar_jets(&self, grid: &SlowGrid, a: &[Complex64], order: usize) -> Vec<Vec<Complex64>> {
        assert!(order <= 4);
        let mut jets: Vec<Vec<Complex64>> = vec![a.to_vec()];
        for n in 0..order {
            // d^{n+1} A = s [ disp ∂³ A^{(n)} + nonlin ∂ Σ C(n,k) A^{(k)} A^{(n-k)} ]
            let mut quad = vec![Complex64::new(0.0, 0.0); grid.n];
            for k in 0..=n {
                let prod = grid.product(&jets[k], &jets[n - k]);
                for (q, p) in quad.iter_mut().zip(prod.iter()) {
                    *q += BINOM[n][k] * p;
                }
            }
            let mut next = grid.derivative(&quad, 1);
            for v in &mut next {
                *v *= self.frame * self.co.nonlin;
            }
            if self.co.dispersion != 0.0 {
                let d3 = grid.derivative(&jets[n], 3);
                for (o, d) in next.iter_mut().zip(d3.iter()) {
                    *o += self.frame * self.co.dispersion * d;
                }
            }
            jets.push(next);
        }
        jets
    }

    /// T-derivative jets of a Whitham pair (A, V).
    pub fn whitham_jets(
        &self,
        grid: &SlowGrid,
        a: &[Complex64],
        v: &[Complex64],
        order: usize,
    ) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
        assert!(order <= 4);
        let mut ja: Vec<Vec<Complex64>> = vec![a.to_vec()];
        let mut jv: Vec<Vec<Complex64>> = vec![v.to_vec()];
        for n in 0..order {
            let next_a = grid.derivative(&jv[n], 1);
            let mut flux = ja[n].clone();
            for f in &mut flux {
                *f *= self.co.whitham_lin;
            }
            for k in 0..=n {
                let prod = grid.product(&ja[k], &ja[n - k]);
                for (f, p) in flux.iter_mut().zip(prod.iter()) {
                    *f += self.co.whitham_quad * BINOM[n][k] * p;
                }
            }
            self.mask_flux(grid, &mut flux);
            let next_v = grid.derivative(&flux, 1);
            ja.push(next_a);
            jv.push(next_v);
        }
        (ja, jv)
    }
}

/// Scalar (KdV / Burgers) or first-order-system (Whitham) state.
#[derive(Clone, Debug)]
pub enum AmplitudeState {
    Scalar(Vec<Complex64>),
    Whitham { a: Vec<Complex64>, v: Vec<Complex64> },
}

impl AmplitudeState {
    pub fn a_coeffs(&self) -> &[Complex64] {
        match self {
            AmplitudeState::Scalar(a) => a,
            AmplitudeState::Whitham { a, .. } => a,
        }
    }
}

/// Safety guards for the time steppers.
#[derive(Clone, Copy, Debug)]
pub struct AmplitudeGuards {
    /// Sup-norm ceiling; exceeding it raises BlowUp.
    pub ceiling: f64,
    /// Burgers only: fraction of T_shock the integration may use.
    pub shock_fraction: f64,
    /// Whitham only: gradient growth factor treated as an impending shock.
    pub gradient_growth: f64,
}

impl Default for AmplitudeGuards {
    fn default() -> Self {
        Self { ceiling: 1e3, shock_fraction: 0.5, gradient_growth: 20.0 }
    }
}

/// Fixed-step RK4 integrator for one amplitude equation.
///
/// KdV applies the integrating factor e^{μT}, μ(K) = s·disp·(iK)³, so the
/// step size is set by the nonlinearity alone.
pub struct AmplitudeSolver {
    pub grid: SlowGrid,
    pub eq: AmplitudeEquation,
    pub state: AmplitudeState,
    pub t: f64,
    pub dt: f64,
    pub guards: AmplitudeGuards,
    shock_time: f64,
    initial_gradient: f64,
}

impl AmplitudeSolver {
    pub fn new(
        grid: SlowGrid,
        eq: AmplitudeEquation,
        a0: Vec<Complex64>,
        dt: f64,
        guards: AmplitudeGuards,
    ) -> Result<Self> {
        let state = match eq.kind() {
            AmplitudeKind::Whitham => AmplitudeState::Whitham {
                a: a0.clone(),
                v: vec![Complex64::new(0.0, 0.0); grid.n],
            },
            _ => AmplitudeState::Scalar(a0.clone()),
        };
        let shock_time = match eq.kind() {
            AmplitudeKind::Burgers => burgers_shock_time(&grid, &eq, &a0),
            _ => f64::INFINITY,
        };
        let gp = grid.sup_norm(&grid.derivative(&a0, 1));
        let solver = Self {
            grid,
            eq,
            state,
            t: 0.0,
            dt,
            guards,
            shock_time,
            initial_gradient: gp,
        };
        solver.check_guards()?;
        Ok(solver)
    }

    /// Whitham state with a prescribed initial V.
    pub fn with_whitham_velocity(mut self, v0: Vec<Complex64>) -> Self {
        if let AmplitudeState::Whitham { v, .. } = &mut self.state {
            *v = v0;
        }
        self
    }

    pub fn shock_time(&self) -> f64 {
        self.shock_time
    }

    fn check_guards(&self) -> Result<()> {
        let a = self.state.a_coeffs();
        let sup = self.grid.sup_norm(a);
        if !sup.is_finite() || sup > self.guards.ceiling {
            return Err(Error::BlowUp { t: self.t, norm: sup, ceiling: self.guards.ceiling });
        }
        if self.eq.kind() == AmplitudeKind::Whitham {
            // flux derivative λ2/2 + s2·A must stay positive
            let vals = self.grid.values(a);
            let min = vals
                .iter()
                .map(|&x| self.eq.co.whitham_lin + 2.0 * self.eq.co.whitham_quad * x)
                .fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::HyperbolicityLoss { t: self.t, min });
            }
            let grad = self.grid.sup_norm(&self.grid.derivative(a, 1));
            if grad > self.guards.gradient_growth * (self.initial_gradient + 1e-12) {
                return Err(Error::ShockTooClose {
                    t_end: self.t,
                    guard: self.t,
                    t_shock: self.t,
                });
            }
        }
        Ok(())
    }

    fn step_scalar(&mut self, dt: f64) {
        let grid = self.grid;
        let eq = self.eq;
        let AmplitudeState::Scalar(a) = &mut self.state else { unreachable!() };
        if eq.co.dispersion != 0.0 {
            // integrating-factor RK4 in W = e^{-μτ} A
            let n = grid.n;
            let mut e_half = vec![Complex64::new(0.0, 0.0); n];
            for (j, e) in e_half.iter_mut().enumerate() {
                let k = grid.wavenumber(j);
                let mu = Complex64::new(0.0, k).powu(3) * (eq.frame * eq.co.dispersion);
                *e = (mu * 0.5 * dt).exp();
            }
            let nl = |a: &[Complex64]| -> Vec<Complex64> {
                let a2 = grid.product(a, a);
                let mut out = grid.derivative(&a2, 1);
                for v in &mut out {
                    *v *= eq.frame * eq.co.nonlin;
                }
                out
            };
            let mul = |x: &[Complex64], e: &[Complex64]| -> Vec<Complex64> {
                x.iter().zip(e.iter()).map(|(a, b)| a * b).collect()
            };
            let axpy = |x: &[Complex64], s: f64, y: &[Complex64]| -> Vec<Complex64> {
                x.iter().zip(y.iter()).map(|(a, b)| a + s * b).collect()
            };
            let k1 = nl(a);
            let k2 = {
                let arg = mul(&axpy(a, 0.5 * dt, &k1), &e_half);
                let val = nl(&arg);
                val.iter().zip(e_half.iter()).map(|(v, e)| v / e).collect::<Vec<_>>()
            };
            let k3 = {
                let arg = mul(&axpy(a, 0.5 * dt, &k2), &e_half);
                let val = nl(&arg);
                val.iter().zip(e_half.iter()).map(|(v, e)| v / e).collect::<Vec<_>>()
            };
            let k4 = {
                let e_full: Vec<Complex64> = e_half.iter().map(|e| e * e).collect();
                let arg = mul(&axpy(a, dt, &k3), &e_full);
                let val = nl(&arg);
                val.iter().zip(e_full.iter()).map(|(v, e)| v / e).collect::<Vec<_>>()
            };
            for i in 0..n {
                let w = a[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                a[i] = w * e_half[i] * e_half[i];
            }
        } else {
            let rhs = |a: &[Complex64]| eq.rhs_scalar(&grid, a);
            rk4_in_place(a, dt, rhs);
        }
    }

    fn step_whitham(&mut self, dt: f64) {
        let grid = self.grid;
        let eq = self.eq;
        let AmplitudeState::Whitham { a, v } = &mut self.state else { unreachable!() };
        let n = grid.n;
        let mut y: Vec<Complex64> = a.iter().chain(v.iter()).copied().collect();
        let rhs = |y: &[Complex64]| -> Vec<Complex64> {
            let (ya, yv) = y.split_at(n);
            let da = grid.derivative(yv, 1);
            let mut flux = ya.to_vec();
            for f in &mut flux {
                *f *= eq.co.whitham_lin;
            }
            let quad = grid.product(ya, ya);
            for (f, q) in flux.iter_mut().zip(quad.iter()) {
                *f += eq.co.whitham_quad * q;
            }
            eq.mask_flux(&grid, &mut flux);
            let dv = grid.derivative(&flux, 1);
            da.into_iter().chain(dv).collect()
        };
        rk4_in_place(&mut y, dt, rhs);
        a.copy_from_slice(&y[..n]);
        v.copy_from_slice(&y[n..]);
    }

    fn step(&mut self, dt: f64) {
        match self.eq.kind() {
            AmplitudeKind::Whitham => self.step_whitham(dt),
            _ => self.step_scalar(dt),
        }
    }

    /// Integrate forward to the requested slow time.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        assert!(t_target >= self.t - 1e-12, "amplitude solver cannot run backwards");
        if self.eq.kind() == AmplitudeKind::Burgers {
            let guard = self.guards.shock_fraction * self.shock_time;
            if t_target > guard {
                return Err(Error::ShockTooClose {
                    t_end: t_target,
                    guard,
                    t_shock: self.shock_time,
                });
            }
        }
        while self.t < t_target - 1e-13 {
            let dt = self.dt.min(t_target - self.t);
            self.step(dt);
            self.t += dt;
            self.check_guards()?;
        }
        self.t = t_target;
        Ok(())
    }

    /// Jets (∂_T^k of both components) at the current state.
    pub fn jets(&self, order: usize) -> AmplitudeJets {
        match &self.state {
            AmplitudeState::Scalar(a) => AmplitudeJets {
                a: self.eq.scalar_jets(&self.grid, a, order),
                v: None,
            },
            AmplitudeState::Whitham { a, v } => {
                let (ja, jv) = self.eq.whitham_jets(&self.grid, a, v, order);
                AmplitudeJets { a: ja, v: Some(jv) }
            }
        }
    }
}

/// Spectral T-derivative jets of the amplitude state.
#[derive(Clone, Debug)]
pub struct AmplitudeJets {
    /// a[k] holds ∂_T^k A (spectral coefficients).
    pub a: Vec<Vec<Complex64>>,
    pub v: Option<Vec<Vec<Complex64>>>,
}

fn rk4_in_place(y: &mut [Complex64], dt: f64, rhs: impl Fn(&[Complex64]) -> Vec<Complex64>) {
    let k1 = rhs(y);
    let y2: Vec<Complex64> = y.iter().zip(k1.iter()).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k2 = rhs(&y2);
    let y3: Vec<Complex64> = y.iter().zip(k2.iter()).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k3 = rhs(&y3);
    let y4: Vec<Complex64> = y.iter().zip(k3.iter()).map(|(a, k)| a + dt * k).collect();
    let k4 = rhs(&y4);
    for i in 0..y.len() {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Characteristic shock time of the Burgers flow for the given initial data:
/// T_shock = -1 / min_X ∂_X V(A0) with V(A) = -2 s·nonlin·A, infinite when
/// the profile never steepens.
pub fn burgers_shock_time(grid: &SlowGrid, eq: &AmplitudeEquation, a0: &[Complex64]) -> f64 {
    let dv = grid.derivative(a0, 1);
    let vals = grid.values(&dv);
    let speed_gradient_min = vals
        .iter()
        .map(|&g| -2.0 * eq.frame * eq.co.nonlin * g)
        .fold(f64::INFINITY, f64::min);
    if speed_gradient_min < 0.0 {
        -1.0 / speed_gradient_min
    } else {
        f64::INFINITY
    }
}

/// Method-of-characteristics evaluation of the Burgers solution at slow time
/// t: solves X = X0 + V(A0(X0)) t for X0 by Newton iteration (valid before
/// the shock). `a0_fn` is the initial profile as a function.
pub fn burgers_characteristics(
    eq: &AmplitudeEquation,
    a0_fn: &dyn Fn(f64) -> f64,
    a0_dx: &dyn Fn(f64) -> f64,
    x: f64,
    t: f64,
) -> f64 {
    let speed = |x0: f64| -2.0 * eq.frame * eq.co.nonlin * a0_fn(x0);
    let speed_dx = |x0: f64| -2.0 * eq.frame * eq.co.nonlin * a0_dx(x0);
    let mut x0 = x;
    for _ in 0..80 {
        let f = x0 + speed(x0) * t - x;
        let fp = 1.0 + speed_dx(x0) * t;
        let step = f / fp;
        x0 -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    a0_fn(x0)
}

/// The higher-order Burgers corrector B (α = 1):
///
///   ∂_T B = (s/2c) [ ∂_X^{-1}∂_T²A + (λ4/24) ∂_X³A ] + s (ν2/c) ∂_X(A B),
///
/// integrated jointly with A from B(.,0) = 0. In the homogeneous medium this
/// is the corrector that cancels the ε⁵ residual layer; ∂_X^{-1}∂_T²A is
/// well-defined because ∂_T²A is a total derivative along the Burgers flow.
pub struct BurgersCorrector {
    pub grid: SlowGrid,
    pub eq: AmplitudeEquation,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub t: f64,
    pub dt: f64,
}

impl BurgersCorrector {
    pub fn new(grid: SlowGrid, eq: AmplitudeEquation, a0: Vec<Complex64>, dt: f64) -> Self {
        let n = grid.n;
        Self { grid, eq, a: a0, b: vec![Complex64::new(0.0, 0.0); n], t: 0.0, dt }
    }

    /// ∂_T B given the current (A, B); exposed for jet evaluation.
    pub fn rhs_b(
        grid: &SlowGrid,
        eq: &AmplitudeEquation,
        a_jets: &[Vec<Complex64>],
        b: &[Complex64],
    ) -> Vec<Complex64> {
        let s = eq.frame;
        let c2 = 2.0 * eq.co.speed;
        let att_ix = grid.antiderivative(&a_jets[2]);
        let a3 = grid.derivative(&a_jets[0], 3);
        let ab = grid.product(&a_jets[0], b);
        let dab = grid.derivative(&ab, 1);
        let lam4_over24 = eq.co.dispersion * c2; // λ4/24 = dispersion · 2c
        (0..grid.n)
            .map(|i| {
                s / c2 * (att_ix[i] + lam4_over24 * a3[i])
                    + 2.0 * s * eq.co.nonlin * dab[i]
            })
            .collect()
    }

    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let grid = self.grid;
        let eq = self.eq;
        let n = grid.n;
        while self.t < t_target - 1e-13 {
            let dt = self.dt.min(t_target - self.t);
            let mut y: Vec<Complex64> = self.a.iter().chain(self.b.iter()).copied().collect();
            let rhs = |y: &[Complex64]| -> Vec<Complex64> {
                let (ya, yb) = y.split_at(n);
                let a_jets = eq.scalar_jets(&grid, ya, 2);
                let da = a_jets[1].clone();
                let db = Self::rhs_b(&grid, &eq, &a_jets, yb);
                da.into_iter().chain(db).collect()
            };
            rk4_in_place(&mut y, dt, rhs);
            self.a.copy_from_slice(&y[..n]);
            self.b.copy_from_slice(&y[n..]);
            self.t += dt;
        }
        self.t = t_target;
        Ok(())
    }
}

/// Conservative default step size for each equation.
pub fn suggest_dt(eq: &AmplitudeEquation, grid: &SlowGrid, a0_sup: f64, safety: f64) -> f64 {
    let kmax = grid.max_wavenumber();
    let dt = match eq.kind() {
        AmplitudeKind::Whitham => {
            let speed = (eq.co.whitham_lin.max(1e-12)).sqrt() * (1.0 + a0_sup);
            2.8 / (speed * kmax)
        }
        _ => {
            let advect = 2.0 * eq.co.nonlin.abs() * a0_sup * kmax;
            let mixing = eq.co.dispersion.abs() * kmax.powi(3) / 30.0;
            2.8 / (advect + mixing + 1e-9)
        }
    };
    (safety * dt).min(0.05)
}
