//! Residual meter: evaluates
//!
//!   Res(Ψ) = -∂t²Ψ + ∂x(a ∂x Ψ) - ∂x²(b ∂x² Ψ) + ∂x(c ∂x(Ψ²))
//!
//! on a time-parametrized approximant (∂t²Ψ from exact jets) and samples the
//! norms whose ε-scalings the residual lemmas assert.

use serde::{Deserialize, Serialize};

use crate::approximant::{Approximant, FieldJet, Level};
use crate::error::{Error, Result};
use crate::grid::{GridField, SpectralGrid};
use crate::sim::{rhs, MediumOnGrid, SimState};
use crate::spectral;

/// One sampled row of residual norms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    pub res_l2: f64,
    pub res_h1: f64,
    /// ||∂x^{-1} Res||_{L²}; present only when Res is mean-free.
    pub ires_l2: f64,
    pub ires_h1: f64,
}

/// Residual norms over a time window at one ε.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualTrace {
    pub epsilon: f64,
    pub kind: String,
    pub level: Level,
    pub rows: Vec<ResidualRow>,
}

impl ResidualTrace {
    pub fn sup(&self, pick: impl Fn(&ResidualRow) -> f64) -> f64 {
        self.rows.iter().map(pick).fold(0.0, f64::max)
    }

    pub fn csv_header() -> &'static str {
        "epsilon,t,res_l2,res_h1,ires_l2,ires_h1\n"
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.epsilon, r.t, r.res_l2, r.res_h1, r.ires_l2, r.ires_h1
            ));
        }
        out
    }
}

/// Residual field of a synthesized jet: the spatial operator reuses the
/// solver right-hand side, the time part comes from the exact ∂t² jet.
pub fn residual_field(jet: &FieldJet, medium: &MediumOnGrid) -> Result<GridField> {
    let grid = jet.psi.grid;
    let state = SimState { t: 0.0, u: jet.psi.clone(), v: GridField::zeros(grid) };
    let (_, dv) = rhs(&state, medium, false);
    let mut res = dv;
    res.axpy(-1.0, &jet.psi_tt);

    // divergence form: the residual must be mean-free (a nonzero mean flags a
    // broken chain rule); the surviving mean is pure roundoff and is removed
    // before ∂x^{-1} is applied.
    let norm = spectral::l2_norm(&res);
    let mean = res.mean().abs() * grid.len().sqrt();
    if mean > 1e-10 * norm.max(1e-300) && mean > 1e-13 * jet.psi.sup_norm().max(1e-300) {
        return Err(Error::NonZeroMean { mean, norm });
    }
    let m = res.mean();
    for v in &mut res.values {
        *v -= m;
    }
    Ok(res)
}

/// Sample residual norms at `n_samples` times spanning [0, t_end].
pub fn residual_trace(
    approx: &mut Approximant,
    grid: SpectralGrid,
    medium: &MediumOnGrid,
    t_end: f64,
    n_samples: usize,
) -> Result<ResidualTrace> {
    assert!(n_samples >= 2);
    let mut rows = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let t = t_end * i as f64 / (n_samples - 1) as f64;
        let jet = approx.synthesize_jet(t, grid)?;
        let res = residual_field(&jet, medium)?;
        let ires = spectral::antiderivative(&res)?;
        rows.push(ResidualRow {
            t,
            res_l2: spectral::l2_norm(&res),
            res_h1: spectral::sobolev_norm(&res, 1.0),
            ires_l2: spectral::l2_norm(&ires),
            ires_h1: spectral::sobolev_norm(&ires, 1.0),
        });
    }
    Ok(ResidualTrace {
        epsilon: approx.epsilon,
        kind: approx.eq.kind().name().to_string(),
        level: approx.level,
        rows,
    })
}
