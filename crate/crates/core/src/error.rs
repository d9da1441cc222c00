//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by spectral primitives, solvers and the experiment driver.
#[derive(Error, Debug)]
pub enum Error {
    /// An operation requiring a mean-free field got one with a nonzero mean.
    #[error("field has nonzero mean {mean:.3e} (norm {norm:.3e}); project first")]
    NonZeroMean { mean: f64, norm: f64 },

    /// The first two bands come closer than the degeneracy tolerance inside
    /// the requested gap region.
    #[error("bands 1 and 2 degenerate at l = {l} (gap {gap:.3e})")]
    DegenerateBranch { l: f64, gap: f64 },

    /// A band projection or correction was requested beyond the computed
    /// spectral gap.
    #[error("requested half-width {requested} exceeds gap margin {margin}")]
    GapViolation { requested: f64, margin: f64 },

    /// Finite-difference stencil for the dispersion derivatives does not fit
    /// inside the spectral gap.
    #[error("dispersion stencil 2h = {stencil} exceeds gap margin {margin}")]
    StencilOutsideGap { stencil: f64, margin: f64 },

    /// A time integration left the configured norm ceiling.
    #[error("solution norm {norm:.3e} exceeded ceiling {ceiling:.3e} at t = {t:.3}")]
    BlowUp { t: f64, norm: f64, ceiling: f64 },

    /// Burgers integration was asked to run past the shock guard.
    #[error("t_end {t_end} exceeds shock guard {guard} (T_shock {t_shock})")]
    ShockTooClose { t_end: f64, guard: f64, t_shock: f64 },

    /// The Whitham flux derivative lost positivity.
    #[error("hyperbolicity lost at T = {t:.4}: min flux derivative {min:.3e}")]
    HyperbolicityLoss { t: f64, min: f64 },

    /// The slaved-correction fixed point failed to contract.
    #[error("correction fixed point not contracting (ratio {ratio:.3} after {iters} iterations)")]
    NoContraction { ratio: f64, iters: usize },

    /// The energy operator B lost positive definiteness.
    #[error("energy operator not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    /// A log-log fit was given a non-positive value.
    #[error("non-positive value {value:.3e} in log-log fit")]
    NonPositiveValue { value: f64 },

    /// Amplitude spectrum leaks past the Bloch cutoff.
    #[error("amplitude spectrum leaks {leak:.3e} of its mass past the delta0/4 cutoff")]
    CutoffViolation { leak: f64 },

    /// A complex field expected to be real has a too-large imaginary part.
    #[error("field expected real has imaginary residue {residue:.3e}")]
    NotReal { residue: f64 },

    /// Invalid configuration.
    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
