use thiserror::Error;

use crate::model::PhasePoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("Tk pole: |Ck({u})| < 1e-14 for kappa = {kappa}")]
    Pole { kappa: f64, u: f64 },

    #[error("point outside the chart domain: {0}")]
    Domain(String),

    #[error("1 + K r^2 = {value} < 0: square root is imaginary")]
    ImaginaryRoot { value: f64 },

    #[error("energy {energy} lies below the minimum {e_min}: no turning points")]
    NoSolution { energy: f64, e_min: f64 },

    #[error("effective potential has no minimum for kappa = {kappa}, ell = {ell}: no bound states")]
    NoBoundStates { kappa: f64, ell: f64 },

    #[error("angular momentum vanishes")]
    ZeroAngularMomentum,

    #[error("p_phi vanishes: D± and Y± are undefined")]
    ZeroAzimuthalMomentum,

    #[error("planar state (ell = ell_z): A± vanish and the phase of X± is undefined")]
    DegeneratePlanar,

    #[error("state is not planar (theta = pi/2, p_theta = 0 required)")]
    NonPlanar,

    #[error("constants of motion require G = 0 (got {0})")]
    NonZeroOffset(f64),

    #[error("finite-difference stencil leaves the domain in coordinate {coordinate}: {reason}")]
    Stencil { coordinate: usize, reason: String },

    #[error("empty sample set")]
    EmptySample,

    #[error("step size collapsed near a singular surface at t = {t}")]
    Singularity { t: f64, last: PhasePoint },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize, last: PhasePoint },

    #[error("not enough periods: {0}")]
    InsufficientPeriods(String),

    #[error("energy {energy} is not below the escape threshold {escape}: motion is unbounded")]
    Unbounded { energy: f64, escape: f64 },

    #[error("circular orbit: no oscillation to measure")]
    CircularOrbit,

    #[error("negative discriminant 2E l_z^2 + 1 - kappa l_z^4 = {0}")]
    InvalidDiscriminant(f64),

    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },
}
