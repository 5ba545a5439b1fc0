//! Orbit geometry read off the constants of motion.
//!
//! A planar orbit (`θ = π/2`, `p_θ = 0`, `ℓ = ℓ_z`) obeys the generalized
//! conic equation
//!
//! ```text
//! cos((φ_z + m φ)/n) = (ℓ_z²/Tk(ξ) − 1) / √(2Eℓ_z² + 1 − κℓ_z⁴)
//! ```
//!
//! which for `κ = 0`, `β = 1`, `φ_z = 0` is the Kepler conic
//! `α/ξ = 1 + ε cos φ` with `α = ℓ_z²`, `ε² = 2Eℓ_z² + 1`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kappa::Curvature;
use crate::model::{energy_bounds, ModelParams, PhasePoint, CIRCULAR_TOL};

/// Negative discriminants down to this size are rounding at `E = E_min`.
const DISCRIMINANT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicParams {
    pub kappa: Curvature,
    /// `ε² = 2Eℓ_z² + 1`; negative for hyperbolic-space orbits close to
    /// circular.
    pub eccentricity_sq: f64,
    /// `√max(ε², 0)`.
    pub eccentricity: f64,
    /// `α = ℓ_z²`.
    pub semi_latus: f64,
    /// Coefficient of the cosine, `√(ε² − κα²)`; zero when the discriminant
    /// is negative.
    pub amplitude: f64,
    /// The discriminant `ε² − κα²` was negative and the amplitude clamped.
    pub clamped: bool,
}

pub fn conic_parameters(kappa: Curvature, energy: f64, lz: f64) -> Result<ConicParams> {
    if lz == 0.0 {
        return Err(Error::ZeroAzimuthalMomentum);
    }
    let alpha = lz * lz;
    let e_sq = 2.0 * energy * alpha + 1.0;
    let disc = e_sq - kappa.value() * alpha * alpha;
    Ok(ConicParams {
        kappa,
        eccentricity_sq: e_sq,
        eccentricity: e_sq.max(0.0).sqrt(),
        semi_latus: alpha,
        amplitude: disc.max(0.0).sqrt(),
        clamped: disc < 0.0,
    })
}

fn planar_amplitude(params: &ModelParams, energy: f64, lz: f64) -> Result<f64> {
    if lz == 0.0 {
        return Err(Error::ZeroAzimuthalMomentum);
    }
    let a = lz * lz;
    let disc = 2.0 * (energy - params.g) * a + 1.0 - params.kappa.value() * a * a;
    if disc < -DISCRIMINANT_SLACK {
        return Err(Error::InvalidDiscriminant(disc));
    }
    Ok(disc.max(0.0).sqrt())
}

/// `ξ(φ)` on the planar orbit of energy `E` and azimuthal momentum `ℓ_z`;
/// `None` where the orbit does not reach that angle.
pub fn planar_orbit_xi(params: &ModelParams, energy: f64, lz: f64, phi_z: f64, phi: f64) -> Result<Option<f64>> {
    let amp = planar_amplitude(params, energy, lz)?;
    let psi = (phi_z + params.m() as f64 * phi) / params.n() as f64;
    let den = 1.0 + amp * psi.cos();
    Ok(params.kappa.inverse_tk_ratio(lz * lz, den).filter(|&xi| params.check_xi(xi).is_ok()))
}

/// Polar angle on a 3D orbit whose angular momentum has `ℓ_y = 0`:
/// `cot θ = −(ℓ_x/ℓ_z) cos φ`.
pub fn theta_of_phi(l: f64, lz: f64, lx: f64, phi: f64) -> Result<f64> {
    if lz == 0.0 {
        return Err(Error::ZeroAzimuthalMomentum);
    }
    let perp_sq = l * l - lz * lz;
    if perp_sq <= CIRCULAR_TOL * l * l {
        return Err(Error::DegeneratePlanar);
    }
    let perp = perp_sq.sqrt();
    if (lx.abs() - perp).abs() > 1e-9 * l.max(1.0) {
        return Err(Error::InvalidParams(format!("|l_x| = {} must equal sqrt(l^2 - l_z^2) = {perp}", lx.abs())));
    }
    Ok(1f64.atan2(-(lx / lz) * phi.cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitClass {
    Circular,
    BoundedClosed,
    Unbounded,
}

impl std::fmt::Display for OrbitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OrbitClass::Circular => "circular",
            OrbitClass::BoundedClosed => "bounded_closed",
            OrbitClass::Unbounded => "unbounded",
        })
    }
}

pub fn classify_orbit(params: &ModelParams, energy: f64, l: f64) -> Result<OrbitClass> {
    if !energy.is_finite() {
        return Err(Error::InvalidParams(format!("energy {energy} must be finite")));
    }
    let bounds = match energy_bounds(params, l) {
        Ok(b) => b,
        Err(Error::NoBoundStates { .. }) => {
            let floor = -params.kappa.sqrt_abs() + params.g;
            return if energy > floor {
                Ok(OrbitClass::Unbounded)
            } else {
                Err(Error::NoSolution { energy, e_min: floor })
            };
        }
        Err(e) => return Err(e),
    };
    if (energy - bounds.e_min).abs() <= CIRCULAR_TOL * bounds.e_min.abs().max(1.0) {
        return Ok(OrbitClass::Circular);
    }
    if energy < bounds.e_min {
        return Err(Error::NoSolution { energy, e_min: bounds.e_min });
    }
    Ok(if bounds.is_bounded(energy) { OrbitClass::BoundedClosed } else { OrbitClass::Unbounded })
}

/// One sample of a planar orbit in polar coordinates `(ξ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitPoint {
    pub phi: f64,
    pub xi: Option<f64>,
    /// `ξ cos φ`, NaN in a gap.
    pub x: f64,
    /// `ξ sin φ`, NaN in a gap.
    pub y: f64,
}

pub fn orbit_points(params: &ModelParams, energy: f64, lz: f64, phi_z: f64, phis: &[f64]) -> Result<Vec<OrbitPoint>> {
    phis.iter()
        .map(|&phi| {
            let xi = planar_orbit_xi(params, energy, lz, phi_z, phi)?;
            let (x, y) = xi.map_or((f64::NAN, f64::NAN), |r| (r * phi.cos(), r * phi.sin()));
            Ok(OrbitPoint { phi, xi, x, y })
        })
        .collect()
}

/// `count` angles covering `[0, 2πn]`, the range after which a planar orbit
/// of `β = m/n` closes.
pub fn closing_phi_grid(params: &ModelParams, count: usize) -> Vec<f64> {
    let end = TAU * params.n() as f64;
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|j| end * j as f64 / (count - 1) as f64).collect(),
    }
}

/// `(Sk sin θ cos φ, Sk sin θ sin φ, Sk cos θ)`: the spherical-coordinate
/// picture with `r = Sk(ξ)`. A chart picture, not an embedding of the
/// curved manifold.
pub fn chart_cartesian(params: &ModelParams, p: &PhasePoint) -> [f64; 3] {
    let r = params.kappa.sk(p.xi);
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    [r * st * cp, r * st * sp, r * ct]
}
