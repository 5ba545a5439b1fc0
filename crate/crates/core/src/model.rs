//! The Perlick type-I Hamiltonian.
//!
//! In the unified chart `(ξ, θ, φ)` the Hamiltonian reads
//!
//! ```text
//! H = β² p_ξ²/2 + L²/(2 Sk²(ξ)) − 1/Tk(ξ) + G,    L² = p_θ² + p_φ²/sin²θ
//! ```
//!
//! and is related to the spherical-coordinate Hamiltonians
//!
//! ```text
//! H̃± = β²(1 + K r²) p_r²/2 + L²/(2r²) + G ± √(1 + K r²)/r
//! ```
//!
//! by the canonical change `K = −κ`, `r = Sk(ξ)`, `p_r = p_ξ/Ck(ξ)`. On the
//! sphere (`κ > 0`) the north hemisphere `ξ < π/(2√κ)` maps onto `H̃⁻` and the
//! south hemisphere onto `H̃⁺`; for `κ <= 0` only `H̃⁻` occurs.
//!
//! Ranges are expressed in the `κ` convention: for `κ > 0` the chart is
//! `0 < ξ < π/√κ` and `0 < r <= 1/√κ`, for `κ <= 0` both `ξ` and `r` range
//! over the positive half-line.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kappa::{Curvature, TK_POLE_EPS};

/// Distance kept from the chart boundaries `ξ = 0`, `ξ = π/√κ`, `θ ∈ {0, π}`.
pub const DOMAIN_MARGIN: f64 = 1e-9;

/// Cells of the logarithmic bracketing grid used by [`turning_points`].
const BRACKET_CELLS: usize = 64;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The rational exponent `β = m/n`, stored reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Beta {
    m: u32,
    n: u32,
}

impl Beta {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidParams(format!("beta = {m}/{n}: m and n must be >= 1")));
        }
        let g = gcd(m, n);
        Ok(Beta { m: m / g, n: n / g })
    }

    pub fn m(self) -> u32 {
        self.m
    }

    pub fn n(self) -> u32 {
        self.n
    }

    pub fn value(self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

impl FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParams(format!("cannot parse beta '{s}', expected 'm/n'"));
        let (m, n) = match s.split_once('/') {
            Some((m, n)) => (m.trim(), n.trim()),
            None => (s.trim(), "1"),
        };
        let m: u32 = m.parse().map_err(|_| bad())?;
        let n: u32 = n.parse().map_err(|_| bad())?;
        Beta::new(m, n)
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.m, self.n)
    }
}

/// Defining parameters: curvature, `β = m/n` and the additive offset `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: Curvature,
    pub beta: Beta,
    /// Energy offset. Carried through the Hamiltonians; the factorization
    /// objects require `G = 0`.
    pub g: f64,
}

impl ModelParams {
    pub fn new(kappa: f64, m: u32, n: u32) -> Result<Self> {
        Ok(ModelParams { kappa: Curvature::new(kappa)?, beta: Beta::new(m, n)?, g: 0.0 })
    }

    pub fn with_beta(kappa: f64, beta: Beta) -> Result<Self> {
        Ok(ModelParams { kappa: Curvature::new(kappa)?, beta, g: 0.0 })
    }

    pub fn with_offset(mut self, g: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::InvalidParams(format!("G must be finite, got {g}")));
        }
        self.g = g;
        Ok(self)
    }

    pub fn m(&self) -> u32 {
        self.beta.m
    }

    pub fn n(&self) -> u32 {
        self.beta.n
    }

    pub fn beta(&self) -> f64 {
        self.beta.value()
    }

    pub(crate) fn require_zero_offset(&self) -> Result<()> {
        if self.g != 0.0 {
            return Err(Error::NonZeroOffset(self.g));
        }
        Ok(())
    }

    /// Rejects `ξ` outside the chart, keeping [`DOMAIN_MARGIN`] from its ends.
    pub fn check_xi(&self, xi: f64) -> Result<()> {
        if !(xi > DOMAIN_MARGIN) {
            return Err(Error::Domain(format!("xi = {xi} must be > 0")));
        }
        if let Some(max) = self.kappa.xi_max() {
            if !(xi < max - DOMAIN_MARGIN) {
                return Err(Error::Domain(format!("xi = {xi} must be < pi/sqrt(kappa) = {max}")));
            }
        }
        Ok(())
    }

    pub fn check_point(&self, p: &PhasePoint) -> Result<()> {
        self.check_xi(p.xi)?;
        if !p.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate in {p:?}")));
        }
        if p.p_phi != 0.0 && !(p.theta > DOMAIN_MARGIN && p.theta < PI - DOMAIN_MARGIN) {
            return Err(Error::Domain(format!("theta = {} must lie strictly inside (0, pi)", p.theta)));
        }
        Ok(())
    }
}

/// Canonical state `(ξ, θ, φ, p_ξ, p_θ, p_φ)` in the unified chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub xi: f64,
    pub theta: f64,
    pub phi: f64,
    pub p_xi: f64,
    pub p_theta: f64,
    pub p_phi: f64,
}

impl PhasePoint {
    pub fn new(xi: f64, theta: f64, phi: f64, p_xi: f64, p_theta: f64, p_phi: f64) -> Self {
        PhasePoint { xi, theta, phi, p_xi, p_theta, p_phi }
    }

    /// Coordinates first, then momenta: `[ξ, θ, φ, p_ξ, p_θ, p_φ]`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.xi, self.theta, self.phi, self.p_xi, self.p_theta, self.p_phi]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        PhasePoint { xi: a[0], theta: a[1], phi: a[2], p_xi: a[3], p_theta: a[4], p_phi: a[5] }
    }

    /// `L² = H_θφ = p_θ² + p_φ²/sin²θ`.
    pub fn l_sq(&self) -> f64 {
        if self.p_phi == 0.0 {
            return self.p_theta * self.p_theta;
        }
        let s = self.theta.sin();
        self.p_theta * self.p_theta + self.p_phi * self.p_phi / (s * s)
    }
}

/// Which of `H̃∓` describes an `(r, p_r)` point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    /// `ξ < π/(2√κ)` (all of the chart for `κ <= 0`): potential sign `−`.
    North,
    /// `ξ > π/(2√κ)`, sphere only: potential sign `+`.
    South,
}

impl Hemisphere {
    pub fn potential_sign(self) -> f64 {
        match self {
            Hemisphere::North => -1.0,
            Hemisphere::South => 1.0,
        }
    }
}

/// State in the spherical-coordinate charts of `H̃±`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RPoint {
    pub r: f64,
    pub p_r: f64,
    pub theta: f64,
    pub phi: f64,
    pub p_theta: f64,
    pub p_phi: f64,
    pub hemisphere: Hemisphere,
}

impl RPoint {
    pub fn l_sq(&self) -> f64 {
        PhasePoint::new(1.0, self.theta, self.phi, 0.0, self.p_theta, self.p_phi).l_sq()
    }
}

/// The unified Hamiltonian `H(ξ, θ, φ)`.
pub fn hamiltonian_xi(params: &ModelParams, p: &PhasePoint) -> Result<f64> {
    params.check_point(p)?;
    let kappa = params.kappa;
    let beta = params.beta();
    let sk = kappa.sk(p.xi);
    Ok(0.5 * beta * beta * p.p_xi * p.p_xi + 0.5 * p.l_sq() / (sk * sk) - kappa.cot_k(p.xi) + params.g)
}

/// `H̃±(r, θ, φ)`, the sign taken from the hemisphere tag.
pub fn hamiltonian_r(params: &ModelParams, p: &RPoint) -> Result<f64> {
    check_r_point(params, p)?;
    let k = params.kappa.metric_k();
    let root_arg = 1.0 + k * p.r * p.r;
    if root_arg < 0.0 {
        return Err(Error::ImaginaryRoot { value: root_arg });
    }
    let beta = params.beta();
    Ok(0.5 * beta * beta * root_arg * p.p_r * p.p_r
        + 0.5 * p.l_sq() / (p.r * p.r)
        + params.g
        + p.hemisphere.potential_sign() * root_arg.sqrt() / p.r)
}

fn check_r_point(params: &ModelParams, p: &RPoint) -> Result<()> {
    if !(p.r > 0.0) {
        return Err(Error::Domain(format!("r = {} must be > 0", p.r)));
    }
    if params.kappa.value() <= 0.0 && p.hemisphere == Hemisphere::South {
        return Err(Error::Domain("south hemisphere exists only for kappa > 0".into()));
    }
    if p.p_phi != 0.0 && !(p.theta > DOMAIN_MARGIN && p.theta < PI - DOMAIN_MARGIN) {
        return Err(Error::Domain(format!("theta = {} must lie strictly inside (0, pi)", p.theta)));
    }
    Ok(())
}

/// `(ξ, p_ξ) → (r, p_r) = (Sk(ξ), p_ξ/Ck(ξ))`. Fails on the equator of the
/// sphere where `p_r` is undefined.
pub fn to_r_coords(params: &ModelParams, p: &PhasePoint) -> Result<RPoint> {
    params.check_point(p)?;
    let kappa = params.kappa;
    let ck = kappa.ck(p.xi);
    if ck.abs() < TK_POLE_EPS {
        return Err(Error::Pole { kappa: kappa.value(), u: p.xi });
    }
    Ok(RPoint {
        r: kappa.sk(p.xi),
        p_r: p.p_xi / ck,
        theta: p.theta,
        phi: p.phi,
        p_theta: p.p_theta,
        p_phi: p.p_phi,
        hemisphere: if ck > 0.0 { Hemisphere::North } else { Hemisphere::South },
    })
}

/// Inverse of [`to_r_coords`]; the hemisphere tag selects the branch of the
/// 2-to-1 map on the sphere.
pub fn to_xi_coords(params: &ModelParams, p: &RPoint) -> Result<PhasePoint> {
    check_r_point(params, p)?;
    let kappa = params.kappa;
    let k = kappa.value();
    let xi = if k > 0.0 {
        let s = k.sqrt();
        let x = s * p.r;
        if x > 1.0 {
            return Err(Error::Domain(format!("r = {} exceeds 1/sqrt(kappa)", p.r)));
        }
        let north = x.asin() / s;
        match p.hemisphere {
            Hemisphere::North => north,
            Hemisphere::South => PI / s - north,
        }
    } else if k == 0.0 {
        p.r
    } else {
        let s = (-k).sqrt();
        (s * p.r).asinh() / s
    };
    let ck = kappa.ck(xi);
    if ck.abs() < TK_POLE_EPS {
        return Err(Error::Pole { kappa: k, u: xi });
    }
    Ok(PhasePoint::new(xi, p.theta, p.phi, p.p_r * ck, p.p_theta, p.p_phi))
}

/// `V_eff(ξ) = ℓ²/(2 Sk²(ξ)) − 1/Tk(ξ) + G`.
pub fn effective_potential(params: &ModelParams, ell: f64, xi: f64) -> Result<f64> {
    if !(ell >= 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParams(format!("ell = {ell} must be finite and >= 0")));
    }
    params.check_xi(xi)?;
    let sk = params.kappa.sk(xi);
    Ok(0.5 * ell * ell / (sk * sk) - params.kappa.cot_k(xi) + params.g)
}

/// `dV_eff/dξ = (1 − ℓ² Ck/Sk)/Sk²`.
pub fn effective_force(params: &ModelParams, ell: f64, xi: f64) -> f64 {
    let kappa = params.kappa;
    let sk = kappa.sk(xi);
    (1.0 - ell * ell * kappa.cot_k(xi)) / (sk * sk)
}

/// Energy window for bounded radial motion at fixed `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBounds {
    /// Minimum of `V_eff`: the circular-orbit energy `−½(1/ℓ² − κℓ²) + G`.
    pub e_min: f64,
    /// Escape threshold `−√|κ| + G` (κ < 0), `G` (κ = 0); none on the sphere.
    pub e_escape: Option<f64>,
    /// Location of the minimum, `Tk(ξ*) = ℓ²`.
    pub xi_circular: f64,
}

impl EnergyBounds {
    pub fn is_bounded(&self, energy: f64) -> bool {
        energy >= self.e_min && self.e_escape.is_none_or(|esc| energy < esc)
    }
}

pub fn energy_bounds(params: &ModelParams, ell: f64) -> Result<EnergyBounds> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParams(format!("ell = {ell}: a positive angular momentum is required")));
    }
    let kappa = params.kappa;
    let k = kappa.value();
    let l2 = ell * ell;
    let xi_circular = kappa.inverse_tk(l2).ok_or(Error::NoBoundStates { kappa: k, ell })?;
    let e_min = -0.5 * (1.0 / l2 - k * l2) + params.g;
    let e_escape = if k < 0.0 {
        Some(-kappa.sqrt_abs() + params.g)
    } else if k == 0.0 {
        Some(params.g)
    } else {
        None
    };
    Ok(EnergyBounds { e_min, e_escape, xi_circular })
}

/// Radial turning points `E = V_eff(ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    /// Sorted roots.
    pub roots: Vec<f64>,
    /// `E = E_min`: a single root of multiplicity two (circular orbit).
    pub degenerate: bool,
    /// Two roots enclosing the motion.
    pub bounded: bool,
}

/// Relative tolerance under which an energy counts as the circular one.
pub const CIRCULAR_TOL: f64 = 1e-12;

pub fn turning_points(params: &ModelParams, ell: f64, energy: f64) -> Result<TurningPoints> {
    if !energy.is_finite() {
        return Err(Error::InvalidParams(format!("energy {energy} must be finite")));
    }
    let v = |xi: f64| effective_potential(params, ell, xi).map(|v| v - energy);
    let bounds = match energy_bounds(params, ell) {
        Ok(b) => b,
        Err(Error::NoBoundStates { .. }) => {
            // Monotone V_eff decreasing to −√|κ|: only a scattering root.
            let floor = -params.kappa.sqrt_abs() + params.g;
            if energy <= floor {
                return Err(Error::NoSolution { energy, e_min: floor });
            }
            let mut hi = 1.0;
            while v(hi)? >= 0.0 {
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::Domain("no turning point found".into()));
                }
            }
            let lo = shrink_downward(&v, hi)?;
            let root = bracketed_root(&v, lo, hi)?;
            return Ok(TurningPoints { roots: vec![root], degenerate: false, bounded: false });
        }
        Err(e) => return Err(e),
    };

    let xi_c = bounds.xi_circular;
    if (energy - bounds.e_min).abs() <= CIRCULAR_TOL * bounds.e_min.abs().max(1.0) {
        return Ok(TurningPoints { roots: vec![xi_c], degenerate: true, bounded: true });
    }
    if energy < bounds.e_min {
        return Err(Error::NoSolution { energy, e_min: bounds.e_min });
    }

    let lo = shrink_downward(&v, xi_c)?;
    let inner = bracketed_root(&v, lo, xi_c)?;
    if !bounds.is_bounded(energy) {
        return Ok(TurningPoints { roots: vec![inner], degenerate: false, bounded: false });
    }
    let hi = grow_upward(&v, xi_c, params.kappa.xi_max())?;
    let outer = bracketed_root(&v, xi_c, hi)?;
    Ok(TurningPoints { roots: vec![inner, outer], degenerate: false, bounded: true })
}

/// Halves `ξ` from `start` until `V_eff − E > 0`.
fn shrink_downward(v: &impl Fn(f64) -> Result<f64>, start: f64) -> Result<f64> {
    let mut lo = start;
    for _ in 0..200 {
        lo *= 0.5;
        if v(lo)? > 0.0 {
            return Ok(lo);
        }
    }
    Err(Error::Domain("no inner turning point found".into()))
}

/// Moves `ξ` outward from `start` until `V_eff − E > 0`: doubling on the
/// half-line, halving the remaining gap to `π/√κ` on the sphere.
fn grow_upward(v: &impl Fn(f64) -> Result<f64>, start: f64, max: Option<f64>) -> Result<f64> {
    let mut hi = start;
    for j in 1..200 {
        hi = match max {
            Some(max) => {
                let cand = start + (max - start) * (1.0 - 0.5f64.powi(j));
                if cand >= max - 2.0 * DOMAIN_MARGIN {
                    break;
                }
                cand
            }
            None => hi * 2.0,
        };
        if v(hi)? > 0.0 {
            return Ok(hi);
        }
    }
    Err(Error::Domain("no outer turning point found".into()))
}

/// Locates the sign change of `v` on a logarithmic grid over `[lo, hi]`,
/// then bisects it down to floating-point resolution.
fn bracketed_root(v: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    let ratio = (hi / lo).powf(1.0 / BRACKET_CELLS as f64);
    let mut a = lo;
    let mut fa = v(a)?;
    let mut cell = None;
    for i in 1..=BRACKET_CELLS {
        let b = if i == BRACKET_CELLS { hi } else { lo * ratio.powi(i as i32) };
        let fb = v(b)?;
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            cell = Some((a, fa, b));
            break;
        }
        a = b;
        fa = fb;
    }
    let (mut a, mut fa, mut b) =
        cell.ok_or_else(|| Error::Domain(format!("no sign change of E - V_eff on [{lo}, {hi}]")))?;
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = v(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let fb = v(b)?;
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}
