//! Factorization objects and the complex constants of motion.
//!
//! With `ℓ = √H_θφ` and `ℓ_z = √H_φ = |p_φ|` evaluated on the full phase
//! point:
//!
//! ```text
//! B± = (∓ iβ p_ξ + ℓ/Tk(ξ) − 1/ℓ)/√2       H   = B⁺B⁻ + λ_ξ,  λ_ξ = −½(1/ℓ² − κℓ²)
//! A± = ∓ i sinθ p_θ + ℓ cosθ               −ℓ_z² = A⁺A⁻ − ℓ²
//! C± = ∓ i p_θ + ℓ_z cotθ                  H_θφ = C⁺C⁻ + ℓ_z²
//! D± = ℓ_z e^{∓iφ}                         H_φ  = D⁺D⁻
//!
//! X± = (A±)^m (B∓)^n,   Y± = C± D∓,   Z± = (D±)^m (B∓)^n  (plane θ = π/2)
//! ```
//!
//! The `−` members are complex conjugates of the `+` members. `Y±` equals
//! `−L_z(L_x ± iL_y)` for `p_φ > 0`; states with `p_φ < 0` are mirror images
//! and are not distinguished by the `|p_φ|` convention.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PhasePoint};

/// Tolerance on `θ − π/2` and `p_θ` for a state to count as planar.
pub const PLANAR_TOL: f64 = 1e-12;

/// Selects the `+` or `−` member of a conjugate pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// Wraps an angle into `[−π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Value of a complex constant of motion, `q e^{±iα}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexConstant {
    pub re: f64,
    pub im: f64,
}

impl ComplexConstant {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Phase in `[−π, π)`.
    pub fn phase(&self) -> f64 {
        wrap_angle(self.im.atan2(self.re))
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<Complex64> for ComplexConstant {
    fn from(z: Complex64) -> Self {
        ComplexConstant { re: z.re, im: z.im }
    }
}

/// Cartesian components of the angular momentum at a phase point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularMomentum {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    /// `H_θφ = p_θ² + p_φ²/sin²θ`.
    pub l_sq: f64,
}

impl AngularMomentum {
    /// Azimuth of the vector `(L_x, L_y)` in `[−π, π)`.
    pub fn azimuth(&self) -> f64 {
        wrap_angle(self.ly.atan2(self.lx))
    }
}

pub fn angular_momentum(p: &PhasePoint) -> AngularMomentum {
    let (sp, cp) = p.phi.sin_cos();
    let cot = p.theta.cos() / p.theta.sin();
    AngularMomentum {
        lx: -sp * p.p_theta - cot * cp * p.p_phi,
        ly: cp * p.p_theta - cot * sp * p.p_phi,
        lz: p.p_phi,
        l_sq: p.l_sq(),
    }
}

fn ell_of(p: &PhasePoint) -> Result<f64> {
    let l = p.l_sq().sqrt();
    if !(l > 0.0) {
        return Err(Error::ZeroAngularMomentum);
    }
    Ok(l)
}

/// `λ_ξ = −½(1/ℓ² − κℓ²)`, the factorization constant of `H_ξ`.
pub fn lambda_xi(params: &ModelParams, ell: f64) -> f64 {
    let l2 = ell * ell;
    -0.5 * (1.0 / l2 - params.kappa.value() * l2)
}

/// Shift function `B±` with an explicit angular momentum value.
pub fn b_pm_with_ell(params: &ModelParams, sign: Sign, ell: f64, p: &PhasePoint) -> Complex64 {
    let re = ell * params.kappa.cot_k(p.xi) - 1.0 / ell;
    let im = -sign.value() * params.beta() * p.p_xi;
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Shift functions `B±` of the radial Hamiltonian, `ℓ = √L²(p)`.
pub fn b_pm(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    params.require_zero_offset()?;
    params.check_point(p)?;
    Ok(b_pm_with_ell(params, sign, ell_of(p)?, p))
}

/// Ladder functions `A±` of the polar Hamiltonian.
pub fn a_pm(sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    let ell = ell_of(p)?;
    let (s, c) = p.theta.sin_cos();
    Ok(Complex64::new(ell * c, -sign.value() * s * p.p_theta))
}

/// Shift functions `C±` of the polar Hamiltonian, `ℓ_z = |p_φ|`.
pub fn c_pm(sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    if !(p.theta > 0.0 && p.theta < PI) {
        return Err(Error::Domain(format!("theta = {} outside (0, pi)", p.theta)));
    }
    let lz = p.p_phi.abs();
    Ok(Complex64::new(lz * p.theta.cos() / p.theta.sin(), -sign.value() * p.p_theta))
}

/// Ladder functions `D± = |p_φ| e^{∓iφ}`.
pub fn d_pm(sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    if p.p_phi == 0.0 {
        return Err(Error::ZeroAzimuthalMomentum);
    }
    Ok(Complex64::from_polar(p.p_phi.abs(), -sign.value() * p.phi))
}

/// Integer power by repeated multiplication (no branch cuts).
pub(crate) fn cpow(z: Complex64, k: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..k {
        acc *= z;
    }
    acc
}

/// `X± = (A±)^m (B∓)^n`, defined off the plane (`ℓ > ℓ_z`).
pub fn x_pm(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<ComplexConstant> {
    Ok(x_pm_complex(params, sign, p)?.into())
}

pub(crate) fn x_pm_complex(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    let l_sq = p.l_sq();
    let lz_sq = p.p_phi * p.p_phi;
    if l_sq - lz_sq <= PLANAR_TOL * l_sq.max(1.0) {
        return Err(Error::DegeneratePlanar);
    }
    x_pm_raw(params, sign, p)
}

/// `X±` without the planar-degeneracy guard: vanishes on the plane.
pub(crate) fn x_pm_raw(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    let a = a_pm(sign, p)?;
    let b = b_pm(params, sign.flip(), p)?;
    Ok(cpow(a, params.m()) * cpow(b, params.n()))
}

/// `q_x = (ℓ² − ℓ_z²)^{m/2} (E − λ_ξ)^{n/2}`.
pub fn q_x(params: &ModelParams, energy: f64, ell: f64, ell_z: f64) -> f64 {
    let a = (ell * ell - ell_z * ell_z).max(0.0);
    let b = (energy - lambda_xi(params, ell)).max(0.0);
    a.powf(0.5 * params.m() as f64) * b.powf(0.5 * params.n() as f64)
}

/// `X±` with the powers expanded by the binomial theorem, real and
/// imaginary parts assembled from even and odd terms separately. Agrees with
/// [`x_pm`]; exposes the polynomial structure of `Re X±`, `Im X±`.
pub fn x_pm_expanded(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<ComplexConstant> {
    let a = a_pm(sign, p)?;
    let b = b_pm(params, sign.flip(), p)?;
    let (ar, ai) = binomial_power(a.re, a.im, params.m());
    let (br, bi) = binomial_power(b.re, b.im, params.n());
    Ok(ComplexConstant { re: ar * br - ai * bi, im: ar * bi + ai * br })
}

/// `(u + iv)^k = Σ_j C(k,j) u^{k−j} (iv)^j`, split into real and imaginary parts.
fn binomial_power(u: f64, v: f64, k: u32) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let term = binom * u.powi((k - j) as i32) * v.powi(j as i32);
        match j % 4 {
            0 => re += term,
            1 => im += term,
            2 => re -= term,
            _ => im -= term,
        }
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    (re, im)
}

/// `Y± = C± D∓`.
pub fn y_pm(sign: Sign, p: &PhasePoint) -> Result<ComplexConstant> {
    Ok(y_pm_complex(sign, p)?.into())
}

pub(crate) fn y_pm_complex(sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    Ok(c_pm(sign, p)? * d_pm(sign.flip(), p)?)
}

/// `−L_z (L_x ± i L_y)`, the angular-momentum form of `Y±`.
pub fn y_from_angular_momentum(sign: Sign, p: &PhasePoint) -> Complex64 {
    let l = angular_momentum(p);
    -l.lz * Complex64::new(l.lx, sign.value() * l.ly)
}

/// `q_y = ℓ_z √(ℓ² − ℓ_z²)`.
pub fn q_y(ell: f64, ell_z: f64) -> f64 {
    ell_z.abs() * (ell * ell - ell_z * ell_z).max(0.0).sqrt()
}

pub fn is_planar(p: &PhasePoint) -> bool {
    (p.theta - PI / 2.0).abs() <= PLANAR_TOL && p.p_theta.abs() <= PLANAR_TOL
}

/// `Z± = (D±)^m (B∓)^n` for motion in the plane `θ = π/2`, with `ℓ_z`
/// in place of `ℓ` inside `B∓`.
pub fn z_pm(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<ComplexConstant> {
    if !is_planar(p) {
        return Err(Error::NonPlanar);
    }
    Ok(z_pm_complex(params, sign, p)?.into())
}

/// `Z±` without the planarity check, as a function on full phase space.
pub(crate) fn z_pm_complex(params: &ModelParams, sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    params.require_zero_offset()?;
    params.check_point(p)?;
    let d = d_pm(sign, p)?;
    let b = b_pm_with_ell(params, sign.flip(), p.p_phi.abs(), p);
    Ok(cpow(d, params.m()) * cpow(b, params.n()))
}

/// `q_z = ℓ_z^m (E − λ_ξ(ℓ_z))^{n/2}`.
pub fn q_z(params: &ModelParams, energy: f64, ell_z: f64) -> f64 {
    let b = (energy - lambda_xi(params, ell_z)).max(0.0);
    ell_z.abs().powi(params.m() as i32) * b.powf(0.5 * params.n() as f64)
}

/// Cartesian position, momentum and the Runge–Lenz vector `𝓐 = p × L − r̂`
/// of the flat chart (`r = ξ`). Meaningful as a constant only for `κ = 0`,
/// `β = 1`.
pub fn runge_lenz(p: &PhasePoint) -> [f64; 3] {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let r_hat = [st * cp, st * sp, ct];
    let e_theta = [ct * cp, ct * sp, -st];
    let e_phi = [-sp, cp, 0.0];
    let r = p.xi;
    let mom: [f64; 3] =
        std::array::from_fn(|i| p.p_xi * r_hat[i] + p.p_theta / r * e_theta[i] + p.p_phi / (r * st) * e_phi[i]);
    let pos = r_hat.map(|c| r * c);
    let l = cross(pos, mom);
    let pl = cross(mom, l);
    std::array::from_fn(|i| pl[i] - r_hat[i])
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// `𝓐_z/√2 ± i (L × 𝓐)_z/(√2 ℓ)`: the flat `β = 1` form of `X±`.
pub fn x_from_runge_lenz(sign: Sign, p: &PhasePoint) -> Result<Complex64> {
    let ell = ell_of(p)?;
    let a = runge_lenz(p);
    let l = angular_momentum(p);
    let lxa = cross([l.lx, l.ly, l.lz], a);
    Ok(Complex64::new(a[2], sign.value() * lxa[2] / ell) * FRAC_1_SQRT_2)
}

/// `𝓐_x/√2 ∓ i 𝓐_y/√2`: the flat `β = 1` form of `Z±`.
pub fn z_from_runge_lenz(sign: Sign, p: &PhasePoint) -> Complex64 {
    let a = runge_lenz(p);
    Complex64::new(a[0], -sign.value() * a[1]) * FRAC_1_SQRT_2
}

/// The four phase functions `a, b, c, d`: arguments of `A⁺, B⁺, C⁺, D⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseAngles {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

pub fn phase_angles(params: &ModelParams, p: &PhasePoint) -> Result<PhaseAngles> {
    let arg = |z: Complex64| wrap_angle(z.arg());
    Ok(PhaseAngles {
        a: arg(a_pm(Sign::Plus, p)?),
        b: arg(b_pm(params, Sign::Plus, p)?),
        c: arg(c_pm(Sign::Plus, p)?),
        d: arg(d_pm(Sign::Plus, p)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn params(kappa: f64, m: u32, n: u32) -> ModelParams {
        ModelParams::new(kappa, m, n).unwrap()
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
        let c = ComplexConstant { re: -1.0, im: 0.0 };
        assert_eq!(c.phase(), -PI);
    }

    #[test]
    fn b_is_real_at_turning_point() {
        let p = PhasePoint::new(0.8, 1.0, 0.3, 0.0, 0.2, 0.5);
        let b = b_pm(&params(-1.0, 1, 1), Sign::Plus, &p).unwrap();
        assert_eq!(b.im, 0.0);
        let bm = b_pm(&params(-1.0, 1, 1), Sign::Minus, &p).unwrap();
        assert_eq!(b, bm.conj());
    }

    #[test]
    fn b_vanishes_on_flat_circular_orbit() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.0, 0.0, 0.0, 1.0);
        let b = b_pm(&params(0.0, 1, 1), Sign::Plus, &p).unwrap();
        assert_abs_diff_eq!(b.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn b_errors() {
        let p = PhasePoint::new(1.0, 1.0, 0.0, 0.5, 0.0, 0.0);
        assert!(matches!(b_pm(&params(0.0, 1, 1), Sign::Plus, &p), Err(Error::ZeroAngularMomentum)));
        let p = PhasePoint::new(1.0, 1.0, 0.0, 0.5, 0.1, 0.2);
        let shifted = params(0.0, 1, 1).with_offset(0.5).unwrap();
        assert!(matches!(b_pm(&shifted, Sign::Plus, &p), Err(Error::NonZeroOffset(_))));
    }

    #[test]
    fn a_vanishes_in_the_plane() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.0, 0.3, 0.0, 0.7);
        assert_abs_diff_eq!(a_pm(Sign::Plus, &p).unwrap().norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(x_pm(&params(0.0, 1, 1), Sign::Plus, &p), Err(Error::DegeneratePlanar)));
    }

    #[test]
    fn a_at_polar_turning_point() {
        // ℓ² = ℓz²/sin²θ_t with p_θ = 0
        let (ell, lz) = (0.25f64, 0.1f64);
        let theta_t = (lz / ell).asin();
        let p = PhasePoint::new(1.0, theta_t, 0.0, 0.0, 0.0, lz);
        let a = a_pm(Sign::Plus, &p).unwrap();
        assert_eq!(a.im, 0.0);
        assert_abs_diff_eq!(a.norm(), ell * theta_t.cos().abs(), epsilon = 1e-15);
    }

    #[test]
    fn c_and_d_examples() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.4, 0.3, 0.6, -0.7);
        let c = c_pm(Sign::Plus, &p).unwrap();
        assert_abs_diff_eq!(c.re, 0.0, epsilon = 1e-16);
        assert_eq!(c.im, -0.6);
        assert_eq!(d_pm(Sign::Minus, &p).unwrap().norm(), 0.7);
        let zero = PhasePoint { p_phi: 0.0, ..p };
        assert!(matches!(d_pm(Sign::Plus, &zero), Err(Error::ZeroAzimuthalMomentum)));
        assert!(y_pm(Sign::Plus, &zero).is_err());
    }

    #[test]
    fn planar_constants_vanish() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.4, 0.3, 0.0, 0.7);
        assert_abs_diff_eq!(y_pm(Sign::Plus, &p).unwrap().modulus(), 0.0, epsilon = 1e-15);
        assert_eq!(q_y(0.7, 0.7), 0.0);
    }

    #[test]
    fn angular_momentum_in_plane() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.4, 0.3, 0.0, 0.7);
        let l = angular_momentum(&p);
        assert_abs_diff_eq!(l.lx, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(l.ly, 0.0, epsilon = 1e-16);
        assert_eq!(l.lz, 0.7);
    }

    #[test]
    fn circular_energy_gives_zero_moduli() {
        let p = params(-1.0, 2, 1);
        let e_min = lambda_xi(&p, 0.25);
        assert_eq!(q_x(&p, e_min, 0.25, 0.1), 0.0);
        assert_eq!(q_z(&p, e_min, 0.25), 0.0);
    }

    #[test]
    fn q_z_closed_form() {
        let q = q_z(&params(-1.0, 1, 1), -6.0, 0.25);
        assert_abs_diff_eq!(q, 0.25 * 2.03125f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn z_requires_planar_state() {
        let p = PhasePoint::new(1.0, 1.0, 0.4, 0.3, 0.0, 0.7);
        assert!(matches!(z_pm(&params(0.0, 1, 1), Sign::Plus, &p), Err(Error::NonPlanar)));
    }

    #[test]
    fn runge_lenz_vanishes_on_circular_orbit() {
        let p = PhasePoint::new(1.0, FRAC_PI_2, 0.7, 0.0, 0.0, 1.0);
        for c in runge_lenz(&p) {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn binomial_expansion_matches_complex_power() {
        let z = Complex64::new(0.3, -1.7);
        for k in 0..6 {
            let (re, im) = binomial_power(z.re, z.im, k);
            let w = cpow(z, k);
            assert_abs_diff_eq!(re, w.re, epsilon = 1e-12);
            assert_abs_diff_eq!(im, w.im, epsilon = 1e-12);
        }
    }
}
