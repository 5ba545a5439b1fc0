//! Curvature-dependent trigonometry.
//!
//! For a curvature `κ` the functions
//!
//! ```text
//!          ⎧ cos(√κ u)          κ > 0              ⎧ sin(√κ u)/√κ       κ > 0
//! Ck(u) =  ⎨ 1                  κ = 0     Sk(u) =  ⎨ u                  κ = 0
//!          ⎩ cosh(√-κ u)        κ < 0              ⎩ sinh(√-κ u)/√-κ    κ < 0
//! ```
//!
//! interpolate between spherical, flat and hyperbolic geometry, with
//! `Tk = Sk/Ck`, `Ck² + κ Sk² = 1`, `Ck' = -κ Sk` and `Sk' = Ck`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|Ck|` below this makes [`Curvature::tk`] report a pole.
pub const TK_POLE_EPS: f64 = 1e-14;

/// Curvature parameter `κ`. The metric constant of the `(r, p_r)` chart is
/// `K = -κ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curvature(f64);

impl Curvature {
    pub const FLAT: Curvature = Curvature(0.0);

    pub fn new(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::InvalidParams(format!("curvature must be finite, got {kappa}")));
        }
        Ok(Curvature(kappa))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `K = -κ`, the constant appearing in `1 + K r²`.
    #[inline]
    pub fn metric_k(self) -> f64 {
        -self.0
    }

    #[inline]
    pub fn is_flat(self) -> bool {
        self.0 == 0.0
    }

    /// `√|κ|`.
    #[inline]
    pub fn sqrt_abs(self) -> f64 {
        self.0.abs().sqrt()
    }

    pub fn ck(self, u: f64) -> f64 {
        let k = self.0;
        if k > 0.0 {
            (k.sqrt() * u).cos()
        } else if k == 0.0 {
            1.0
        } else {
            ((-k).sqrt() * u).cosh()
        }
    }

    pub fn sk(self, u: f64) -> f64 {
        let k = self.0;
        if k > 0.0 {
            let s = k.sqrt();
            (s * u).sin() / s
        } else if k == 0.0 {
            u
        } else {
            let s = (-k).sqrt();
            (s * u).sinh() / s
        }
    }

    pub fn tk(self, u: f64) -> Result<f64> {
        let c = self.ck(u);
        if c.abs() < TK_POLE_EPS {
            return Err(Error::Pole { kappa: self.0, u });
        }
        Ok(self.sk(u) / c)
    }

    /// `1/Tk = Ck/Sk`. Regular across the equator of the sphere, where `Tk`
    /// itself has a pole; singular only where `Sk` vanishes.
    #[inline]
    pub fn cot_k(self, u: f64) -> f64 {
        self.ck(u) / self.sk(u)
    }

    /// `d Ck / du = -κ Sk(u)`.
    #[inline]
    pub fn dck(self, u: f64) -> f64 {
        -self.0 * self.sk(u)
    }

    /// `d Sk / du = Ck(u)`.
    #[inline]
    pub fn dsk(self, u: f64) -> f64 {
        self.ck(u)
    }

    /// Upper end of the radial range: `π/√κ` on the sphere, unbounded otherwise.
    pub fn xi_max(self) -> Option<f64> {
        (self.0 > 0.0).then(|| PI / self.0.sqrt())
    }

    /// The equator `ξ = π/(2√κ)` separating the two hemispheres of the sphere.
    pub fn equator(self) -> Option<f64> {
        (self.0 > 0.0).then(|| 0.5 * PI / self.0.sqrt())
    }

    /// Solves `Tk(ξ) = num/den` for `ξ` in the chart range, with `num > 0`.
    ///
    /// On the sphere a negative `den` lands in the south hemisphere and
    /// `den = 0` on the equator, so the inversion is total there. For `κ <= 0`
    /// `Tk` is bounded by `1/√-κ` and `None` is returned when the ratio is
    /// outside the range of `Tk`.
    pub fn inverse_tk_ratio(self, num: f64, den: f64) -> Option<f64> {
        if !(num > 0.0) || !den.is_finite() {
            return None;
        }
        let k = self.0;
        if k > 0.0 {
            let s = k.sqrt();
            Some((s * num).atan2(den) / s)
        } else if den <= 0.0 {
            None
        } else if k == 0.0 {
            Some(num / den)
        } else {
            let s = (-k).sqrt();
            let t = s * num / den;
            (t < 1.0).then(|| t.atanh() / s)
        }
    }

    /// Solves `Tk(ξ) = v` for `v > 0` on the primary branch.
    pub fn inverse_tk(self, v: f64) -> Option<f64> {
        self.inverse_tk_ratio(v, 1.0)
    }
}

impl std::fmt::Display for Curvature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn k(v: f64) -> Curvature {
        Curvature::new(v).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(k(0.0).ck(3.7), 1.0);
        assert_abs_diff_eq!(k(1.0).ck(FRAC_PI_2), 0.0, epsilon = 1e-16);
        assert_eq!(k(-1.0).ck(0.0), 1.0);
    }

    #[test]
    fn sine_examples() {
        assert_eq!(k(0.0).sk(2.5), 2.5);
        assert_abs_diff_eq!(k(1.0).sk(PI), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k(-4.0).sk(1.0), 2f64.sinh() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn tangent_examples() {
        assert_eq!(k(0.0).tk(0.8).unwrap(), 0.8);
        assert_abs_diff_eq!(k(1.0).tk(PI / 4.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k(-1.0).tk(20.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tangent_pole_is_an_error() {
        // cos(π/2) in floating point is ~6e-17, inside the pole band.
        assert!(matches!(k(1.0).tk(FRAC_PI_2), Err(Error::Pole { .. })));
        assert!(k(1.0).tk(FRAC_PI_2 - 1e-6).is_ok());
    }

    #[test]
    fn derivative_examples() {
        for kv in [-2.0, 0.0, 3.0] {
            assert_eq!(k(kv).dsk(0.0), 1.0);
        }
        assert_abs_diff_eq!(k(1.0).dck(FRAC_PI_2), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_curvature_rejected() {
        assert!(Curvature::new(f64::NAN).is_err());
        assert!(Curvature::new(f64::INFINITY).is_err());
    }

    #[test]
    fn chart_range() {
        assert_eq!(k(0.0).xi_max(), None);
        assert_abs_diff_eq!(k(4.0).xi_max().unwrap(), PI / 2.0);
        assert_abs_diff_eq!(k(4.0).equator().unwrap(), PI / 4.0);
    }

    #[test]
    fn inverse_tangent_branches() {
        // sphere: negative denominator lands in the south hemisphere
        let s = k(1.0);
        let north = s.inverse_tk_ratio(0.5, 1.0).unwrap();
        assert_abs_diff_eq!(s.tk(north).unwrap(), 0.5, epsilon = 1e-15);
        let south = s.inverse_tk_ratio(0.5, -1.0).unwrap();
        assert!(south > FRAC_PI_2 && south < PI);
        assert_abs_diff_eq!(s.tk(south).unwrap(), -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.inverse_tk_ratio(0.5, 0.0).unwrap(), FRAC_PI_2);

        assert_eq!(k(0.0).inverse_tk_ratio(1.0, -0.1), None);
        assert_abs_diff_eq!(k(0.0).inverse_tk(0.3).unwrap(), 0.3);

        let h = k(-1.0);
        assert_eq!(h.inverse_tk(1.0), None);
        assert_eq!(h.inverse_tk(1.5), None);
        let xi = h.inverse_tk(0.5).unwrap();
        assert_abs_diff_eq!(h.tk(xi).unwrap(), 0.5, epsilon = 1e-15);
    }
}
