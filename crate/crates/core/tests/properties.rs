//! Property tests over randomly drawn parameters and phase points.

use std::f64::consts::PI;

use perlick::dynamics::{equations_of_motion, integrate, launch_state, radial_period};
use perlick::model::{energy_bounds, hamiltonian_xi, to_r_coords, to_xi_coords, turning_points};
use perlick::poisson::{bracket, Observables};
use perlick::{Curvature, ModelParams, PhasePoint};
use proptest::prelude::*;

fn kappa_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -2.0..-0.1f64, 0.1..2.0f64]
}

fn beta_strategy() -> impl Strategy<Value = (u32, u32)> {
    (1u32..4, 1u32..4)
}

/// A point comfortably inside the chart for the given curvature.
fn point_strategy(kappa: f64) -> impl Strategy<Value = PhasePoint> {
    let xi_hi = if kappa > 0.0 { 0.45 * PI / kappa.sqrt() } else { 2.0 };
    (0.1..xi_hi, 0.3..PI - 0.3, -PI..PI, -1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64)
        .prop_map(|(xi, th, ph, a, b, c)| PhasePoint::new(xi, th, ph, a, b, c))
}

fn params_and_point() -> impl Strategy<Value = (ModelParams, PhasePoint)> {
    (kappa_strategy(), beta_strategy()).prop_flat_map(|(k, (m, n))| {
        let params = ModelParams::new(k, m, n).unwrap();
        point_strategy(k).prop_map(move |p| (params, p))
    })
}

/// Richardson-extrapolated central difference.
fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let r = |h: f64| (4.0 * d(h / 2.0) - d(h)) / 3.0;
    (16.0 * r(h / 2.0) - r(h)) / 15.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kappa_pythagorean_identity(k in -4.0..4.0f64, u in -3.0..3.0f64) {
        let c = Curvature::new(k).unwrap();
        let (ck, sk) = (c.ck(u), c.sk(u));
        let scale = 1f64.max(ck * ck).max((k * sk * sk).abs());
        prop_assert!((ck * ck + k * sk * sk - 1.0).abs() <= 1e-12 * scale);
    }

    #[test]
    fn kappa_derivatives(k in -2.0..2.0f64, u in -1.5..1.5f64) {
        let c = Curvature::new(k).unwrap();
        // Ck' = −κ Sk, Sk' = Ck
        let dc = derivative(|x| c.ck(x), u);
        let ds = derivative(|x| c.sk(x), u);
        prop_assert!((dc + k * c.sk(u)).abs() < 1e-9);
        prop_assert!((ds - c.ck(u)).abs() < 1e-9);
        prop_assert!((c.dck(u) + k * c.sk(u)).abs() < 1e-14);
        prop_assert!((c.dsk(u) - c.ck(u)).abs() < 1e-14);
    }

    #[test]
    fn canonical_map_round_trip((params, p) in params_and_point()) {
        let r = to_r_coords(&params, &p).unwrap();
        let back = to_xi_coords(&params, &r).unwrap();
        for (a, b) in p.to_array().iter().zip(back.to_array()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let h_xi = hamiltonian_xi(&params, &p).unwrap();
        let h_r = perlick::model::hamiltonian_r(&params, &r).unwrap();
        prop_assert!((h_xi - h_r).abs() <= 1e-10 * h_xi.abs().max(1.0));
    }

    #[test]
    fn bracket_antisymmetry((params, p) in params_and_point()) {
        let obs = Observables::new(params).unwrap();
        let (f, g) = (obs.get("H").unwrap(), obs.get("Y+").unwrap());
        let fg = bracket(f.as_ref(), g.as_ref(), &p).unwrap();
        let gf = bracket(g.as_ref(), f.as_ref(), &p).unwrap();
        prop_assert!((fg + gf).norm() <= 1e-12 * fg.norm().max(1.0));
    }

    #[test]
    fn equations_of_motion_match_gradient_of_h((params, p) in params_and_point()) {
        let h = |a: [f64; 6]| hamiltonian_xi(&params, &PhasePoint::from_array(a)).unwrap();
        let y = p.to_array();
        let grad: Vec<f64> = (0..6)
            .map(|i| derivative(|x| { let mut a = y; a[i] = x; h(a) }, y[i]))
            .collect();
        let f = equations_of_motion(&params, &p).unwrap();
        for i in 0..3 {
            // q̇ = ∂H/∂p, ṗ = −∂H/∂q
            prop_assert!((f[i] - grad[i + 3]).abs() <= 1e-8 * grad[i + 3].abs().max(1.0));
            prop_assert!((f[i + 3] + grad[i]).abs() <= 1e-8 * grad[i].abs().max(1.0));
        }
    }

    #[test]
    fn hamiltonian_is_its_own_observable((params, p) in params_and_point()) {
        let obs = Observables::new(params).unwrap();
        let h = obs.get("H").unwrap().eval(&p).unwrap();
        prop_assert!((h.re - hamiltonian_xi(&params, &p).unwrap()).abs() < 1e-12 * h.re.abs().max(1.0));
        prop_assert!(h.im == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn p_phi_is_exact_and_motion_stays_between_turning_points(
        k in prop_oneof![Just(0.0), -1.0..-0.2f64, 0.2..1.0f64],
        (m, n) in beta_strategy(),
        ell in 0.2..0.5f64,
        lz_frac in 0.2..0.9f64,
        rise in 0.05..0.6f64,
    ) {
        let params = ModelParams::new(k, m, n).unwrap();
        let bounds = energy_bounds(&params, ell).unwrap();
        // an energy inside the bounded window
        let top = bounds.e_escape.unwrap_or(bounds.e_min + 4.0);
        let energy = bounds.e_min + rise * (top - bounds.e_min);
        let p0 = launch_state(&params, ell, lz_frac * ell, energy).unwrap();
        let t = 2.0 * radial_period(&params, ell, energy).unwrap();
        let traj = integrate(&params, &p0, t, 1e-11).unwrap();
        let tp = turning_points(&params, ell, energy).unwrap();
        prop_assert!(tp.bounded);
        let (lo, hi) = (tp.roots[0], tp.roots[1]);
        for s in &traj.states {
            prop_assert_eq!(s.p_phi, p0.p_phi);
            prop_assert!(s.xi >= lo * (1.0 - 1e-6) && s.xi <= hi * (1.0 + 1e-6), "xi {} outside [{lo}, {hi}]", s.xi);
        }
    }
}
