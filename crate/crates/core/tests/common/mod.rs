//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use perlick::dynamics::Trajectory;
use perlick::PhasePoint;

/// Closed-form minimum of the effective potential.
pub fn e_min_closed(kappa: f64, ell: f64) -> f64 {
    -0.5 * (1.0 / (ell * ell) - kappa * ell * ell)
}

/// Escape threshold by hand: `−√|κ|` for κ < 0, `0` for κ = 0, none for κ > 0.
pub fn e_escape_closed(kappa: f64) -> Option<f64> {
    if kappa < 0.0 {
        Some(-(-kappa).sqrt())
    } else if kappa == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Flat-space position and momentum in Cartesian components, `r = ξ`.
pub fn cartesian(p: &PhasePoint) -> ([f64; 3], [f64; 3]) {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    let r_hat = [st * cp, st * sp, ct];
    let theta_hat = [ct * cp, ct * sp, -st];
    let phi_hat = [-sp, cp, 0.0];
    let r = p.xi;
    let (a, b, c) = (p.p_xi, p.p_theta / r, p.p_phi / (r * st));
    let mom = [0, 1, 2].map(|i| a * r_hat[i] + b * theta_hat[i] + c * phi_hat[i]);
    (r_hat.map(|x| r * x), mom)
}

/// `𝓐 = p × L − r̂` for the flat Kepler problem.
pub fn runge_lenz_oracle(p: &PhasePoint) -> [f64; 3] {
    let (r, mom) = cartesian(p);
    let l = cross(r, mom);
    let pl = cross(mom, l);
    let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    [0, 1, 2].map(|i| pl[i] - r[i] / norm)
}

/// Kepler conic `ξ = α/(1 + ε cos φ)`.
pub fn kepler_conic(energy: f64, lz: f64, phi: f64) -> Option<f64> {
    let alpha = lz * lz;
    let eps = (2.0 * energy * alpha + 1.0).sqrt();
    let den = 1.0 + eps * phi.cos();
    (den > 0.0).then(|| alpha / den)
}

/// Phase offset of the planar orbit launched at the circular radius,
/// moving outward, at azimuth `φ0`: the conic phase `(φ_z + mφ)/n` is then
/// `π/2` at launch.
pub fn launch_phase_offset(m: u32, n: u32, phi0: f64) -> f64 {
    n as f64 * PI / 2.0 - m as f64 * phi0
}

/// Time at which the (monotone) azimuth of a trajectory reaches `phi`.
pub fn time_at_azimuth(traj: &Trajectory, phi: f64) -> Option<f64> {
    let phis: Vec<f64> = traj.states.iter().map(|s| s.phi).collect();
    let k = phis.windows(2).position(|w| (w[0] - phi) * (w[1] - phi) <= 0.0)?;
    let (mut lo, mut hi) = (traj.times[k], traj.times[k + 1]);
    let increasing = phis[k + 1] > phis[k];
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = traj.interpolate(mid).ok()?.phi;
        if (v < phi) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Central-difference Jacobian with one Richardson level.
pub fn fd_jacobian(f: impl Fn([f64; 6]) -> [f64; 6], x: [f64; 6]) -> [[f64; 6]; 6] {
    let mut jac = [[0.0; 6]; 6];
    for j in 0..6 {
        let h = 1e-3 * x[j].abs().max(1.0);
        let diff = |h: f64| {
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (f(a), f(b));
            [0, 1, 2, 3, 4, 5].map(|i| (fa[i] - fb[i]) / (2.0 * h))
        };
        let d = |h: f64| {
            let (d1, d2) = (diff(h), diff(h / 2.0));
            [0, 1, 2, 3, 4, 5].map(|i| (4.0 * d2[i] - d1[i]) / 3.0)
        };
        let (r1, r2) = (d(h), d(h / 2.0));
        for i in 0..6 {
            jac[i][j] = (16.0 * r2[i] - r1[i]) / 15.0;
        }
    }
    jac
}

/// Determinant by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn det6(mut a: [[f64; 6]; 6]) -> f64 {
    let mut det = 1.0;
    for c in 0..6 {
        let p = (c..6).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..6 {
            let f = a[r][c] / a[c][c];
            for k in c..6 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

/// `max |Jᵀ Ω J − Ω|` for the standard symplectic form on `(q, p)`.
pub fn symplectic_defect(j: &[[f64; 6]; 6]) -> f64 {
    let omega = |i: usize, k: usize| -> f64 {
        if k == i + 3 {
            1.0
        } else if i == k + 3 {
            -1.0
        } else {
            0.0
        }
    };
    let mut worst: f64 = 0.0;
    for a in 0..6 {
        for b in 0..6 {
            let mut s = 0.0;
            for i in 0..6 {
                for k in 0..6 {
                    s += j[i][a] * omega(i, k) * j[k][b];
                }
            }
            worst = worst.max((s - omega(a, b)).abs());
        }
    }
    worst
}
