//! Hamilton's equations of the unified Hamiltonian, adaptive integration,
//! conservation diagnostics, event location, frequencies and closure.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    effective_potential, energy_bounds, hamiltonian_xi, turning_points, ModelParams, PhasePoint, CIRCULAR_TOL,
};
use crate::symmetries::{is_planar, lambda_xi, wrap_angle, x_pm_raw, y_pm_complex, z_pm_complex, Sign};

pub type State = [f64; 6];

/// `(ξ̇, θ̇, φ̇, ṗ_ξ, ṗ_θ, ṗ_φ)`.
pub fn equations_of_motion(params: &ModelParams, p: &PhasePoint) -> Result<State> {
    params.check_point(p)?;
    let kappa = params.kappa;
    let beta = params.beta();
    let sk = kappa.sk(p.xi);
    let ck = kappa.ck(p.xi);
    let sk2 = sk * sk;
    let l_sq = p.l_sq();
    let (st, ct) = p.theta.sin_cos();
    let (phi_dot, p_theta_dot) = if p.p_phi == 0.0 {
        (0.0, 0.0)
    } else {
        let st2 = st * st;
        (p.p_phi / (sk2 * st2), p.p_phi * p.p_phi * ct / (sk2 * st2 * st))
    };
    Ok([beta * beta * p.p_xi, p.p_theta / sk2, phi_dot, l_sq * ck / (sk2 * sk) - 1.0 / sk2, p_theta_dot, 0.0])
}

/// Butcher tableau of an embedded explicit Runge–Kutta pair. The solution
/// is advanced with `b`; `b_low` is the embedded lower-order weights.
pub struct Tableau {
    pub name: &'static str,
    pub c: &'static [f64],
    pub a: &'static [&'static [f64]],
    pub b: &'static [f64],
    pub b_low: &'static [f64],
    /// Order of the propagated solution.
    pub order: u32,
    /// Last stage equals the derivative at the new point.
    pub fsal: bool,
}

pub const DORMAND_PRINCE: Tableau = Tableau {
    name: "dopri5",
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    b_low: &[5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0],
    order: 5,
    fsal: true,
};

pub const CASH_KARP: Tableau = Tableau {
    name: "cash-karp",
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0],
        &[-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0],
        &[1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
    ],
    b: &[37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0],
    b_low: &[2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0, 277.0 / 14336.0, 1.0 / 4.0],
    order: 5,
    fsal: false,
};

/// Runge–Kutta–Fehlberg 4(5), propagating the fifth-order solution.
pub const FEHLBERG: Tableau = Tableau {
    name: "fehlberg",
    c: &[0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0],
    a: &[
        &[],
        &[1.0 / 4.0],
        &[3.0 / 32.0, 9.0 / 32.0],
        &[1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
        &[439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
        &[-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ],
    b: &[16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0],
    b_low: &[25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0],
    order: 5,
    fsal: false,
};

/// One attempted step.
pub struct StepOutcome {
    pub y: State,
    /// Difference between the propagated and embedded solutions.
    pub error: State,
    /// Derivative at the new point when the scheme provides it for free.
    pub fsal: Option<State>,
}

pub type Field<'a> = dyn Fn(&State) -> Result<State> + 'a;

/// An embedded single-step scheme.
pub trait Stepper: Send + Sync {
    fn name(&self) -> &str;
    /// Order of the propagated solution.
    fn order(&self) -> u32;
    /// Attempts a step of size `h` from `y`, given `k0 = f(y)`.
    fn step(&self, f: &Field<'_>, y: &State, k0: &State, h: f64) -> Result<StepOutcome>;
}

/// [`Stepper`] backed by a [`Tableau`].
pub struct ExplicitRk(pub &'static Tableau);

#[allow(clippy::needless_range_loop)]
impl Stepper for ExplicitRk {
    fn name(&self) -> &str {
        self.0.name
    }

    fn order(&self) -> u32 {
        self.0.order
    }

    fn step(&self, f: &Field<'_>, y: &State, k0: &State, h: f64) -> Result<StepOutcome> {
        let tab = self.0;
        let stages = tab.c.len();
        let mut k = vec![[0.0; 6]; stages];
        k[0] = *k0;
        for s in 1..stages {
            let mut ys = *y;
            for (j, &a) in tab.a[s].iter().enumerate() {
                if a != 0.0 {
                    for i in 0..6 {
                        ys[i] += h * a * k[j][i];
                    }
                }
            }
            k[s] = f(&ys)?;
        }
        let mut y_new = *y;
        let mut error = [0.0; 6];
        for s in 0..stages {
            let (b, d) = (tab.b[s], tab.b[s] - tab.b_low[s]);
            for i in 0..6 {
                y_new[i] += h * b * k[s][i];
                error[i] += h * d * k[s][i];
            }
        }
        let fsal = tab.fsal.then(|| k[stages - 1]);
        Ok(StepOutcome { y: y_new, error, fsal })
    }
}

type StepperFactory = fn() -> Box<dyn Stepper>;

/// Steppers selectable by name.
pub struct StepperRegistry {
    entries: BTreeMap<String, StepperFactory>,
}

pub const DEFAULT_STEPPER: &str = "dopri5";

impl Default for StepperRegistry {
    fn default() -> Self {
        let mut reg = StepperRegistry { entries: BTreeMap::new() };
        reg.register(DORMAND_PRINCE.name, || Box::new(ExplicitRk(&DORMAND_PRINCE)));
        reg.register(CASH_KARP.name, || Box::new(ExplicitRk(&CASH_KARP)));
        reg.register(FEHLBERG.name, || Box::new(ExplicitRk(&FEHLBERG)));
        reg
    }
}

impl StepperRegistry {
    pub fn register(&mut self, name: &str, factory: StepperFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn Stepper>> {
        self.entries
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy { kind: "stepper", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

/// Smallest step before the integrator gives up near a singular surface.
pub const MIN_STEP: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub stepper: String,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { stepper: DEFAULT_STEPPER.to_string(), max_steps: 5_000_000, initial_step: None }
    }
}

/// Values of the constants of motion at one sample. For planar runs the
/// `x_*` fields carry `Z±`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub h: f64,
    pub l_sq: f64,
    pub p_phi: f64,
    pub x_plus: Complex64,
    pub x_minus: Complex64,
    pub y_plus: Complex64,
    pub y_minus: Complex64,
}

const NAN_C: Complex64 = Complex64::new(f64::NAN, f64::NAN);

impl Diagnostics {
    pub fn at(params: &ModelParams, planar: bool, p: &PhasePoint) -> Self {
        // the offset shifts H only; the factorization objects use G = 0
        let bare = ModelParams { g: 0.0, ..*params };
        let x = |s| if planar { z_pm_complex(&bare, s, p) } else { x_pm_raw(&bare, s, p) }.unwrap_or(NAN_C);
        let y = |s| y_pm_complex(s, p).unwrap_or(NAN_C);
        Diagnostics {
            h: hamiltonian_xi(params, p).unwrap_or(f64::NAN),
            l_sq: p.l_sq(),
            p_phi: p.p_phi,
            x_plus: x(Sign::Plus),
            x_minus: x(Sign::Minus),
            y_plus: y(Sign::Plus),
            y_minus: y(Sign::Minus),
        }
    }
}

/// Accepted integration steps with their derivatives and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub stepper: String,
    pub tol: f64,
    /// Initial state on the plane `θ = π/2, p_θ = 0`.
    pub planar: bool,
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub derivatives: Vec<State>,
    pub diagnostics: Vec<Diagnostics>,
}

/// Maximum relative deviation of each conserved quantity from its initial
/// value. Complex constants are measured per real and imaginary part,
/// relative to the initial modulus (for `Y±`, at least the initial `L²`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub h: f64,
    pub l_sq: f64,
    pub p_phi: f64,
    pub x_plus: f64,
    pub x_minus: f64,
    pub y_plus: f64,
    pub y_minus: f64,
}

impl DriftReport {
    pub fn max_factorization(&self) -> f64 {
        self.x_plus.max(self.x_minus).max(self.y_plus).max(self.y_minus)
    }
}

fn scaled(delta: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        delta / scale
    } else {
        delta
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &PhasePoint {
        &self.states[0]
    }

    pub fn last(&self) -> &PhasePoint {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial state")
    }

    pub fn drift(&self) -> DriftReport {
        let d0 = &self.diagnostics[0];
        let real = |get: fn(&Diagnostics) -> f64| {
            let q0 = get(d0);
            let worst = self.diagnostics.iter().map(|d| (get(d) - q0).abs()).fold(0.0, f64::max);
            scaled(worst, q0.abs())
        };
        // Y± vanish on the plane; their scale is floored at ℓ²
        let complex = |get: fn(&Diagnostics) -> Complex64, floor: f64| {
            let q0 = get(d0);
            let worst = self
                .diagnostics
                .iter()
                .map(|d| {
                    let dq = get(d) - q0;
                    dq.re.abs().max(dq.im.abs())
                })
                .fold(0.0, f64::max);
            scaled(worst, q0.norm().max(floor))
        };
        DriftReport {
            h: real(|d| d.h),
            l_sq: real(|d| d.l_sq),
            p_phi: real(|d| d.p_phi),
            x_plus: complex(|d| d.x_plus, 0.0),
            x_minus: complex(|d| d.x_minus, 0.0),
            y_plus: complex(|d| d.y_plus, d0.l_sq),
            y_minus: complex(|d| d.y_minus, d0.l_sq),
        }
    }

    /// Index `k` with `times[k] <= t <= times[k+1]`.
    fn segment(&self, t: f64) -> Result<usize> {
        let (t0, t1) = (self.times[0], self.t_end());
        if !(t >= t0 && t <= t1) {
            return Err(Error::Domain(format!("t = {t} outside the integrated span [{t0}, {t1}]")));
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(self.len().saturating_sub(2)))
    }

    /// Cubic Hermite interpolation of component `i` on segment `k` at
    /// normalized time `s ∈ [0, 1]`.
    fn hermite(&self, k: usize, i: usize, s: f64) -> f64 {
        let h = self.times[k + 1] - self.times[k];
        let (y0, y1) = (self.states[k].to_array()[i], self.states[k + 1].to_array()[i]);
        let (f0, f1) = (self.derivatives[k][i], self.derivatives[k + 1][i]);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * f0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * f1
    }

    /// Dense output at time `t`.
    pub fn interpolate(&self, t: f64) -> Result<PhasePoint> {
        if self.len() == 1 {
            return Ok(self.states[0]);
        }
        let k = self.segment(t)?;
        let s = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let mut y = [0.0; 6];
        for (i, v) in y.iter_mut().enumerate() {
            *v = self.hermite(k, i, s);
        }
        Ok(PhasePoint::from_array(y))
    }

    /// Trajectory sampled at the requested increasing times.
    pub fn resample(&self, times: &[f64]) -> Result<Trajectory> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("sample times must be strictly increasing".into()));
        }
        let states = times.iter().map(|&t| self.interpolate(t)).collect::<Result<Vec<_>>>()?;
        let derivatives = states.iter().map(|p| equations_of_motion(&self.params, p)).collect::<Result<Vec<_>>>()?;
        let diagnostics = states.iter().map(|p| Diagnostics::at(&self.params, self.planar, p)).collect();
        Ok(Trajectory {
            params: self.params,
            stepper: self.stepper.clone(),
            tol: self.tol,
            planar: self.planar,
            times: times.to_vec(),
            states,
            derivatives,
            diagnostics,
        })
    }

    /// Uniform resampling with `count` points over the integrated span.
    pub fn resample_uniform(&self, count: usize) -> Result<Trajectory> {
        if count < 2 {
            return Err(Error::InvalidParams("at least two samples are required".into()));
        }
        let (t0, t1) = (self.times[0], self.t_end());
        let times: Vec<f64> = (0..count)
            .map(|j| if j + 1 == count { t1 } else { t0 + (t1 - t0) * j as f64 / (count - 1) as f64 })
            .collect();
        self.resample(&times)
    }

    /// Refined times at which component `i` changes sign in the given
    /// direction, located on the Hermite interpolant.
    pub fn crossings(&self, i: usize, direction: Crossing) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..self.len().saturating_sub(1) {
            let y0 = self.states[k].to_array()[i];
            let y1 = self.states[k + 1].to_array()[i];
            let hit = match direction {
                Crossing::Rising => y0 < 0.0 && y1 >= 0.0,
                Crossing::Falling => y0 > 0.0 && y1 <= 0.0,
                Crossing::Any => (y0 < 0.0 && y1 >= 0.0) || (y0 > 0.0 && y1 <= 0.0),
            };
            if !hit {
                continue;
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            let negative_at_lo = y0 < 0.0;
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if (self.hermite(k, i, mid) < 0.0) == negative_at_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            out.push(self.times[k] + s * (self.times[k + 1] - self.times[k]));
        }
        out
    }
}

/// Direction of a zero crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Any,
}

/// Component indices of [`State`].
pub mod component {
    pub const XI: usize = 0;
    pub const THETA: usize = 1;
    pub const PHI: usize = 2;
    pub const P_XI: usize = 3;
    pub const P_THETA: usize = 4;
    pub const P_PHI: usize = 5;
}

fn error_norm(err: &State, y0: &State, y1: &State, tol: f64) -> f64 {
    let sum: f64 = (0..6)
        .map(|i| {
            let sc = tol + tol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / 6.0).sqrt()
}

/// Integrates from `t = 0` to `t_end` with the default stepper.
pub fn integrate(params: &ModelParams, initial: &PhasePoint, t_end: f64, tol: f64) -> Result<Trajectory> {
    integrate_with(params, initial, t_end, tol, &IntegrateOptions::default())
}

pub fn integrate_with(
    params: &ModelParams,
    initial: &PhasePoint,
    t_end: f64,
    tol: f64,
    options: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(1e-14..=1e-6).contains(&tol) {
        return Err(Error::InvalidParams(format!("tol = {tol} must lie in [1e-14, 1e-6]")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(format!("t_end = {t_end} must be positive and finite")));
    }
    let stepper = StepperRegistry::default().get(&options.stepper)?;
    let f = |y: &State| equations_of_motion(params, &PhasePoint::from_array(*y));
    let planar = is_planar(initial);

    let mut y = initial.to_array();
    let mut k0 = f(&y)?;
    let mut traj = Trajectory {
        params: *params,
        stepper: stepper.name().to_string(),
        tol,
        planar,
        times: vec![0.0],
        states: vec![*initial],
        derivatives: vec![k0],
        diagnostics: vec![Diagnostics::at(params, planar, initial)],
    };

    let order = stepper.order() as f64;
    let mut h = options.initial_step.unwrap_or_else(|| initial_step(&f, &y, &k0, order, tol, t_end));
    let mut t = 0.0;
    let mut err_prev: f64 = 1.0;
    let mut steps = 0usize;
    while t < t_end {
        if steps >= options.max_steps {
            return Err(Error::StepBudget { t, max_steps: options.max_steps, last: PhasePoint::from_array(y) });
        }
        steps += 1;
        let last_step = h >= t_end - t;
        let h_try = if last_step { t_end - t } else { h };
        let attempt = stepper.step(&f, &y, &k0, h_try).and_then(|out| {
            params.check_point(&PhasePoint::from_array(out.y))?;
            Ok(out)
        });
        let out = match attempt {
            Ok(out) => out,
            Err(Error::Domain(_)) | Err(Error::Pole { .. }) => {
                h = 0.5 * h_try;
                if h < MIN_STEP {
                    return Err(Error::Singularity { t, last: PhasePoint::from_array(y) });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let err = error_norm(&out.error, &y, &out.y, tol);
        if !err.is_finite() || err > 1.0 {
            let factor = if err.is_finite() { (0.9 * err.powf(-1.0 / order)).max(0.2) } else { 0.2 };
            h = h_try * factor;
            if h < MIN_STEP {
                return Err(Error::Singularity { t, last: PhasePoint::from_array(y) });
            }
            continue;
        }
        t = if last_step { t_end } else { t + h_try };
        y = out.y;
        k0 = match out.fsal {
            Some(k) => k,
            None => f(&y)?,
        };
        let p = PhasePoint::from_array(y);
        traj.times.push(t);
        traj.states.push(p);
        traj.derivatives.push(k0);
        traj.diagnostics.push(Diagnostics::at(params, planar, &p));

        // PI controller
        let err_c = err.max(1e-10);
        let factor = 0.9 * err_c.powf(-0.7 / order) * err_prev.powf(0.4 / order);
        err_prev = err_c;
        h = h_try * factor.clamp(0.2, 5.0);
    }
    Ok(traj)
}

fn initial_step(f: &Field<'_>, y: &State, k0: &State, order: f64, tol: f64, span: f64) -> f64 {
    let norm = |v: &State| ((0..6).map(|i| (v[i] / (tol + tol * y[i].abs())).powi(2)).sum::<f64>() / 6.0).sqrt();
    let (d0, d1) = (norm(y), norm(k0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = *y;
    for i in 0..6 {
        y1[i] += h0 * k0[i];
    }
    let h1 = match f(&y1) {
        Ok(k1) => {
            let mut diff = [0.0; 6];
            for i in 0..6 {
                diff[i] = k1[i] - k0[i];
            }
            let d2 = norm(&diff) / h0;
            let dm = d1.max(d2);
            if dm <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / dm).powf(1.0 / order)
            }
        }
        Err(_) => h0 * 1e-3,
    };
    (100.0 * h0).min(h1).min(span)
}

/// Radial period from the phase `χ` of `B±`, which turns at the rate
/// `βℓ/Sk²(ξ)` while `|B±|² = E − λ_ξ` stays fixed. Along the orbit
/// `cot_k ξ = (1 + ε cos χ)/ℓ²` with `ε = ℓ√(2(E − λ_ξ))`, so
///
/// ```text
/// T = (1/βℓ) ∮ dχ / (cot_k² ξ(χ) + κ)
/// ```
///
/// whose integrand is smooth and periodic: the trapezoid rule converges
/// geometrically.
pub fn radial_period(params: &ModelParams, ell: f64, energy: f64) -> Result<f64> {
    let tp = turning_points(params, ell, energy)?;
    if tp.degenerate {
        return Err(Error::CircularOrbit);
    }
    if !tp.bounded {
        let escape = energy_bounds(params, ell).ok().and_then(|b| b.e_escape).unwrap_or(f64::NAN);
        return Err(Error::Unbounded { energy, escape });
    }
    let k = params.kappa.value();
    let l2 = ell * ell;
    let eps = ell * (2.0 * (energy - params.g - lambda_xi(params, ell)).max(0.0)).sqrt();
    let integrand = |chi: f64| {
        let cot = (1.0 + eps * chi.cos()) / l2;
        1.0 / (cot * cot + k)
    };
    let trapezoid = |n: usize| {
        let h = TAU / n as f64;
        h * (0..n).map(|j| integrand(j as f64 * h)).sum::<f64>()
    };
    let scale = 1.0 / (params.beta() * ell);
    let mut n = 64;
    let mut prev = trapezoid(n);
    while n < 1 << 22 {
        n *= 2;
        let next = trapezoid(n);
        if (next - prev).abs() <= 1e-15 * next.abs() {
            return Ok(scale * next);
        }
        prev = next;
    }
    Ok(scale * prev)
}

/// Launch state on the node `θ = π/2`, `φ = −π/2` at the circular radius,
/// moving outward: `ℓ_y = 0`, `p_φ = ℓ_z`, `p_θ = √(ℓ² − ℓ_z²)`.
pub fn launch_state(params: &ModelParams, ell: f64, ell_z: f64, energy: f64) -> Result<PhasePoint> {
    if !(ell_z.abs() <= ell) {
        return Err(Error::InvalidParams(format!("|l_z| = {} exceeds l = {ell}", ell_z.abs())));
    }
    let bounds = energy_bounds(params, ell)?;
    let xi = bounds.xi_circular;
    let gap = energy - effective_potential(params, ell, xi)?;
    if gap < -CIRCULAR_TOL * energy.abs().max(1.0) {
        return Err(Error::NoSolution { energy, e_min: bounds.e_min });
    }
    let gap = gap.max(0.0);
    let p_xi = (2.0 * gap).sqrt() / params.beta();
    let p_theta = (ell * ell - ell_z * ell_z).max(0.0).sqrt();
    Ok(PhasePoint::new(xi, PI / 2.0, -PI / 2.0, p_xi, p_theta, ell_z))
}

/// Measured frequencies and the residuals of the locking relations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub omega_xi: f64,
    /// Missing when the `θ` oscillation is too small to time.
    pub omega_theta: Option<f64>,
    pub omega_phi: f64,
    /// `ω_θ/ω_ξ`, expected `n/m`.
    pub ratio_theta_xi: Option<f64>,
    /// `|m ω_θ − n ω_ξ|/ω_ξ`.
    pub locking_residual: Option<f64>,
    /// `|ω_θ − ω_φ|/ω_φ`.
    pub angular_residual: Option<f64>,
    pub radial_periods: usize,
    pub theta_periods: usize,
    /// `θ` amplitude below resolution (near-planar or planar motion).
    pub low_amplitude_theta: bool,
}

/// `max|p_θ|` below this fraction of the momentum scale counts as no
/// `θ` oscillation.
pub const LOW_AMPLITUDE: f64 = 1e-8;

fn momentum_scale(traj: &Trajectory) -> f64 {
    traj.states.iter().map(|p| (p.p_xi * p.p_xi + p.p_theta * p.p_theta + p.p_phi * p.p_phi).sqrt()).fold(0.0, f64::max)
}

/// In-plane angle `ψ` of the orbit measured from the ascending node:
/// `cos θ ∝ sin ψ`, `−sin θ p_θ/ℓ ∝ cos ψ`. The zeros of `cos ψ` are the
/// zeros of `p_θ`.
fn polar_phase(p: &PhasePoint) -> f64 {
    let ell = p.l_sq().sqrt();
    p.theta.cos().atan2(-p.theta.sin() * p.p_theta / ell)
}

/// `ψ(t)` continued along the accepted steps.
fn unwrapped_polar_phase(traj: &Trajectory, t: f64) -> Result<f64> {
    let mut acc = polar_phase(&traj.states[0]);
    for k in 1..traj.len() {
        if traj.times[k] > t {
            break;
        }
        acc += wrap_angle(polar_phase(&traj.states[k]) - acc);
    }
    Ok(acc + wrap_angle(polar_phase(&traj.interpolate(t)?) - acc))
}

pub fn estimate_frequencies(traj: &Trajectory) -> Result<FrequencyReport> {
    use component::*;
    let scale = momentum_scale(traj).max(f64::MIN_POSITIVE);
    let radial = traj.crossings(P_XI, Crossing::Rising);
    if radial.is_empty() {
        let amp = traj.states.iter().map(|p| p.p_xi.abs()).fold(0.0, f64::max);
        if amp <= LOW_AMPLITUDE * scale {
            return Err(Error::CircularOrbit);
        }
    }
    if radial.len() < 4 {
        return Err(Error::InsufficientPeriods(format!(
            "{} radial crossings; at least 4 (3 periods) are needed",
            radial.len()
        )));
    }
    let span = |c: &[f64]| c[c.len() - 1] - c[0];
    let omega_xi = TAU * (radial.len() - 1) as f64 / span(&radial);

    let theta_amp = traj.states.iter().map(|p| p.p_theta.abs()).fold(0.0, f64::max);
    let polar = traj.crossings(P_THETA, Crossing::Falling);
    let low_amplitude_theta = theta_amp <= LOW_AMPLITUDE * scale || polar.len() < 2;

    // secular rates over whole radial periods; φ over a multiple of m of
    // them, where the in-plane angle has made whole turns
    let (t0, t1) = (radial[0], radial[radial.len() - 1]);
    let m_periods = traj.params.m() as usize;
    let whole = (radial.len() - 1) / m_periods * m_periods;
    let t_phi = if whole > 0 { radial[whole] } else { t1 };
    let phi_at = |t: f64| traj.interpolate(t).map(|p| p.phi);
    let omega_phi = (phi_at(t_phi)? - phi_at(t0)?).abs() / (t_phi - t0);
    let (omega_theta, theta_periods) = if low_amplitude_theta {
        (None, 0)
    } else {
        let advance = unwrapped_polar_phase(traj, t1)? - unwrapped_polar_phase(traj, t0)?;
        (Some(advance.abs() / (t1 - t0)), polar.len() - 1)
    };
    let (m, n) = (traj.params.m() as f64, traj.params.n() as f64);
    Ok(FrequencyReport {
        omega_xi,
        omega_theta,
        omega_phi,
        ratio_theta_xi: omega_theta.map(|w| w / omega_xi),
        locking_residual: omega_theta.map(|w| (m * w - n * omega_xi).abs() / omega_xi),
        angular_residual: omega_theta.map(|w| (w - omega_phi).abs() / omega_phi),
        radial_periods: radial.len() - 1,
        theta_periods,
        low_amplitude_theta,
    })
}

/// Integration span that [`detect_closure`] needs: four closure periods
/// `m T_ξ` of the expected winding.
pub fn closure_horizon(params: &ModelParams, radial_period: f64) -> f64 {
    4.0 * params.m() as f64 * radial_period
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub closed: bool,
    pub period: Option<f64>,
    /// `(radial cycles, azimuthal cycles)` per closure period.
    pub winding: Option<(u32, u32)>,
    /// Smallest recurrence distance found.
    pub distance: Option<f64>,
    /// Sign changes of `p_ξ` along the trajectory.
    pub turning_points: usize,
}

/// Weighted max-norm between two states: `ξ` relative to `xi_scale`,
/// angles modulo `2π`, momenta relative to `p_scale`.
pub fn state_distance(a: &PhasePoint, b: &PhasePoint, xi_scale: f64, p_scale: f64) -> f64 {
    [
        (a.xi - b.xi).abs() / xi_scale,
        wrap_angle(a.theta - b.theta).abs(),
        wrap_angle(a.phi - b.phi).abs(),
        (a.p_xi - b.p_xi).abs() / p_scale,
        (a.p_theta - b.p_theta).abs() / p_scale,
        (a.p_phi - b.p_phi).abs() / p_scale,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Smallest full-state recurrence, searched over successive pericentre
/// passages.
pub fn detect_closure(traj: &Trajectory, tol: f64) -> Result<ClosureReport> {
    use component::*;
    let turning = traj.crossings(P_XI, Crossing::Any).len();
    let passages = traj.crossings(P_XI, Crossing::Rising);
    let mut report =
        ClosureReport { closed: false, period: None, winding: None, distance: None, turning_points: turning };
    if passages.len() < 2 {
        return Ok(report);
    }
    let xi_scale = traj.states.iter().map(|p| p.xi).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let p_scale = momentum_scale(traj).max(f64::MIN_POSITIVE);
    let reference = traj.interpolate(passages[0])?;
    let mut best = f64::INFINITY;
    for (k, &t) in passages.iter().enumerate().skip(1) {
        let p = traj.interpolate(t)?;
        let d = state_distance(&reference, &p, xi_scale, p_scale);
        best = best.min(d);
        if d < tol {
            report.closed = true;
            report.period = Some(t - passages[0]);
            report.winding = Some((k as u32, ((p.phi - reference.phi).abs() / TAU).round() as u32));
            break;
        }
    }
    report.distance = Some(best);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn oscillator(y: &State) -> Result<State> {
        Ok([y[1], -y[0], 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn tableaus_are_consistent() {
        for tab in [&DORMAND_PRINCE, &CASH_KARP, &FEHLBERG] {
            for (row, &c) in tab.a.iter().zip(tab.c) {
                assert_abs_diff_eq!(row.iter().sum::<f64>(), c, epsilon = 1e-14);
            }
            assert_abs_diff_eq!(tab.b.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(tab.b_low.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn fixed_step_convergence_is_fifth_order() {
        let run = |stepper: &dyn Stepper, n: usize| {
            let h = 1.0 / n as f64;
            let mut y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
            for _ in 0..n {
                let k0 = oscillator(&y).unwrap();
                y = stepper.step(&oscillator, &y, &k0, h).unwrap().y;
            }
            (y[0] - 1f64.cos()).abs()
        };
        let reg = StepperRegistry::default();
        for name in reg.names() {
            let s = reg.get(name).unwrap();
            let ratio = run(s.as_ref(), 10) / run(s.as_ref(), 20);
            assert!(ratio > 24.0 && ratio < 40.0, "{name}: ratio {ratio}");
        }
    }

    #[test]
    fn unknown_stepper() {
        assert!(matches!(StepperRegistry::default().get("euler"), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn azimuthal_momentum_has_no_rate() {
        let params = ModelParams::new(-1.0, 2, 1).unwrap();
        let d = equations_of_motion(&params, &PhasePoint::new(0.5, 1.0, 0.2, 0.3, 0.1, 0.4)).unwrap();
        assert_eq!(d[5], 0.0);
    }

    #[test]
    fn circular_data_is_an_equilibrium() {
        let params = ModelParams::new(-1.0, 1, 1).unwrap();
        let ell = 0.25;
        let b = energy_bounds(&params, ell).unwrap();
        let p = PhasePoint::new(b.xi_circular, PI / 2.0, 0.0, 0.0, 0.0, ell);
        let d = equations_of_motion(&params, &p).unwrap();
        assert_eq!(d[0], 0.0);
        assert!(d[3].abs() < 1e-10);
    }

    #[test]
    fn tolerance_range_enforced() {
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let p = PhasePoint::new(1.0, PI / 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(integrate(&params, &p, 1.0, 1e-5).is_err());
        assert!(integrate(&params, &p, 1.0, 1e-15).is_err());
        assert!(integrate(&params, &p, -1.0, 1e-10).is_err());
    }

    #[test]
    fn kepler_radial_period() {
        // flat β = 1: T = 2π a^{3/2}, a = −1/(2E)
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let e = -0.3;
        let t = radial_period(&params, 0.9, e).unwrap();
        assert_abs_diff_eq!(t, TAU * (-0.5 / e).powf(1.5), epsilon = 1e-11);
    }

    #[test]
    fn collapse_into_origin_is_a_singularity() {
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let p = PhasePoint::new(1.0, PI / 2.0, 0.0, -0.5, 0.0, 0.0);
        assert!(matches!(integrate(&params, &p, 10.0, 1e-10), Err(Error::Singularity { .. })));
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let p = launch_state(&params, 1.0, 0.6, -0.3).unwrap();
        let traj = integrate(&params, &p, 5.0, 1e-10).unwrap();
        let k = traj.len() / 2;
        let q = traj.interpolate(traj.times[k]).unwrap();
        assert_abs_diff_eq!(q.xi, traj.states[k].xi, epsilon = 1e-14);
        assert!(traj.interpolate(6.0).is_err());
    }
}
