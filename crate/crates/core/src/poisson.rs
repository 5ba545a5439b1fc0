//! Numerical Poisson brackets over the six-dimensional phase space and the
//! registry of bracket relations satisfied by the constants of motion.
//!
//! Partial derivatives use the fourth-order central stencil
//! `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h))/(12h)` at `h`, `h/2`, `h/4`
//! with two levels of Richardson extrapolation; the base step is
//! `h_i = 1e-4 · max(1, |x_i|)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian_xi, to_r_coords, to_xi_coords, Hemisphere, ModelParams, PhasePoint, RPoint};
use crate::symmetries::{a_pm, b_pm, c_pm, d_pm, x_pm_raw, y_pm_complex, z_pm_complex, Sign};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A scalar (real or complex) function on phase space.
pub trait PhaseFunction: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, p: &PhasePoint) -> Result<Complex64>;
}

pub type SharedFunction = Arc<dyn PhaseFunction>;

type EvalFn = dyn Fn(&PhasePoint) -> Result<Complex64> + Send + Sync;

/// Closure-backed [`PhaseFunction`].
pub struct FnPhase {
    name: String,
    f: Box<EvalFn>,
}

impl FnPhase {
    pub fn shared<F>(name: impl Into<String>, f: F) -> SharedFunction
    where
        F: Fn(&PhasePoint) -> Result<Complex64> + Send + Sync + 'static,
    {
        Arc::new(FnPhase { name: name.into(), f: Box::new(f) })
    }

    /// Real-valued convenience constructor.
    pub fn real<F>(name: impl Into<String>, f: F) -> SharedFunction
    where
        F: Fn(&PhasePoint) -> Result<f64> + Send + Sync + 'static,
    {
        Self::shared(name, move |p| f(p).map(|v| Complex64::new(v, 0.0)))
    }
}

impl PhaseFunction for FnPhase {
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, p: &PhasePoint) -> Result<Complex64> {
        (self.f)(p)
    }
}

/// Canonical coordinates in which derivatives are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    /// `(ξ, θ, φ, p_ξ, p_θ, p_φ)`.
    Xi,
    /// `(r, θ, φ, p_r, p_θ, p_φ)` on the given hemisphere.
    R(Hemisphere),
}

/// Finite-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    /// Base step relative to `max(1, |x_i|)`.
    pub rel_step: f64,
}

impl Default for Stencil {
    fn default() -> Self {
        Stencil { rel_step: 1e-4 }
    }
}

/// Evaluates `f` at chart coordinates `y`.
fn eval_in_chart(f: &dyn PhaseFunction, params: Option<&ModelParams>, chart: Chart, y: [f64; 6]) -> Result<Complex64> {
    match chart {
        Chart::Xi => f.eval(&PhasePoint::from_array(y)),
        Chart::R(hemisphere) => {
            let params = params.ok_or_else(|| Error::InvalidParams("r chart needs model parameters".into()))?;
            let r = RPoint { r: y[0], theta: y[1], phi: y[2], p_r: y[3], p_theta: y[4], p_phi: y[5], hemisphere };
            f.eval(&to_xi_coords(params, &r)?)
        }
    }
}

fn chart_coordinates(params: Option<&ModelParams>, chart: Chart, p: &PhasePoint) -> Result<[f64; 6]> {
    match chart {
        Chart::Xi => Ok(p.to_array()),
        Chart::R(hemisphere) => {
            let params = params.ok_or_else(|| Error::InvalidParams("r chart needs model parameters".into()))?;
            let r = to_r_coords(params, p)?;
            if r.hemisphere != hemisphere {
                return Err(Error::Domain("point lies in the other hemisphere".into()));
            }
            Ok([r.r, r.theta, r.phi, r.p_r, r.p_theta, r.p_phi])
        }
    }
}

/// Gradient of `f` in the chart coordinates `y`.
fn gradient(
    f: &dyn PhaseFunction,
    params: Option<&ModelParams>,
    chart: Chart,
    y: [f64; 6],
    stencil: Stencil,
) -> Result<[Complex64; 6]> {
    let mut grad = [Complex64::new(0.0, 0.0); 6];
    for (i, g) in grad.iter_mut().enumerate() {
        let h = stencil.rel_step * y[i].abs().max(1.0);
        let at = |x: f64| {
            let mut z = y;
            z[i] = x;
            eval_in_chart(f, params, chart, z).map_err(|e| Error::Stencil { coordinate: i, reason: e.to_string() })
        };
        let central = |h: f64| -> Result<Complex64> {
            let x = y[i];
            Ok((-at(x + 2.0 * h)? + at(x + h)? * 8.0 - at(x - h)? * 8.0 + at(x - 2.0 * h)?) / (12.0 * h))
        };
        let d1 = central(h)?;
        let d2 = central(0.5 * h)?;
        let d3 = central(0.25 * h)?;
        let r1 = (d2 * 16.0 - d1) / 15.0;
        let r2 = (d3 * 16.0 - d2) / 15.0;
        *g = (r2 * 64.0 - r1) / 63.0;
    }
    Ok(grad)
}

fn combine(df: &[Complex64; 6], dg: &[Complex64; 6]) -> Complex64 {
    (0..3).map(|i| df[i] * dg[i + 3] - df[i + 3] * dg[i]).sum()
}

/// `{f, g}` in the unified chart.
pub fn bracket(f: &dyn PhaseFunction, g: &dyn PhaseFunction, p: &PhasePoint) -> Result<Complex64> {
    bracket_in(f, g, p, None, Chart::Xi, Stencil::default())
}

/// `{f, g}` with derivatives taken in the given chart. The `R` charts need
/// the model parameters for the coordinate change.
pub fn bracket_in(
    f: &dyn PhaseFunction,
    g: &dyn PhaseFunction,
    p: &PhasePoint,
    params: Option<&ModelParams>,
    chart: Chart,
    stencil: Stencil,
) -> Result<Complex64> {
    let y = chart_coordinates(params, chart, p)?;
    let df = gradient(f, params, chart, y, stencil)?;
    let dg = gradient(g, params, chart, y, stencil)?;
    Ok(combine(&df, &dg))
}

/// Residual statistics of one bracket relation over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub relation: String,
    /// Points evaluated.
    pub n: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    pub threshold: f64,
    /// Points excluded by the relation's own admissibility condition.
    pub skipped: usize,
    pub failures: Vec<PointFailure>,
}

impl BracketReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.n > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub abs: f64,
    pub rel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `|lhs − rhs| / max(1, |lhs|, |rhs|)`.
pub fn relative_residual(lhs: Complex64, rhs: Complex64) -> (f64, f64) {
    let abs = (lhs - rhs).norm();
    (abs, abs / 1f64.max(lhs.norm()).max(rhs.norm()))
}

/// Checks `{f, g} = rhs` at every point.
pub fn verify_relation(
    name: &str,
    lhs: (&dyn PhaseFunction, &dyn PhaseFunction),
    rhs: &dyn PhaseFunction,
    points: &[PhasePoint],
    threshold: f64,
) -> Result<BracketReport> {
    let admit_all = |_: &PhasePoint| true;
    verify_with(name, lhs, rhs, points, threshold, &admit_all)
}

fn verify_with(
    name: &str,
    (f, g): (&dyn PhaseFunction, &dyn PhaseFunction),
    rhs: &dyn PhaseFunction,
    points: &[PhasePoint],
    threshold: f64,
    admits: &(dyn Fn(&PhasePoint) -> bool + Sync),
) -> Result<BracketReport> {
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    let outcomes: Vec<Option<std::result::Result<(f64, f64), String>>> = points
        .par_iter()
        .map(|p| {
            if !admits(p) {
                return None;
            }
            let r = bracket(f, g, p).and_then(|lhs| Ok(relative_residual(lhs, rhs.eval(p)?)));
            Some(r.map_err(|e| e.to_string()))
        })
        .collect();

    let mut report = BracketReport {
        relation: name.to_string(),
        n: 0,
        max_abs: 0.0,
        max_rel: 0.0,
        threshold,
        skipped: 0,
        failures: Vec::new(),
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            None => report.skipped += 1,
            Some(Ok((abs, rel))) => {
                report.n += 1;
                report.max_abs = report.max_abs.max(abs);
                report.max_rel = report.max_rel.max(rel);
                if !(rel < threshold) {
                    report.failures.push(PointFailure { index, abs, rel, error: None });
                }
            }
            Some(Err(e)) => {
                report.n += 1;
                report.max_abs = f64::INFINITY;
                report.max_rel = f64::INFINITY;
                report.failures.push(PointFailure { index, abs: f64::INFINITY, rel: f64::INFINITY, error: Some(e) });
            }
        }
    }
    Ok(report)
}

/// Named functions of phase space: the Hamiltonians and all factorization
/// objects for one parameter set.
pub struct Observables {
    params: ModelParams,
    table: BTreeMap<String, SharedFunction>,
}

impl Observables {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.require_zero_offset()?;
        let mut table: BTreeMap<String, SharedFunction> = BTreeMap::new();
        let mut add = |f: SharedFunction| {
            table.insert(f.name().to_string(), f);
        };
        let pr = params;
        add(FnPhase::real("H", move |p| hamiltonian_xi(&pr, p)));
        add(FnPhase::real("H_tp", |p| Ok(p.l_sq())));
        add(FnPhase::real("H_phi", |p| Ok(p.p_phi * p.p_phi)));
        for sign in [Sign::Plus, Sign::Minus] {
            let s = sign.symbol();
            add(FnPhase::shared(format!("A{s}"), move |p| a_pm(sign, p)));
            add(FnPhase::shared(format!("B{s}"), move |p| b_pm(&pr, sign, p)));
            add(FnPhase::shared(format!("C{s}"), move |p| c_pm(sign, p)));
            add(FnPhase::shared(format!("D{s}"), move |p| d_pm(sign, p)));
            add(FnPhase::shared(format!("X{s}"), move |p| x_pm_raw(&pr, sign, p)));
            add(FnPhase::shared(format!("Y{s}"), move |p| y_pm_complex(sign, p)));
            add(FnPhase::shared(format!("Z{s}"), move |p| z_pm_complex(&pr, sign, p)));
        }
        Ok(Observables { params, table })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn get(&self, name: &str) -> Result<SharedFunction> {
        self.table
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownStrategy { kind: "observable", name: name.to_string() })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }
}

/// A bracket identity `{f, g} = rhs`.
pub trait Relation: Send + Sync {
    fn name(&self) -> &str;
    fn lhs(&self) -> (&dyn PhaseFunction, &dyn PhaseFunction);
    fn rhs(&self) -> &dyn PhaseFunction;
    /// Points where the relation is evaluated; others are skipped.
    fn admits(&self, _p: &PhasePoint) -> bool {
        true
    }
    /// Relation of the planar subsystem, checked on `θ = π/2, p_θ = 0`.
    fn planar(&self) -> bool {
        false
    }
}

type Admit = dyn Fn(&PhasePoint) -> bool + Send + Sync;

/// The standard [`Relation`]: two observables and a right-hand side.
pub struct BracketRelation {
    name: String,
    f: SharedFunction,
    g: SharedFunction,
    rhs: SharedFunction,
    planar: bool,
    admit: Option<Box<Admit>>,
}

impl BracketRelation {
    pub fn new(name: impl Into<String>, f: SharedFunction, g: SharedFunction, rhs: SharedFunction) -> Self {
        BracketRelation { name: name.into(), f, g, rhs, planar: false, admit: None }
    }

    pub fn planar(mut self) -> Self {
        self.planar = true;
        self
    }

    pub fn admitting<F: Fn(&PhasePoint) -> bool + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.admit = Some(Box::new(f));
        self
    }
}

impl Relation for BracketRelation {
    fn name(&self) -> &str {
        &self.name
    }

    fn lhs(&self) -> (&dyn PhaseFunction, &dyn PhaseFunction) {
        (self.f.as_ref(), self.g.as_ref())
    }

    fn rhs(&self) -> &dyn PhaseFunction {
        self.rhs.as_ref()
    }

    fn admits(&self, p: &PhasePoint) -> bool {
        self.admit.as_ref().is_none_or(|a| a(p))
    }

    fn planar(&self) -> bool {
        self.planar
    }
}

/// Minimum `√H_θφ − √H_φ` at which `{X±, Y∓}` is sampled; its coefficient
/// has a pole on the plane.
pub const XY_POLE_GAP: f64 = 1e-3;

/// Relations registered by name, evaluated in registration order.
#[derive(Default)]
pub struct RelationRegistry {
    relations: Vec<Box<dyn Relation>>,
}

impl RelationRegistry {
    pub fn register(&mut self, relation: Box<dyn Relation>) {
        self.relations.push(relation);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Relation> {
        self.relations.iter().find(|r| r.name() == name).map(|r| r.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.relations.iter().map(|r| r.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Relation> {
        self.relations.iter().map(|r| r.as_ref())
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Every relation of the symmetry algebra and of its building blocks.
    pub fn standard(params: &ModelParams) -> Result<Self> {
        let obs = Observables::new(*params)?;
        let mut reg = RelationRegistry::default();
        let get = |n: &str| obs.get(n);
        let kappa = params.kappa;
        let m = params.m() as f64;
        let n = params.n();
        let beta = params.beta();
        let zero = FnPhase::shared("0", |_| Ok(Complex64::new(0.0, 0.0)));
        let sqrt_tp = |p: &PhasePoint| p.l_sq().sqrt();
        let sqrt_phi = |p: &PhasePoint| p.p_phi.abs();

        // {H, ·} = 0 for the six other constants
        for other in ["H_tp", "H_phi", "X+", "X-", "Y+", "Y-"] {
            reg.register(Box::new(BracketRelation::new(
                format!("{{H,{other}}}=0"),
                get("H")?,
                get(other)?,
                zero.clone(),
            )));
        }
        for sign in [Sign::Plus, Sign::Minus] {
            let s = sign.symbol();
            let sv = sign.value();
            let x = get(&format!("X{s}"))?;
            let y = get(&format!("Y{s}"))?;

            reg.register(Box::new(BracketRelation::new(
                format!("{{H_tp,Y{s}}}=0"),
                get("H_tp")?,
                y.clone(),
                zero.clone(),
            )));
            let xr = x.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_tp,X{s}}}={s}2im sqrt(H_tp) X{s}"),
                get("H_tp")?,
                x.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (2.0 * sv * m * sqrt_tp(p)) * xr.eval(p)?)),
            )));
            let yr = y.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_phi,Y{s}}}={}2i sqrt(H_phi) Y{s}", sign.flip().symbol()),
                get("H_phi")?,
                y.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (-2.0 * sv * sqrt_phi(p)) * yr.eval(p)?)),
            )));
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_phi,X{s}}}=0"),
                get("H_phi")?,
                x.clone(),
                zero.clone(),
            )));
        }

        reg.register(Box::new(BracketRelation::new(
            "{Y+,Y-}=2i sqrt(H_phi)(H_tp-2H_phi)",
            get("Y+")?,
            get("Y-")?,
            FnPhase::shared("rhs", move |p| {
                let hphi = p.p_phi * p.p_phi;
                Ok(I * 2.0 * sqrt_phi(p) * (p.l_sq() - 2.0 * hphi))
            }),
        )));

        let pr = *params;
        reg.register(Box::new(BracketRelation::new(
            "{X+,X-}",
            get("X+")?,
            get("X-")?,
            FnPhase::shared("rhs", move |p| {
                let htp = p.l_sq();
                let hphi = p.p_phi * p.p_phi;
                let h = hamiltonian_xi(&pr, p)?;
                let k = pr.kappa.value();
                let shifted = h + 0.5 * (1.0 / htp - k * htp);
                let (mi, ni) = (pr.m() as i32, pr.n() as i32);
                let l = htp.sqrt();
                let first = m * n as f64 * (htp - hphi).powi(mi) * shifted.powi(ni - 1) * (k * l + 1.0 / (htp * l));
                let second = 2.0 * m * m * (htp - hphi).powi(mi - 1) * shifted.powi(ni) * l;
                Ok(I * (first - second))
            }),
        )));

        for sign in [Sign::Plus, Sign::Minus] {
            let s = sign.symbol();
            let sv = sign.value();
            let x = get(&format!("X{s}"))?;
            let y_same = get(&format!("Y{s}"))?;
            let y_other = get(&format!("Y{}", sign.flip().symbol()))?;
            let (xa, ya) = (x.clone(), y_same.clone());
            reg.register(Box::new(BracketRelation::new(
                format!("{{X{s},Y{s}}}"),
                x.clone(),
                y_same.clone(),
                FnPhase::shared("rhs", move |p| {
                    let c = -sv * m / (sqrt_tp(p) + sqrt_phi(p));
                    Ok(I * c * xa.eval(p)? * ya.eval(p)?)
                }),
            )));
            let (xb, yb) = (x.clone(), y_other.clone());
            reg.register(Box::new(
                BracketRelation::new(
                    format!("{{X{s},Y{}}}", sign.flip().symbol()),
                    x.clone(),
                    y_other.clone(),
                    FnPhase::shared("rhs", move |p| {
                        let c = -sv * m / (sqrt_tp(p) - sqrt_phi(p));
                        Ok(I * c * xb.eval(p)? * yb.eval(p)?)
                    }),
                )
                .admitting(move |p| sqrt_tp(p) - sqrt_phi(p) >= XY_POLE_GAP),
            ));
        }

        // building blocks
        let inv_sk2 = move |p: &PhasePoint| {
            let s = kappa.sk(p.xi);
            1.0 / (s * s)
        };
        for sign in [Sign::Plus, Sign::Minus] {
            let s = sign.symbol();
            let sv = sign.value();
            let b = get(&format!("B{s}"))?;
            let a = get(&format!("A{s}"))?;
            let c = get(&format!("C{s}"))?;
            let d = get(&format!("D{s}"))?;

            let br = b.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H,B{s}}}={s}i beta sqrt(H_tp)/Sk^2 B{s}"),
                get("H")?,
                b.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (sv * beta * sqrt_tp(p) * inv_sk2(p)) * br.eval(p)?)),
            )));
            let ar = a.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H,A{s}}}={s}i sqrt(H_tp)/Sk^2 A{s}"),
                get("H")?,
                a.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (sv * sqrt_tp(p) * inv_sk2(p)) * ar.eval(p)?)),
            )));
            let ar = a.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_theta,A{s}}}={s}2i sqrt(H_theta) A{s}"),
                get("H_tp")?,
                a.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (2.0 * sv * sqrt_tp(p)) * ar.eval(p)?)),
            )));
            let cr = c.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_tp,C{s}}}={s}2i sqrt(H_phi)/sin^2 C{s}"),
                get("H_tp")?,
                c.clone(),
                FnPhase::shared("rhs", move |p| {
                    let st = p.theta.sin();
                    Ok(I * (2.0 * sv * sqrt_phi(p) / (st * st)) * cr.eval(p)?)
                }),
            )));
            let dr = d.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_tp,D{s}}}={s}2i sqrt(H_phi)/sin^2 D{s}"),
                get("H_tp")?,
                d.clone(),
                FnPhase::shared("rhs", move |p| {
                    let st = p.theta.sin();
                    Ok(I * (2.0 * sv * sqrt_phi(p) / (st * st)) * dr.eval(p)?)
                }),
            )));
            let dr = d.clone();
            reg.register(Box::new(BracketRelation::new(
                format!("{{H_phi,D{s}}}={s}2i sqrt(H_phi) D{s}"),
                get("H_phi")?,
                d.clone(),
                FnPhase::shared("rhs", move |p| Ok(I * (2.0 * sv * sqrt_phi(p)) * dr.eval(p)?)),
            )));
        }
        reg.register(Box::new(BracketRelation::new(
            "{B-,B+}=i beta sqrt(H_tp)/Sk^2",
            get("B-")?,
            get("B+")?,
            FnPhase::shared("rhs", move |p| Ok(I * beta * sqrt_tp(p) * inv_sk2(p))),
        )));
        reg.register(Box::new(BracketRelation::new(
            "{A-,A+}=2i sqrt(H_theta)",
            get("A-")?,
            get("A+")?,
            FnPhase::shared("rhs", move |p| Ok(I * 2.0 * sqrt_tp(p))),
        )));
        reg.register(Box::new(BracketRelation::new(
            "{C-,C+}=2i l_z/sin^2",
            get("C-")?,
            get("C+")?,
            FnPhase::shared("rhs", move |p| {
                let st = p.theta.sin();
                Ok(I * 2.0 * sqrt_phi(p) / (st * st))
            }),
        )));
        reg.register(Box::new(BracketRelation::new(
            "{D-,D+}=2i sqrt(H_phi)",
            get("D-")?,
            get("D+")?,
            FnPhase::shared("rhs", move |p| Ok(I * 2.0 * sqrt_phi(p))),
        )));
        for sign in [Sign::Plus, Sign::Minus] {
            let s = sign.symbol();
            reg.register(Box::new(
                BracketRelation::new(format!("{{H,Z{s}}}=0"), get("H")?, get(&format!("Z{s}"))?, zero.clone()).planar(),
            ));
        }
        Ok(reg)
    }
}

/// Pass threshold on the relative residual: `1e-6` for `β = 1`, `1e-5`
/// otherwise (higher powers amplify finite-difference noise).
pub fn default_threshold(params: &ModelParams) -> f64 {
    if params.m() == 1 && params.n() == 1 {
        1e-6
    } else {
        1e-5
    }
}

/// Checks one registered relation on a sample set (planar relations use the
/// planar projection of each point).
pub fn verify_registered(relation: &dyn Relation, points: &[PhasePoint], threshold: f64) -> Result<BracketReport> {
    let projected: Vec<PhasePoint>;
    let pts = if relation.planar() {
        projected = points.iter().map(planar_projection).collect();
        &projected[..]
    } else {
        points
    };
    verify_with(relation.name(), relation.lhs(), relation.rhs(), pts, threshold, &|p| relation.admits(p))
}

/// Verifies every relation of [`RelationRegistry::standard`]; failures are
/// collected per relation, never aborting early.
pub fn verify_full_algebra(params: &ModelParams, points: &[PhasePoint]) -> Result<Vec<BracketReport>> {
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    let registry = RelationRegistry::standard(params)?;
    let threshold = default_threshold(params);
    registry.iter().map(|r| verify_registered(r, points, threshold)).collect()
}

/// `θ = π/2`, `p_θ = 0`, other coordinates kept.
pub fn planar_projection(p: &PhasePoint) -> PhasePoint {
    PhasePoint { theta: PI / 2.0, p_theta: 0.0, ..*p }
}

/// Sampling box for verification points. Points closer than `margin` to a
/// chart singularity are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub xi: (f64, f64),
    pub theta: (f64, f64),
    pub p_xi: (f64, f64),
    pub p_theta: (f64, f64),
    /// Kept positive: `√H_φ = |p_φ|` matches `L_z` only for `p_φ > 0`.
    pub p_phi: (f64, f64),
    pub margin: f64,
}

impl SampleBox {
    pub fn for_params(params: &ModelParams) -> Self {
        let xi = match params.kappa.xi_max() {
            Some(max) => (0.1 * max, 0.9 * max),
            None => (0.2, 2.0),
        };
        SampleBox {
            xi,
            theta: (0.2, PI - 0.2),
            p_xi: (-1.0, 1.0),
            p_theta: (-1.0, 1.0),
            p_phi: (0.1, 1.0),
            margin: 1e-2,
        }
    }

    fn accepts(&self, params: &ModelParams, p: &PhasePoint) -> bool {
        let m = self.margin;
        if p.xi < m || p.theta < m || p.theta > PI - m {
            return false;
        }
        if let Some(max) = params.kappa.xi_max() {
            if p.xi > max - m || (p.xi - 0.5 * max).abs() < m {
                return false;
            }
        }
        true
    }
}

/// Deterministic rejection sampler of phase points.
pub fn sample_points(params: &ModelParams, sample_box: &SampleBox, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let draw = |r: (f64, f64), rng: &mut ChaCha8Rng| rng.gen_range(r.0..r.1);
    while out.len() < count {
        let p = PhasePoint::new(
            draw(sample_box.xi, &mut rng),
            draw(sample_box.theta, &mut rng),
            draw((-PI, PI), &mut rng),
            draw(sample_box.p_xi, &mut rng),
            draw(sample_box.p_theta, &mut rng),
            draw(sample_box.p_phi, &mut rng),
        );
        if sample_box.accepts(params, &p) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn coord(i: usize) -> SharedFunction {
        FnPhase::real(format!("y{i}"), move |p| Ok(p.to_array()[i]))
    }

    fn p0() -> PhasePoint {
        PhasePoint::new(0.9, 1.1, 0.4, 0.3, -0.2, 0.6)
    }

    #[test]
    fn canonical_pairs() {
        let p = p0();
        let one = bracket(coord(0).as_ref(), coord(3).as_ref(), &p).unwrap();
        assert_abs_diff_eq!(one.re, 1.0, epsilon = 1e-10);
        let zero = bracket(coord(0).as_ref(), coord(4).as_ref(), &p).unwrap();
        assert_abs_diff_eq!(zero.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn self_bracket_vanishes() {
        let f = FnPhase::real("f", |p| Ok((p.xi * p.p_theta).sin() + p.p_xi.powi(3) * p.theta.cos()));
        let v = bracket(f.as_ref(), f.as_ref(), &p0()).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn ladder_d_bracket() {
        let obs = Observables::new(ModelParams::new(0.0, 1, 1).unwrap()).unwrap();
        let p = p0();
        let v = bracket(obs.get("D-").unwrap().as_ref(), obs.get("D+").unwrap().as_ref(), &p).unwrap();
        assert_abs_diff_eq!(v.im, 2.0 * p.p_phi, epsilon = 1e-8);
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn stencil_leaving_domain_is_reported() {
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let h = FnPhase::real("H", move |p| hamiltonian_xi(&params, p));
        let p = PhasePoint { xi: 1e-5, ..p0() };
        assert!(matches!(bracket(h.as_ref(), coord(1).as_ref(), &p), Err(Error::Stencil { coordinate: 0, .. })));
    }

    #[test]
    fn empty_sample_rejected() {
        let f = coord(0);
        assert!(matches!(
            verify_relation("x", (f.as_ref(), f.as_ref()), f.as_ref(), &[], 1e-6),
            Err(Error::EmptySample)
        ));
        assert!(matches!(verify_full_algebra(&ModelParams::new(0.0, 1, 1).unwrap(), &[]), Err(Error::EmptySample)));
    }

    #[test]
    fn report_counts_failures() {
        let f = coord(0);
        let g = coord(3);
        let wrong = FnPhase::real("2", |_| Ok(2.0));
        let pts = vec![p0(); 3];
        let rep = verify_relation("{xi,p_xi}=2", (f.as_ref(), g.as_ref()), wrong.as_ref(), &pts, 1e-6).unwrap();
        assert_eq!(rep.n, 3);
        assert_eq!(rep.failures.len(), 3);
        assert!(!rep.passed());
        assert_abs_diff_eq!(rep.max_abs, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn sampler_is_deterministic_and_in_box() {
        let params = ModelParams::new(1.0, 1, 1).unwrap();
        let bx = SampleBox::for_params(&params);
        let a = sample_points(&params, &bx, 50, 7);
        let b = sample_points(&params, &bx, 50, 7);
        assert_eq!(a, b);
        assert_ne!(a, sample_points(&params, &bx, 50, 8));
        for p in &a {
            assert!(p.p_phi > 0.0);
            assert!((p.xi - PI / 2.0).abs() >= 1e-2);
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = RelationRegistry::standard(&ModelParams::new(0.0, 2, 1).unwrap()).unwrap();
        assert!(reg.get("{X+,X-}").is_some());
        assert!(reg.get("{H,Z+}=0").unwrap().planar());
        assert!(reg.get("nope").is_none());
        assert_eq!(reg.names().len(), reg.len());
        let shifted = ModelParams::new(0.0, 1, 1).unwrap().with_offset(1.0).unwrap();
        assert!(RelationRegistry::standard(&shifted).is_err());
    }

    #[test]
    fn xy_pole_points_are_skipped() {
        let params = ModelParams::new(0.0, 1, 1).unwrap();
        let reg = RelationRegistry::standard(&params).unwrap();
        let rel = reg.get("{X+,Y-}").unwrap();
        let near_plane = PhasePoint::new(1.0, PI / 2.0, 0.3, 0.2, 1e-5, 0.5);
        let rep = verify_registered(rel, &[near_plane, p0()], 1e-6).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.n, 1);
    }
}
