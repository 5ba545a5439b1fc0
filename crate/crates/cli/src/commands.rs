//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::{debug, info, warn};
use perlick::dynamics::{
    closure_horizon, detect_closure, estimate_frequencies, integrate_with, launch_state, radial_period, ClosureReport,
    DriftReport, FrequencyReport, IntegrateOptions, Trajectory,
};
use perlick::model::{effective_potential, energy_bounds, turning_points, EnergyBounds, TurningPoints};
use perlick::orbits::{
    chart_cartesian, classify_orbit, closing_phi_grid, conic_parameters, orbit_points, ConicParams, OrbitClass,
};
use perlick::poisson::{
    default_threshold, sample_points, verify_registered, BracketReport, Relation, RelationRegistry, SampleBox,
};
use perlick::{Error, ModelParams, PhasePoint};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_beta, Format, RunConfig};
use crate::output::{fmt_f, fmt_opt, write_csv, write_json};
use crate::Failure;

pub type CmdResult = std::result::Result<(), Failure>;

/// Closed orbits are recognised when the full state recurs to this
/// weighted distance.
const CLOSURE_TOL: f64 = 1e-6;
const DEFAULT_GRID: usize = 400;
const DEFAULT_ORBIT_POINTS: usize = 2001;
const DEFAULT_VERIFY_POINTS: usize = 200;

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn io<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

// ---------------------------------------------------------------- potential

#[derive(Serialize)]
struct PotentialDoc<'a> {
    kappa: f64,
    beta: String,
    l: f64,
    bounds: Option<EnergyBounds>,
    xi: &'a [f64],
    v_eff: &'a [f64],
}

fn potential_range(params: &ModelParams, bounds: Option<&EnergyBounds>) -> (f64, f64) {
    match params.kappa.xi_max() {
        Some(max) => (1e-3 * max, (1.0 - 1e-3) * max),
        None => {
            let x0 = bounds.map_or(1.0, |b| b.xi_circular);
            (0.2 * x0, 20.0 * x0)
        }
    }
}

pub fn potential(cfg: &RunConfig, xi_min: Option<f64>, xi_max: Option<f64>) -> CmdResult {
    let params = cfg.params();
    let l = cfg.require_l().map_err(config)?;
    let bounds = match energy_bounds(&params, l) {
        Ok(b) => Some(b),
        Err(Error::NoBoundStates { .. }) => {
            warn!("V_eff has no minimum for kappa = {}, l = {l}", cfg.kappa);
            None
        }
        Err(e) => return Err(config(e)),
    };
    let (lo0, hi0) = potential_range(&params, bounds.as_ref());
    let (lo, hi) = (xi_min.unwrap_or(lo0), xi_max.unwrap_or(hi0));
    if !(lo > 0.0 && hi > lo) {
        return Err(config(anyhow!("invalid xi range [{lo}, {hi}]")));
    }
    let count = cfg.samples.unwrap_or(DEFAULT_GRID).max(2);
    let xi: Vec<f64> = (0..count).map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64).collect();
    let v = xi.iter().map(|&x| effective_potential(&params, l, x)).collect::<Result<Vec<_>, _>>()?;
    info!("potential: {count} points on [{lo}, {hi}]");
    match cfg.format_or(Format::Csv) {
        Format::Json => write_json(
            cfg.output(),
            &PotentialDoc { kappa: cfg.kappa, beta: cfg.beta_label(), l, bounds, xi: &xi, v_eff: &v },
        )
        .map_err(io),
        Format::Csv => {
            let e_min = fmt_opt(bounds.map(|b| b.e_min));
            let e_esc = fmt_opt(bounds.and_then(|b| b.e_escape));
            let rows = xi.iter().zip(&v).map(|(x, y)| vec![fmt_f(*x), fmt_f(*y), e_min.clone(), e_esc.clone()]);
            write_csv(cfg.output(), &["xi", "v_eff", "e_min", "e_escape"], rows).map_err(io)
        }
    }
}

// ------------------------------------------------------------------- bounds

#[derive(Serialize)]
struct BoundsDoc {
    kappa: f64,
    beta: String,
    l: f64,
    bounds: Option<EnergyBounds>,
    energy: Option<f64>,
    classification: Option<OrbitClass>,
    turning_points: Option<TurningPoints>,
    radial_period: Option<f64>,
    conic: Option<ConicParams>,
}

pub fn bounds(cfg: &RunConfig) -> CmdResult {
    let params = cfg.params();
    let l = cfg.require_l().map_err(config)?;
    let bounds = match energy_bounds(&params, l) {
        Ok(b) => Some(b),
        Err(Error::NoBoundStates { .. }) => None,
        Err(e) => return Err(config(e)),
    };
    let mut doc = BoundsDoc {
        kappa: cfg.kappa,
        beta: cfg.beta_label(),
        l,
        bounds,
        energy: cfg.energy,
        classification: None,
        turning_points: None,
        radial_period: None,
        conic: None,
    };
    if let Some(e) = cfg.energy {
        doc.classification = Some(classify_orbit(&params, e, l).map_err(config)?);
        doc.turning_points = Some(turning_points(&params, l, e).map_err(config)?);
        doc.radial_period = radial_period(&params, l, e).ok();
        if let Some(lz) = cfg.lz.filter(|&lz| lz != 0.0) {
            doc.conic = Some(conic_parameters(params.kappa, e, lz)?);
        }
    }
    write_json(cfg.output(), &doc).map_err(io)
}

// ----------------------------------------------------------------- simulate

/// Launch data and the integration span of a simulation.
struct Run {
    params: ModelParams,
    initial: PhasePoint,
    t_end: f64,
    radial_period: Option<f64>,
}

fn prepare_run(cfg: &RunConfig, params: ModelParams, energy: f64) -> std::result::Result<Run, Failure> {
    let l = cfg.require_l().map_err(config)?;
    let lz = cfg.lz.unwrap_or(l);
    let initial = launch_state(&params, l, lz, energy).map_err(config)?;
    let period = match radial_period(&params, l, energy) {
        Ok(t) => Some(t),
        Err(e @ (Error::Unbounded { .. } | Error::CircularOrbit)) => {
            if cfg.t_end.is_none() {
                return Err(config(anyhow!("{e}; pass --t-end to integrate anyway")));
            }
            warn!("{e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let t_end = cfg.t_end.unwrap_or_else(|| closure_horizon(&params, period.expect("checked above")));
    Ok(Run { params, initial, t_end, radial_period: period })
}

fn run_integration(cfg: &RunConfig, run: &Run) -> std::result::Result<Trajectory, Failure> {
    let options = IntegrateOptions { stepper: cfg.stepper.clone(), max_steps: cfg.max_steps, initial_step: None };
    info!("integrating to t = {} with {} at tol {}", run.t_end, cfg.stepper, cfg.tol);
    let traj = integrate_with(&run.params, &run.initial, run.t_end, cfg.tol, &options)?;
    debug!("{} accepted steps", traj.len());
    Ok(traj)
}

#[derive(Serialize)]
struct Summary {
    config: RunConfig,
    initial: PhasePoint,
    t_end: f64,
    radial_period: Option<f64>,
    steps: usize,
    planar: bool,
    drift: DriftReport,
    drift_max: f64,
    frequencies: std::result::Result<FrequencyReport, String>,
    expected_ratio: f64,
    closure: ClosureReport,
}

fn summarize(cfg: &RunConfig, run: &Run, traj: &Trajectory) -> std::result::Result<Summary, Failure> {
    let drift = traj.drift();
    let frequencies = estimate_frequencies(traj).map_err(|e| e.to_string());
    let closure = detect_closure(traj, CLOSURE_TOL)?;
    Ok(Summary {
        config: cfg.clone(),
        initial: run.initial,
        t_end: run.t_end,
        radial_period: run.radial_period,
        steps: traj.len(),
        planar: traj.planar,
        drift,
        drift_max: drift.max_factorization(),
        frequencies,
        expected_ratio: cfg.n as f64 / cfg.m as f64,
        closure,
    })
}

const TRAJECTORY_HEADER: [&str; 14] =
    ["t", "xi", "theta", "phi", "p_xi", "p_theta", "p_phi", "H", "L2", "pphi", "reX", "imX", "reY", "imY"];

fn trajectory_rows(traj: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    traj.times.iter().zip(&traj.states).zip(&traj.diagnostics).map(|((t, p), d)| {
        [
            *t,
            p.xi,
            p.theta,
            p.phi,
            p.p_xi,
            p.p_theta,
            p.p_phi,
            d.h,
            d.l_sq,
            d.p_phi,
            d.x_plus.re,
            d.x_plus.im,
            d.y_plus.re,
            d.y_plus.im,
        ]
        .into_iter()
        .map(fmt_f)
        .collect()
    })
}

fn output_rows(cfg: &RunConfig, traj: &Trajectory) -> std::result::Result<Trajectory, Failure> {
    match cfg.samples {
        Some(count) => Ok(traj.resample_uniform(count.max(2))?),
        None => Ok(traj.clone()),
    }
}

/// `run.csv` → `run.summary.json`.
fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    path.with_file_name(format!("{stem}.summary.json"))
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    summary: &'a Summary,
    trajectory: &'a Trajectory,
}

pub fn simulate(cfg: &RunConfig) -> CmdResult {
    let energy = cfg.require_energy().map_err(config)?;
    let run = prepare_run(cfg, cfg.params(), energy)?;
    let traj = run_integration(cfg, &run)?;
    let summary = summarize(cfg, &run, &traj)?;
    info!("drift {:.3e}, closed {}, winding {:?}", summary.drift_max, summary.closure.closed, summary.closure.winding);
    let rows = output_rows(cfg, &traj)?;
    match cfg.format_or(Format::Csv) {
        Format::Json => write_json(cfg.output(), &TrajectoryJson { summary: &summary, trajectory: &rows }).map_err(io),
        Format::Csv => {
            write_csv(cfg.output(), &TRAJECTORY_HEADER, trajectory_rows(&rows)).map_err(io)?;
            match cfg.output() {
                Some(p) => write_json(Some(&summary_path(p)), &summary).map_err(io),
                None => {
                    let text = serde_json::to_string_pretty(&summary).map_err(io)?;
                    eprintln!("{text}");
                    Ok(())
                }
            }
        }
    }
}

// -------------------------------------------------------------- frequencies

#[derive(Serialize)]
struct FrequencyDoc {
    kappa: f64,
    beta: String,
    energy: f64,
    t_end: f64,
    radial_period: Option<f64>,
    expected_ratio: f64,
    frequencies: FrequencyReport,
    closure: ClosureReport,
}

pub fn frequencies(cfg: &RunConfig) -> CmdResult {
    let energy = cfg.require_energy().map_err(config)?;
    let run = prepare_run(cfg, cfg.params(), energy)?;
    let traj = run_integration(cfg, &run)?;
    let frequencies = estimate_frequencies(&traj)?;
    let closure = detect_closure(&traj, CLOSURE_TOL)?;
    let doc = FrequencyDoc {
        kappa: cfg.kappa,
        beta: cfg.beta_label(),
        energy,
        t_end: run.t_end,
        radial_period: run.radial_period,
        expected_ratio: cfg.n as f64 / cfg.m as f64,
        frequencies,
        closure,
    };
    write_json(cfg.output(), &doc).map_err(io)
}

// -------------------------------------------------------------------- orbit

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OrbitMode {
    /// algebraic generalized conic on the plane θ = π/2
    Planar,
    /// integrated trajectory in the chart picture (Sk sinθ cosφ, Sk sinθ sinφ, Sk cosθ)
    #[value(name = "3d")]
    Spatial,
}

pub fn orbit(cfg: &RunConfig, mode: OrbitMode) -> CmdResult {
    let params = cfg.params();
    let energy = cfg.require_energy().map_err(config)?;
    let count = cfg.samples.unwrap_or(DEFAULT_ORBIT_POINTS).max(2);
    match mode {
        OrbitMode::Planar => {
            let lz = cfg.lz.or(cfg.l).ok_or_else(|| config(anyhow!("--lz is required")))?;
            let phis = closing_phi_grid(&params, count);
            let pts = orbit_points(&params, energy, lz, cfg.phi_z, &phis).map_err(config)?;
            let gaps = pts.iter().filter(|p| p.xi.is_none()).count();
            info!("planar orbit: {count} points, {gaps} in gaps");
            match cfg.format_or(Format::Csv) {
                Format::Json => write_json(cfg.output(), &pts).map_err(io),
                Format::Csv => {
                    let rows = pts.iter().map(|p| vec![fmt_f(p.phi), fmt_opt(p.xi), fmt_f(p.x), fmt_f(p.y)]);
                    write_csv(cfg.output(), &["phi", "xi", "x", "y"], rows).map_err(io)
                }
            }
        }
        OrbitMode::Spatial => {
            let run = prepare_run(cfg, params, energy)?;
            let traj = run_integration(cfg, &run)?.resample_uniform(count)?;
            let rows: Vec<[f64; 4]> = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(&t, p)| {
                    let [x, y, z] = chart_cartesian(&params, p);
                    [t, x, y, z]
                })
                .collect();
            match cfg.format_or(Format::Csv) {
                Format::Json => write_json(cfg.output(), &rows).map_err(io),
                Format::Csv => write_csv(
                    cfg.output(),
                    &["t", "x", "y", "z"],
                    rows.iter().map(|r| r.iter().map(|&v| fmt_f(v)).collect()),
                )
                .map_err(io),
            }
        }
    }
}

// ------------------------------------------------------------------- verify

#[derive(Serialize)]
struct VerifyDoc {
    kappa: f64,
    beta: String,
    seed: u64,
    points: usize,
    threshold: f64,
    passed: bool,
    reports: Vec<BracketReport>,
}

pub fn verify(cfg: &RunConfig, threshold: Option<f64>, only: &[String]) -> CmdResult {
    let params = cfg.params();
    let threshold = threshold.unwrap_or_else(|| default_threshold(&params));
    if !(threshold > 0.0) {
        return Err(config(anyhow!("threshold must be positive, got {threshold}")));
    }
    let count = cfg.samples.unwrap_or(DEFAULT_VERIFY_POINTS);
    let points = sample_points(&params, &SampleBox::for_params(&params), count, cfg.seed);
    let registry = RelationRegistry::standard(&params)?;
    let selected: Vec<&dyn Relation> = if only.is_empty() {
        registry.iter().collect()
    } else {
        only.iter()
            .map(|name| {
                registry
                    .get(name)
                    .ok_or_else(|| config(anyhow!("unknown relation {name}; known: {}", registry.names().join(" "))))
            })
            .collect::<Result<_, _>>()?
    };
    let reports =
        selected.into_iter().map(|r| verify_registered(r, &points, threshold)).collect::<Result<Vec<_>, _>>()?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.relation.clone()).collect();
    let doc = VerifyDoc {
        kappa: cfg.kappa,
        beta: cfg.beta_label(),
        seed: cfg.seed,
        points: count,
        threshold,
        passed: failed.is_empty(),
        reports,
    };
    match cfg.format_or(Format::Json) {
        Format::Json => write_json(cfg.output(), &doc).map_err(io)?,
        Format::Csv => {
            let rows = doc.reports.iter().map(|r| {
                vec![
                    r.relation.clone(),
                    r.n.to_string(),
                    r.skipped.to_string(),
                    fmt_f(r.max_abs),
                    fmt_f(r.max_rel),
                    fmt_f(r.threshold),
                    r.passed().to_string(),
                ]
            });
            write_csv(cfg.output(), &["relation", "n", "skipped", "max_abs", "max_rel", "threshold", "passed"], rows)
                .map_err(io)?
        }
    }
    info!("{} of {} relations passed", doc.reports.len() - failed.len(), doc.reports.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("relations failed: {}", failed.join(", "))))
    }
}

// -------------------------------------------------------------------- sweep

#[derive(Debug, Clone, clap::Args)]
pub struct SweepGrid {
    /// comma-separated curvatures
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
    pub kappas: Vec<f64>,
    /// comma-separated β values "m/n"
    #[arg(long, value_delimiter = ',', required = true)]
    pub betas: Vec<String>,
    /// comma-separated energies
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
    pub energies: Vec<f64>,
}

#[derive(Serialize)]
struct Cell {
    index: usize,
    kappa: f64,
    beta: String,
    energy: f64,
    status: &'static str,
    classification: Option<OrbitClass>,
    file: Option<String>,
    drift_max: Option<f64>,
    closed: Option<bool>,
    winding: Option<(u32, u32)>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepIndex {
    l: f64,
    lz: f64,
    tol: f64,
    stepper: String,
    cells: Vec<Cell>,
}

fn sweep_cell(cfg: &RunConfig, dir: &Path, cell: &mut Cell, params: ModelParams) -> std::result::Result<(), Failure> {
    let l = cfg.require_l().map_err(config)?;
    let class = classify_orbit(&params, cell.energy, l)?;
    cell.classification = Some(class);
    if class == OrbitClass::Unbounded && cfg.t_end.is_none() {
        cell.status = "skipped";
        return Ok(());
    }
    let run = prepare_run(cfg, params, cell.energy)?;
    let traj = run_integration(cfg, &run)?;
    let closure = detect_closure(&traj, CLOSURE_TOL)?;
    let name = format!("cell_{:04}.csv", cell.index);
    let rows = output_rows(cfg, &traj)?;
    write_csv(Some(&dir.join(&name)), &TRAJECTORY_HEADER, trajectory_rows(&rows)).map_err(io)?;
    cell.file = Some(name);
    cell.drift_max = Some(traj.drift().max_factorization());
    cell.closed = Some(closure.closed);
    cell.winding = closure.winding;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, grid: &SweepGrid) -> CmdResult {
    let dir = cfg.output().ok_or_else(|| config(anyhow!("sweep needs --output DIR")))?.to_path_buf();
    let l = cfg.require_l().map_err(config)?;
    let betas = grid.betas.iter().map(|b| parse_beta(b)).collect::<anyhow::Result<Vec<_>>>().map_err(config)?;
    let mut cells = Vec::new();
    for &kappa in &grid.kappas {
        for beta in &betas {
            for &energy in &grid.energies {
                cells.push((kappa, *beta, energy));
            }
        }
    }
    std::fs::create_dir_all(&dir).map_err(io)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().map_err(io)?;
    let results: Vec<Cell> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(index, &(kappa, beta, energy))| {
                let mut cell = Cell {
                    index,
                    kappa,
                    beta: beta.to_string(),
                    energy,
                    status: "ok",
                    classification: None,
                    file: None,
                    drift_max: None,
                    closed: None,
                    winding: None,
                    error: None,
                };
                let outcome = ModelParams::with_beta(kappa, beta)
                    .map_err(Failure::from)
                    .and_then(|params| sweep_cell(cfg, &dir, &mut cell, params));
                if let Err(e) = outcome {
                    warn!("cell {index} (kappa {kappa}, beta {beta}, E {energy}): {e}");
                    cell.status = "error";
                    cell.error = Some(e.to_string());
                }
                cell
            })
            .collect()
    });
    let failed = results.iter().filter(|c| c.status == "error").count();
    info!("sweep: {} cells, {failed} failed", results.len());
    let index = SweepIndex { l, lz: cfg.lz.unwrap_or(l), tol: cfg.tol, stepper: cfg.stepper.clone(), cells: results };
    write_json(Some(&dir.join("index.json")), &index).map_err(io)
}
