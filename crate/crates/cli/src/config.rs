//! Run configuration: command-line flags merged over an optional
//! `key=value` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use perlick::dynamics::{IntegrateOptions, DEFAULT_STEPPER};
use perlick::{Beta, ModelParams};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => bail!("format must be csv or json, got '{s}'"),
        }
    }
}

/// Flags shared by every subcommand. All are optional here so that the
/// config file can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// key=value file; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// curvature κ
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// β as "m/n" (or an integer m)
    #[arg(long)]
    pub beta: Option<String>,
    /// energy E
    #[arg(long = "E", visible_alias = "energy", allow_hyphen_values = true)]
    pub energy: Option<f64>,
    /// total angular momentum ℓ
    #[arg(long)]
    pub l: Option<f64>,
    /// azimuthal angular momentum ℓ_z
    #[arg(long, allow_hyphen_values = true)]
    pub lz: Option<f64>,
    /// conic phase offset φ_z
    #[arg(long = "phi-z", visible_alias = "phi_z", allow_hyphen_values = true)]
    pub phi_z: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// integrator tolerance, within [1e-14, 1e-6]
    #[arg(long)]
    pub tol: Option<f64>,
    /// integration span
    #[arg(long = "t-end", visible_alias = "t_end")]
    pub t_end: Option<f64>,
    /// sample count (grid size, output rows or verification points)
    #[arg(long, visible_alias = "points")]
    pub samples: Option<usize>,
    /// output file (or directory for sweep); stdout when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Runge–Kutta pair: dopri5, cash-karp or fehlberg
    #[arg(long)]
    pub stepper: Option<String>,
    /// worker threads for sweep
    #[arg(long)]
    pub jobs: Option<usize>,
    /// accepted-step budget of the integrator
    #[arg(long = "max-steps", visible_alias = "max_steps")]
    pub max_steps: Option<usize>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub kappa: f64,
    pub m: u32,
    pub n: u32,
    pub energy: Option<f64>,
    pub l: Option<f64>,
    pub lz: Option<f64>,
    pub phi_z: f64,
    pub seed: u64,
    pub tol: f64,
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub stepper: String,
    pub jobs: usize,
    pub max_steps: usize,
}

pub const DEFAULT_TOL: f64 = 1e-10;

const KNOWN_KEYS: &[&str] = &[
    "kappa",
    "beta",
    "E",
    "energy",
    "l",
    "lz",
    "phi_z",
    "seed",
    "tol",
    "t_end",
    "samples",
    "points",
    "output",
    "format",
    "stepper",
    "jobs",
    "max_steps",
];

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value, got '{raw}'", no + 1))?;
        let key = match k.trim() {
            "energy" => "E",
            "points" => "samples",
            other => other,
        };
        if !KNOWN_KEYS.contains(&key) {
            bail!("line {}: unknown key '{key}'", no + 1);
        }
        if map.insert(key.to_string(), v.trim().to_string()).is_some() {
            bail!("line {}: duplicate key '{key}'", no + 1);
        }
    }
    Ok(map)
}

fn from_file<T: FromStr>(file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    file.get(key).map(|v| v.parse::<T>().map_err(|e| anyhow!("config key '{key}' = '{v}': {e}"))).transpose()
}

pub fn parse_beta(s: &str) -> Result<Beta> {
    let s = s.trim();
    if !s.contains('/') {
        let m: u32 = s.parse().map_err(|_| anyhow!("cannot parse beta '{s}', expected 'm/n'"))?;
        return Ok(Beta::new(m, 1)?);
    }
    Ok(s.parse::<Beta>()?)
}

fn finite(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !x.is_finite() => bail!("{name} must be finite, got {x}"),
        _ => Ok(v),
    }
}

impl RunConfig {
    pub fn resolve(flags: &RunFlags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let kappa = flags.kappa.or(from_file(&file, "kappa")?).unwrap_or(0.0);
        let beta_src = flags.beta.clone().or_else(|| file.get("beta").cloned()).unwrap_or_else(|| "1/1".into());
        let beta = parse_beta(&beta_src)?;
        let cfg = RunConfig {
            kappa,
            m: beta.m(),
            n: beta.n(),
            energy: finite("E", flags.energy.or(from_file(&file, "E")?))?,
            l: finite("l", flags.l.or(from_file(&file, "l")?))?,
            lz: finite("lz", flags.lz.or(from_file(&file, "lz")?))?,
            phi_z: flags.phi_z.or(from_file(&file, "phi_z")?).unwrap_or(0.0),
            seed: flags.seed.or(from_file(&file, "seed")?).unwrap_or(0),
            tol: flags.tol.or(from_file(&file, "tol")?).unwrap_or(DEFAULT_TOL),
            t_end: flags.t_end.or(from_file(&file, "t_end")?),
            samples: flags.samples.or(from_file(&file, "samples")?),
            output: flags.output.clone().or(from_file(&file, "output")?),
            format: flags.format.or(from_file(&file, "format")?),
            stepper: flags
                .stepper
                .clone()
                .or_else(|| file.get("stepper").cloned())
                .unwrap_or_else(|| DEFAULT_STEPPER.into()),
            jobs: flags.jobs.or(from_file(&file, "jobs")?).unwrap_or(1),
            max_steps: flags
                .max_steps
                .or(from_file(&file, "max_steps")?)
                .unwrap_or(IntegrateOptions::default().max_steps),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        ModelParams::new(self.kappa, self.m, self.n)?;
        if !self.phi_z.is_finite() {
            bail!("phi_z must be finite");
        }
        if let Some(l) = self.l {
            if l <= 0.0 {
                bail!("l must be positive, got {l}");
            }
            if let Some(lz) = self.lz {
                if lz.abs() > l {
                    bail!("|lz| = {} exceeds l = {l}", lz.abs());
                }
            }
        }
        if !(1e-14..=1e-6).contains(&self.tol) {
            bail!("tol = {} outside [1e-14, 1e-6]", self.tol);
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0 && t.is_finite()) {
                bail!("t_end must be positive, got {t}");
            }
        }
        if self.samples == Some(0) {
            bail!("samples must be at least 1");
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if self.max_steps == 0 {
            bail!("max_steps must be at least 1");
        }
        perlick::dynamics::StepperRegistry::default().get(&self.stepper)?;
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.kappa, self.m, self.n).expect("validated")
    }

    pub fn beta_label(&self) -> String {
        format!("{}/{}", self.m, self.n)
    }

    pub fn require_energy(&self) -> Result<f64> {
        self.energy.ok_or_else(|| anyhow!("--E is required"))
    }

    pub fn require_l(&self) -> Result<f64> {
        self.l.ok_or_else(|| anyhow!("--l is required"))
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn output(&self) -> Option<&Path> {
        self.output.as_deref()
    }
}
