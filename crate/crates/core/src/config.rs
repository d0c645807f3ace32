//! Run configuration: a sectioned `key = value` text file (TOML syntax).
//!
//! Required keys are the grid dimensions, the domain extents and the time
//! horizon. Every other key is optional and falls back to the defaults
//! documented on the corresponding field. Unknown keys are rejected.
//!
//! ```toml
//! [grid]
//! nx = 16
//! ny = 16
//! np = 8
//!
//! [domain]
//! lx = 1.0e6
//! ly = 1.0e6
//! p1 = 1.0e4
//! p0 = 1.0e5
//!
//! [time]
//! horizon = 3600.0
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::boundary::BoundaryData;
use crate::error::ConfigError;
use crate::microphysics::{Diffusion, MicroParams, Params, Physics};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub domain: DomainSpec,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub microphysics: MicroParams,
    #[serde(default)]
    pub diffusion: Diffusion,
    #[serde(default)]
    pub boundary: BoundaryData,
    #[serde(default)]
    pub initial: InitialSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub np: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Zonal extent (m).
    pub lx: f64,
    /// Meridional extent (m).
    pub ly: f64,
    /// Top pressure (Pa).
    pub p1: f64,
    /// Surface pressure (Pa).
    pub p0: f64,
    /// Background temperature at `p1` (K). Default 300.
    #[serde(default = "default_tbar")]
    pub tbar_top: f64,
    /// Background temperature at `p0` (K). Default 300.
    #[serde(default = "default_tbar")]
    pub tbar_bottom: f64,
}

fn default_tbar() -> f64 {
    300.0
}

/// Initial-condition recipe and its parameters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    /// One of `quiescent`, `supersaturated-bubble`, `dry-dynamics`, `random`.
    pub recipe: String,
    /// Base temperature (K).
    pub t0: f64,
    /// Horizontal temperature perturbation amplitude (K).
    pub t_amplitude: f64,
    /// Background vapor as a fraction of the saturation value.
    pub relative_humidity: f64,
    /// Background cloud water (kg/kg).
    pub qc0: f64,
    /// Background rain water (kg/kg).
    pub qr0: f64,
    /// Velocity amplitude (m/s).
    pub velocity: f64,
    /// Bubble vapor excess over saturation (kg/kg).
    pub bubble_excess: f64,
    /// Bubble radius as a fraction of the smaller horizontal extent.
    pub bubble_radius: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            recipe: "quiescent".to_string(),
            t0: 265.0,
            t_amplitude: 2.0,
            relative_humidity: 0.7,
            qc0: 0.0,
            qr0: 0.0,
            velocity: 5.0,
            bubble_excess: 2.0e-3,
            bubble_radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Heun,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    /// Integration horizon (s).
    pub horizon: f64,
    /// Courant limit applied to every explicit constraint. Default 0.1.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Default 1e-3 s.
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    /// Default 600 s.
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Optional hard cap on the number of steps.
    #[serde(default)]
    pub max_steps: Option<u64>,
    /// Write a time-series row every this many steps. Default 1.
    #[serde(default = "default_output_every")]
    pub output_every: u64,
    /// Write a snapshot every this many steps (0 = initial and final only).
    #[serde(default)]
    pub snapshot_every: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_cfl() -> f64 {
    0.1
}
fn default_dt_min() -> f64 {
    1.0e-3
}
fn default_dt_max() -> f64 {
    600.0
}
fn default_output_every() -> u64 {
    1
}
fn default_scheme() -> Scheme {
    Scheme::Euler
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    /// `scenario`, `epsilon` or `twin`.
    pub name: String,
    /// Regularization parameter of the evaporation closure, in (0, 1].
    pub epsilon: f64,
    /// Strictly decreasing ladder for the epsilon study.
    pub epsilon_list: Vec<f64>,
    /// Perturbation amplitudes for the twin-run study.
    pub deltas: Vec<f64>,
    /// Weight on the cloud/rain part of the twin-run difference norm.
    pub twin_weight: f64,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "scenario".to_string(),
            epsilon: 0.1,
            epsilon_list: epsilon_ladder(1.0e-1, 1.0e-4),
            deltas: vec![1.0e-5, 1.0e-6, 1.0e-7],
            twin_weight: 10.0,
            seed: 0,
        }
    }
}

/// Halving ladder from `start` down to (at least) `stop`.
pub fn epsilon_ladder(start: f64, stop: f64) -> Vec<f64> {
    let mut out = vec![start];
    let mut e = start;
    while e > stop {
        e *= 0.5;
        out.push(e);
    }
    out
}

const RECIPES: [&str; 4] = ["quiescent", "supersaturated-bubble", "dry-dynamics", "random"];
const EXPERIMENTS: [&str; 3] = ["scenario", "epsilon", "twin"];

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        ConfigError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(cond: bool, what: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{what} violated")))
    }
}

impl RunConfig {
    pub fn params(&self) -> Params {
        Params {
            physics: self.physics,
            micro: self.microphysics,
            diffusion: self.diffusion,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        check(g.nx >= 2 && g.ny >= 2 && g.np >= 2, "nx, ny, np >= 2")?;
        let d = &self.domain;
        check(d.lx > 0.0 && d.ly > 0.0, "lx, ly > 0")?;
        check(d.p1 > 0.0, "0 < p1")?;
        check(d.p1 < d.p0, "p1 < p0")?;
        check(d.tbar_top > 0.0 && d.tbar_bottom > 0.0, "background temperature > 0")?;

        let ph = &self.physics;
        check(
            ph.r > 0.0 && ph.rd > 0.0 && ph.cp > 0.0 && ph.g > 0.0,
            "R, Rd, cp, g > 0",
        )?;
        check(ph.latent_heat >= 0.0, "L >= 0")?;

        let m = &self.microphysics;
        check(
            [m.c_ev, m.c_cr, m.c_ac, m.c_cd, m.c_cn].iter().all(|&c| c >= 0.0),
            "rate constants >= 0",
        )?;
        check(m.beta > 0.0 && m.beta <= 1.0, "beta in (0, 1]")?;
        check(m.t_a <= m.t_b, "TA <= TB")?;
        check(m.t_a >= 0.0, "TA >= 0")?;
        check(m.q_vs_star >= 0.0 && m.q_ac_star >= 0.0, "thresholds >= 0")?;
        check(m.terminal_velocity >= 0.0, "V >= 0")?;
        check(m.p_ref > 0.0, "p_ref > 0")?;

        check(
            self.diffusion.all().iter().all(|c| c.mu >= 0.0 && c.nu >= 0.0),
            "diffusivities >= 0",
        )?;
        self.boundary.validate()?;

        let i = &self.initial;
        check(RECIPES.contains(&i.recipe.as_str()), "known initial recipe")?;
        check(i.t0 > 0.0, "initial t0 > 0")?;
        check(
            i.t_amplitude >= 0.0 && i.t_amplitude < i.t0,
            "0 <= t_amplitude < t0",
        )?;
        check(
            i.relative_humidity >= 0.0 && i.qc0 >= 0.0 && i.qr0 >= 0.0 && i.bubble_excess >= 0.0,
            "initial moisture >= 0",
        )?;
        check(i.bubble_radius > 0.0, "bubble_radius > 0")?;

        let t = &self.time;
        check(t.horizon > 0.0, "horizon > 0")?;
        check(t.cfl > 0.0 && t.cfl <= 1.0, "cfl in (0, 1]")?;
        check(t.dt_min > 0.0 && t.dt_min <= t.dt_max, "0 < dt_min <= dt_max")?;
        check(t.output_every >= 1, "output_every >= 1")?;

        let e = &self.experiment;
        check(EXPERIMENTS.contains(&e.name.as_str()), "known experiment")?;
        check(e.epsilon > 0.0 && e.epsilon <= 1.0, "epsilon in (0, 1]")?;
        check(
            e.epsilon_list.iter().all(|&x| x > 0.0 && x <= 1.0),
            "epsilon_list entries in (0, 1]",
        )?;
        check(
            e.epsilon_list.windows(2).all(|w| w[1] < w[0]),
            "epsilon_list strictly decreasing",
        )?;
        check(e.deltas.iter().all(|&x| x >= 0.0), "deltas >= 0")?;
        check(e.twin_weight > 0.0, "twin_weight > 0")?;
        Ok(())
    }

    /// Desk-scale configuration used by tests and as the documented baseline.
    pub fn desk_scale() -> Self {
        parse_config(
            "[grid]\nnx = 16\nny = 16\nnp = 8\n\
             [domain]\nlx = 1.0e6\nly = 1.0e6\np1 = 1.0e4\np0 = 1.0e5\n\
             [time]\nhorizon = 3600.0\n",
        )
        .expect("built-in configuration is valid")
    }
}
