//! Run configuration: a JSON file merged with command-line overrides.
//!
//! The file mirrors [`RunConfig`] with every field optional, and unknown keys
//! are rejected at every level. A serialized `RunConfig` reads back unchanged.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tavis::ladders::JumpMethod;
use tavis::ModelParams;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Collapse,
    Steady,
    Wigner,
    Meanfield,
    Trajectory,
    Liouville,
    Ladders,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Collapse => "collapse",
            Command::Steady => "steady",
            Command::Wigner => "wigner",
            Command::Meanfield => "meanfield",
            Command::Trajectory => "trajectory",
            Command::Liouville => "liouville",
            Command::Ladders => "ladders",
        }
    }

    /// Stem of the CSV/SVG/JSON outputs.
    pub fn stem(self) -> &'static str {
        match self {
            Command::Trajectory => "traj",
            c => c.name(),
        }
    }

    fn needs_omega(self) -> bool {
        self != Command::Ladders
    }
}

/// Inclusive ε range with `count` evenly spaced points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Sweep {
    pub fn grid(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + h * i as f64).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.count == 0 {
            return Err(CliError::config("sweep.count", "must be at least 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start < 0.0 || self.stop < self.start {
            return Err(CliError::config("sweep", "need 0 ≤ start ≤ stop"));
        }
        Ok(())
    }
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected start,stop,count, got `{s}`"));
        }
        let start = parts[0].parse::<f64>().map_err(|e| format!("start: {e}"))?;
        let stop = parts[1].parse::<f64>().map_err(|e| format!("stop: {e}"))?;
        let count = parts[2].parse::<usize>().map_err(|e| format!("count: {e}"))?;
        Ok(Sweep { start, stop, count })
    }
}

/// Inclusive range of photon manifolds for the ladders tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NRange {
    pub first: usize,
    pub last: usize,
}

impl std::str::FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected first,last, got `{s}`"))?;
        let first = a.trim().parse().map_err(|e| format!("first: {e}"))?;
        let last = b.trim().parse().map_err(|e| format!("last: {e}"))?;
        Ok(NRange { first, last })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStartChoice {
    /// RK4 from the ground state.
    Ground,
    /// Sparse linear solve, certified by one RK4 window.
    #[default]
    NullMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    ExactNumeric,
    Asymptotic,
    ClosedForm,
}

impl From<MethodChoice> for JumpMethod {
    fn from(m: MethodChoice) -> Self {
        match m {
            MethodChoice::ExactNumeric => JumpMethod::ExactNumeric,
            MethodChoice::Asymptotic => JumpMethod::Asymptotic,
            MethodChoice::ClosedForm => JumpMethod::ClosedForm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Step size; `None` picks a per-command default.
    pub dt: Option<f64>,
    pub tol: f64,
    pub t_max: f64,
    /// Trajectory length.
    pub t_final: f64,
    pub n_traj: usize,
    pub k_levels: usize,
    /// Wigner grid points per axis.
    pub grid: usize,
    /// Liouvillian modes per sweep point.
    pub modes: usize,
    pub kappa_filt: f64,
    pub steady_start: SteadyStartChoice,
    pub ladder_n: NRange,
    pub jump_method: MethodChoice,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: None,
            tol: 1e-8,
            t_max: 4000.0,
            t_final: 100.0,
            n_traj: 1,
            k_levels: 20,
            grid: 161,
            modes: 8,
            kappa_filt: 1.0,
            steady_start: SteadyStartChoice::NullMode,
            ladder_n: NRange { first: 10, last: 200 },
            jump_method: MethodChoice::ExactNumeric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub sweep: Option<Sweep>,
    pub numerics: Numerics,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Drive values to evaluate: the sweep grid, or the single ε.
    pub fn eps_grid(&self) -> Vec<f64> {
        self.sweep.map(|s| s.grid()).unwrap_or_else(|| vec![self.params.epsilon])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileParams {
    n_at: Option<usize>,
    omega: Option<f64>,
    epsilon: Option<f64>,
    kappa: Option<f64>,
    omega0: Option<f64>,
    n_max: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    params: Option<FileParams>,
    sweep: Option<Sweep>,
    numerics: Option<Numerics>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

/// Values given on the command line; `None` leaves the file (or default) value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub n_at: Option<usize>,
    pub omega: Option<f64>,
    pub epsilon: Option<f64>,
    pub eps_range: Option<Sweep>,
    pub kappa: Option<f64>,
    pub omega0: Option<f64>,
    pub n_max: Option<usize>,
    pub dt: Option<f64>,
    pub tol: Option<f64>,
    pub t_max: Option<f64>,
    pub t_final: Option<f64>,
    pub n_traj: Option<usize>,
    pub k_levels: Option<usize>,
    pub grid: Option<usize>,
    pub modes: Option<usize>,
    pub kappa_filt: Option<f64>,
    pub steady_start: Option<SteadyStartChoice>,
    pub ladder_n: Option<NRange>,
    pub jump_method: Option<MethodChoice>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Photon cutoff covering a coherent field of amplitude ε/κ with eight
/// standard deviations of headroom.
pub fn auto_n_max(eps_max: f64, kappa: f64) -> usize {
    let nbar = (eps_max / kappa).powi(2);
    ((nbar + 8.0 * nbar.sqrt() + 16.0).ceil() as usize).max(20)
}

pub fn parse_config_str(text: &str) -> Result<RunConfigDraft, CliError> {
    serde_json::from_str::<FileConfig>(text)
        .map(RunConfigDraft)
        .map_err(|e| CliError::Config(format!("config: {e}")))
}

pub fn read_config(path: &Path) -> Result<RunConfigDraft, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_config(cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

/// A parsed but not yet merged config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfigDraft(FileConfig);

impl RunConfigDraft {
    /// Applies the overrides, fills defaults and validates.
    pub fn resolve(self, o: &Overrides) -> Result<(RunConfig, bool), CliError> {
        let f = self.0;
        let fp = f.params.unwrap_or_default();
        let command = o.command.or(f.command).ok_or_else(|| CliError::config("command", "no command given"))?;
        let sweep = o.eps_range.or(f.sweep);
        if let Some(s) = &sweep {
            s.validate()?;
        }
        let n_at = o.n_at.or(fp.n_at).ok_or_else(|| CliError::config("params.n_at", "required (--natoms)"))?;
        let omega = match o.omega.or(fp.omega) {
            Some(w) => w,
            None if !command.needs_omega() => 1.0,
            None => return Err(CliError::config("params.omega", "required (--omega)")),
        };
        let epsilon = match o.epsilon.or(fp.epsilon).or(sweep.map(|s| s.start)) {
            Some(e) => e,
            None if matches!(command, Command::Ladders) => 0.0,
            None => return Err(CliError::config("params.epsilon", "required (--eps or --eps-range)")),
        };
        let kappa = o.kappa.or(fp.kappa).unwrap_or(1.0);
        let eps_max = sweep.map(|s| s.stop).unwrap_or(epsilon).max(epsilon);
        let given_n_max = o.n_max.or(fp.n_max);
        let auto = given_n_max.is_none();
        let n_max = given_n_max.unwrap_or_else(|| {
            let base = auto_n_max(eps_max, kappa);
            // the gap only closes once the cutoff is far above the resonant manifold
            if matches!(command, Command::Spectrum | Command::Collapse) { base.max(200 * (n_at + 1)) } else { base }
        });
        let params = ModelParams { n_at, omega, epsilon, kappa, omega0: o.omega0.or(fp.omega0).unwrap_or(0.0), n_max };
        params.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;

        let mut nu = f.numerics.unwrap_or_default();
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = o.$field { nu.$field = v; } )* };
        }
        set!(tol, t_max, t_final, n_traj, k_levels, grid, modes, kappa_filt, steady_start, ladder_n, jump_method);
        if o.dt.is_some() {
            nu.dt = o.dt;
        }
        validate_numerics(&nu)?;
        let cfg = RunConfig {
            command,
            params,
            sweep,
            numerics: nu,
            seed: o.seed.or(f.seed).unwrap_or(0),
            out_dir: o.out_dir.clone().or(f.out_dir).unwrap_or_else(|| PathBuf::from("out")),
        };
        Ok((cfg, auto))
    }
}

fn validate_numerics(n: &Numerics) -> Result<(), CliError> {
    if let Some(dt) = n.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::config("numerics.dt", "must be positive"));
        }
    }
    let positive = [("numerics.tol", n.tol), ("numerics.t_max", n.t_max), ("numerics.kappa_filt", n.kappa_filt)];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::config(name, "must be positive"));
        }
    }
    if !(n.t_final >= 0.0 && n.t_final.is_finite()) {
        return Err(CliError::config("numerics.t_final", "must be non-negative"));
    }
    if n.n_traj == 0 {
        return Err(CliError::config("numerics.n_traj", "must be at least 1"));
    }
    if n.k_levels < 2 {
        return Err(CliError::config("numerics.k_levels", "must be at least 2"));
    }
    if n.grid < 2 {
        return Err(CliError::config("numerics.grid", "must be at least 2"));
    }
    if n.modes < 2 {
        return Err(CliError::config("numerics.modes", "must be at least 2"));
    }
    if n.ladder_n.first < 1 || n.ladder_n.last < n.ladder_n.first {
        return Err(CliError::config("numerics.ladder_n", "need 1 ≤ first ≤ last"));
    }
    Ok(())
}
