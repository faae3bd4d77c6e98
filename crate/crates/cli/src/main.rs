use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tavis_cli::config::{self, Command, MethodChoice, NRange, Overrides, RunConfigDraft, SteadyStartChoice, Sweep};
use tavis_cli::CliError;

/// Driven, damped Tavis–Cummings simulations.
///
/// Values from --config are overridden by flags; anything left unset takes
/// its default. Outputs go to <out>/<command>.{csv,svg,json}.
#[derive(Parser, Debug)]
#[command(name = "tavis", version)]
struct Cli {
    /// Pipeline to run; may instead come from the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "natoms")]
    n_at: Option<usize>,
    /// Coupling Ω/κ.
    #[arg(long)]
    omega: Option<f64>,
    /// Single drive value ε/κ.
    #[arg(long = "eps")]
    epsilon: Option<f64>,
    /// Drive sweep as start,stop,count.
    #[arg(long = "eps-range")]
    eps_range: Option<Sweep>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    omega0: Option<f64>,
    /// Photon cutoff; chosen from ε when omitted.
    #[arg(long = "nmax")]
    n_max: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "tmax")]
    t_max: Option<f64>,
    #[arg(long = "tfinal")]
    t_final: Option<f64>,
    #[arg(long = "ntraj")]
    n_traj: Option<usize>,
    #[arg(long = "k-levels")]
    k_levels: Option<usize>,
    /// Wigner grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Liouvillian modes per sweep point.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long = "kappa-filt")]
    kappa_filt: Option<f64>,
    #[arg(long = "steady-start", value_enum)]
    steady_start: Option<SteadyStartChoice>,
    /// Photon manifolds for ladders as first,last.
    #[arg(long = "n-range")]
    ladder_n: Option<NRange>,
    #[arg(long = "method", value_enum)]
    jump_method: Option<MethodChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            command: self.command,
            n_at: self.n_at,
            omega: self.omega,
            epsilon: self.epsilon,
            eps_range: self.eps_range,
            kappa: self.kappa,
            omega0: self.omega0,
            n_max: self.n_max,
            dt: self.dt,
            tol: self.tol,
            t_max: self.t_max,
            t_final: self.t_final,
            n_traj: self.n_traj,
            k_levels: self.k_levels,
            grid: self.grid,
            modes: self.modes,
            kappa_filt: self.kappa_filt,
            steady_start: self.steady_start,
            ladder_n: self.ladder_n,
            jump_method: self.jump_method,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    tavis_cli::workers_from_env()?;
    let draft = match &cli.config {
        Some(p) => config::read_config(p)?,
        None => RunConfigDraft::default(),
    };
    let (cfg, auto) = draft.resolve(&cli.overrides())?;
    for p in tavis_cli::execute(&cfg, auto)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tavis: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
