//! Run configuration: a flat JSON file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use homsim::experiments::{
    default_phi_grid, SweepParam, DEFAULT_ETA_GRID, DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID,
};
use homsim::model::{HamiltonianChoice, SystemParams};
use homsim::trajectory::EngineKind;
use homsim::Error as SimError;

use crate::error::CliError;

/// Every configurable key. The same struct is read from the config file and
/// from flags; a flag that is present wins over the file.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Command name; when present in a file it must match the subcommand.
    #[arg(skip)]
    pub command: Option<String>,

    /// Cavity coupling g (the unit of frequency).
    #[arg(long, global = true)]
    pub g: Option<f64>,
    /// Classical drive Rabi frequency Ω.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// Detuning Δ of the upper level.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Cavity decay κ.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Spontaneous rate c→a.
    #[arg(long, global = true)]
    pub gamma_ca: Option<f64>,
    /// Spontaneous rate c→b.
    #[arg(long, global = true)]
    pub gamma_cb: Option<f64>,
    /// Sets both spontaneous rates.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Detection efficiency η.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Beam-splitter ratio λ = R/T.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Manipulation phase φ.
    #[arg(long, global = true)]
    pub phi: Option<f64>,
    /// Fixed-step engine time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// First-photon waiting window T.
    #[arg(long, global = true)]
    pub t_wait: Option<f64>,
    /// Second-photon waiting window (default 100·T).
    #[arg(long, global = true)]
    pub t_wait2: Option<f64>,
    /// Photon-number cutoff per cavity (1 or 2).
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// auto, full or adiabatic.
    #[arg(long, global = true)]
    pub hamiltonian: Option<String>,
    /// fast or fixed.
    #[arg(long, global = true)]
    pub engine: Option<String>,

    /// Trajectories per grid point.
    #[arg(long, global = true)]
    pub n_traj: Option<u64>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Swept parameter for entangle-sweep: eta, lambda or gamma.
    #[arg(long, global = true)]
    pub param: Option<String>,
    /// Comma-separated grid values.
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub grid: Option<Vec<f64>>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Emitter decay rate Γ for the spectrum command.
    #[arg(long, global = true)]
    pub spectrum_gamma: Option<f64>,
    /// Emitter frequency ω for the spectrum command.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub spectrum_omega: Option<f64>,
    /// Emission time for the spectrum command; `inf` for the long-time limit.
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Lower end of the frequency grid.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu_min: Option<f64>,
    /// Upper end of the frequency grid.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu_max: Option<f64>,
    /// Number of frequency grid points.
    #[arg(long, global = true)]
    pub nu_points: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),* $(,)?) => {
        Settings { $($field: $top.$field.clone().or($base.$field.clone()),)* }
    };
}

impl Settings {
    /// Fields set in `self` override those in `base`.
    pub fn over(&self, base: &Settings) -> Settings {
        let top = self;
        overlay!(
            base, top, command, g, omega, delta, kappa, gamma_ca, gamma_cb, gamma, eta, lambda,
            phi, dt, t_wait, t_wait2, n_max, hamiltonian, engine, n_traj, seed, param, grid,
            out, format, threads, spectrum_gamma, spectrum_omega, t, nu_min, nu_max, nu_points,
        )
    }

    pub fn from_json(text: &str) -> Result<Settings, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") {
                CliError::Config(format!("unknown key in config: {msg}"))
            } else {
                CliError::Config(format!("malformed config: {msg}"))
            }
        })
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    EntangleSweep,
    Redistribute,
    OracleCheck,
    Spectrum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EntangleSweep => "entangle-sweep",
            Command::Redistribute => "redistribute",
            Command::OracleCheck => "oracle-check",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumConfig {
    pub gamma: f64,
    pub omega: f64,
    pub t: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub nu_points: usize,
}

/// Fully resolved configuration of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: SystemParams,
    pub engine: EngineKind,
    pub n_traj: u64,
    pub seed: u64,
    pub sweep_param: Option<SweepParam>,
    pub grid: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub spectrum: SpectrumConfig,
}

pub const DEFAULT_SEED: u64 = 1;

fn sim_to_config(e: SimError) -> CliError {
    match e {
        SimError::InvalidParameter { name, value, reason } => {
            CliError::Config(format!("invalid value {value} for \"{name}\": {reason}"))
        }
        other => CliError::Config(other.to_string()),
    }
}

fn parse_choice<T>(key: &str, value: &Option<String>, default: T, options: &[(&str, T)]) -> Result<T, CliError>
where
    T: Copy,
{
    match value {
        None => Ok(default),
        Some(v) => options
            .iter()
            .find(|(name, _)| name == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                CliError::Config(format!("invalid value \"{v}\" for \"{key}\": expected one of {names:?}"))
            }),
    }
}

/// Apply defaults to merged settings and validate them.
pub fn resolve(command: Command, s: &Settings) -> Result<RunConfig, CliError> {
    if let Some(name) = &s.command {
        if name != command.name() {
            return Err(CliError::Config(format!(
                "invalid value \"{name}\" for \"command\": config is for a different command than {}",
                command.name()
            )));
        }
    }
    let d = SystemParams::default();
    let t_wait = s.t_wait.unwrap_or(d.t_wait);
    let (gamma_ca, gamma_cb) = (
        s.gamma_ca.or(s.gamma).unwrap_or(d.gamma_ca),
        s.gamma_cb.or(s.gamma).unwrap_or(d.gamma_cb),
    );
    let params = SystemParams {
        g: s.g.unwrap_or(d.g),
        omega: s.omega.unwrap_or(d.omega),
        delta: s.delta.unwrap_or(d.delta),
        kappa: s.kappa.unwrap_or(d.kappa),
        gamma_ca,
        gamma_cb,
        eta: s.eta.unwrap_or(d.eta),
        lambda: s.lambda.unwrap_or(d.lambda),
        phi: s.phi.unwrap_or(d.phi),
        dt: s.dt.unwrap_or(d.dt),
        t_wait,
        t_wait2: s.t_wait2.unwrap_or(100.0 * t_wait),
        n_max: s.n_max.unwrap_or(d.n_max),
        hamiltonian: parse_choice(
            "hamiltonian",
            &s.hamiltonian,
            HamiltonianChoice::Auto,
            &[
                ("auto", HamiltonianChoice::Auto),
                ("full", HamiltonianChoice::Full),
                ("adiabatic", HamiltonianChoice::Adiabatic),
            ],
        )?,
    };
    params.validate().map_err(sim_to_config)?;
    let engine = parse_choice(
        "engine",
        &s.engine,
        EngineKind::Fast,
        &[("fast", EngineKind::Fast), ("fixed", EngineKind::Fixed)],
    )?;
    let format = parse_choice("format", &s.format, Format::Csv, &[("csv", Format::Csv), ("json", Format::Json)])?;

    let sweep_param = match command {
        Command::EntangleSweep => Some(parse_choice(
            "param",
            &s.param,
            SweepParam::Eta,
            &[
                ("eta", SweepParam::Eta),
                ("lambda", SweepParam::Lambda),
                ("gamma", SweepParam::Gamma),
            ],
        )?),
        _ => None,
    };
    let grid = match (&s.grid, command, sweep_param) {
        (Some(g), _, _) => g.clone(),
        (None, Command::EntangleSweep, Some(SweepParam::Eta)) => DEFAULT_ETA_GRID.to_vec(),
        (None, Command::EntangleSweep, Some(SweepParam::Lambda)) => DEFAULT_LAMBDA_GRID.to_vec(),
        (None, Command::EntangleSweep, _) => DEFAULT_GAMMA_GRID.to_vec(),
        (None, Command::Redistribute, _) => default_phi_grid(13),
        (None, _, _) => Vec::new(),
    };
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("invalid value for \"grid\": entries must be finite".into()));
    }
    if matches!(command, Command::EntangleSweep | Command::Redistribute) && grid.is_empty() {
        return Err(CliError::Config("invalid value for \"grid\": must not be empty".into()));
    }
    if let Some(p) = sweep_param {
        for &v in &grid {
            p.apply(&params, v).map_err(sim_to_config)?;
        }
    }
    if command == Command::Redistribute {
        for &phi in &grid {
            SystemParams { phi, ..params.clone() }.validate().map_err(sim_to_config)?;
        }
    }

    let n_traj = s.n_traj.unwrap_or(match command {
        Command::Redistribute => 10_000,
        Command::OracleCheck => 5_000,
        _ => 100_000,
    });
    if n_traj == 0 {
        return Err(CliError::Config("invalid value 0 for \"n_traj\": must be at least 1".into()));
    }
    if s.threads == Some(0) {
        return Err(CliError::Config("invalid value 0 for \"threads\": must be at least 1".into()));
    }

    let spectrum = SpectrumConfig {
        gamma: s.spectrum_gamma.unwrap_or(1.0),
        omega: s.spectrum_omega.unwrap_or(0.0),
        t: s.t.unwrap_or(f64::INFINITY),
        nu_min: s.nu_min.unwrap_or(-10.0),
        nu_max: s.nu_max.unwrap_or(10.0),
        nu_points: s.nu_points.unwrap_or(201),
    };
    if !(spectrum.gamma > 0.0 && spectrum.gamma.is_finite()) {
        return Err(CliError::Config(format!(
            "invalid value {} for \"spectrum_gamma\": must be positive",
            spectrum.gamma
        )));
    }
    if !(spectrum.t >= 0.0) {
        return Err(CliError::Config(format!("invalid value {} for \"t\": must be non-negative", spectrum.t)));
    }
    if !(spectrum.nu_min.is_finite() && spectrum.nu_max.is_finite() && spectrum.nu_min <= spectrum.nu_max) {
        return Err(CliError::Config("invalid value for \"nu_min\"/\"nu_max\": need nu_min ≤ nu_max".into()));
    }
    if spectrum.nu_points == 0 {
        return Err(CliError::Config("invalid value 0 for \"nu_points\": must be at least 1".into()));
    }

    Ok(RunConfig {
        command,
        params,
        engine,
        n_traj,
        seed: s.seed.unwrap_or(DEFAULT_SEED),
        sweep_param,
        grid,
        out: s.out.clone(),
        format,
        threads: s.threads,
        spectrum,
    })
}
