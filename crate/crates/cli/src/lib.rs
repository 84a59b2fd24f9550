//! Command-line front end: configuration, dispatch and serialization.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{resolve, Command, Settings};
use error::{CliError, EXIT_CONFIG, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "homsim", version, about = "Heralded two-ion entanglement and photon redistribution by quantum trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,

    /// Flat JSON file with any of the flag names as keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Success probability and heralded fidelity over an eta, lambda or gamma grid.
    EntangleSweep,
    /// Same-detector probability of the second photon over a phase grid.
    Redistribute,
    /// Consistency, master-equation and waiting-time checks of the simulator.
    OracleCheck {
        /// Drop one jump channel to exercise the consistency check.
        #[arg(long, hide = true)]
        corrupt_channels: bool,
    },
    /// Single-emitter emission spectrum on a frequency grid.
    Spectrum,
}

impl CommandArgs {
    fn kind(&self) -> Command {
        match self {
            CommandArgs::EntangleSweep => Command::EntangleSweep,
            CommandArgs::Redistribute => Command::Redistribute,
            CommandArgs::OracleCheck { .. } => Command::OracleCheck,
            CommandArgs::Spectrum => Command::Spectrum,
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let cfg = resolve(cli.command.kind(), &cli.settings.over(&file))?;
    let corrupt = matches!(cli.command, CommandArgs::OracleCheck { corrupt_channels: true });
    commands::execute(&cfg, corrupt)
}

/// Parse arguments, run, report errors on stderr and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("homsim: {e}");
            e.exit_code()
        }
    }
}
