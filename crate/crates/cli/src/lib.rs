//! Terminal client for the agrisense stack: scenario runner, server
//! launcher, history table, series export and alert watcher.

pub mod client;
pub mod plot;
pub mod table;
pub mod watch;

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use agrisense_core::analytics::DutyCycleConfig;
use agrisense_core::pipeline::Pace;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub use client::{ClientError, ServiceClient};
pub use commands::{load_rules, load_spec};

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:3000";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NETWORK: i32 = 2;
    pub const DATA: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "agrisense", version, about = "Smart-agriculture telemetry: simulate, serve, inspect")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Channel service base URL. `run` without it uses an embedded store.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true, default_value_t = 1)]
    pub channel: u64,
    /// Number of most recent entries to fetch.
    #[arg(long, global = true, default_value_t = 100)]
    pub results: usize,
    /// Bundled scenario name or path to a scenario file.
    #[arg(long, global = true, default_value = "paper_hour")]
    pub scenario: String,
    /// `max`, or simulated seconds per wall-clock second (e.g. `60`).
    #[arg(long, global = true, default_value = "max")]
    pub speed: Pace,
    /// Alert rules file (TOML, `[[rule]]` tables). Defaults to the built-in
    /// heat and dry rules.
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    /// Read key for private channels.
    #[arg(long, global = true)]
    pub read_key: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator and gateway over a scenario, publishing every reading.
    Run(RunArgs),
    /// Start the channel service.
    Serve(ServeArgs),
    /// Print recent entries as a table.
    Table,
    /// Export one field as CSV and draw a sparkline.
    Plot(PlotArgs),
    /// Poll the channel and print alert events as they fire.
    WatchAlerts(WatchArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Write key of the target channel (required with --endpoint).
    #[arg(long)]
    pub write_key: Option<String>,
    /// Scenario time zero, e.g. 2024-12-15T10:00:00Z. Defaults to now.
    #[arg(long)]
    pub start: Option<String>,
    /// Persist the embedded store here (ignored with --endpoint).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Power the rain sensor down during forecast fair weather.
    #[arg(long)]
    pub duty_cycle: bool,
    /// Fair-weather pressure threshold in hPa.
    #[arg(long, default_value_t = DutyCycleConfig::<f64>::default().fair_weather_hpa)]
    pub fair_hpa: f64,
    #[arg(long, default_value_t = 20.0)]
    pub moisture_floor: f64,
    #[arg(long, default_value_t = 40.0)]
    pub moisture_ceiling: f64,
    /// Print every LCD frame.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Minimum seconds between accepted writes per channel; 0 disables.
    #[arg(long)]
    pub rate_limit: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Field number, 1..=8.
    #[arg(long, default_value_t = 1)]
    pub field: u8,
    /// Add a moving-average column.
    #[arg(long)]
    pub forecast: bool,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WatchArgs {
    /// Seconds between polls.
    #[arg(long, default_value_t = 2.0)]
    pub interval: f64,
    /// Stop after this many successful polls.
    #[arg(long)]
    pub polls: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Network(_) => exit::NETWORK,
            CliError::Data(_) => exit::DATA,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Network { .. } => CliError::Network(e.to_string()),
            ClientError::Status { .. } | ClientError::Data(_) => CliError::Data(e.to_string()),
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    exit::OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    exit::USAGE
                }
            };
            return code;
        }
    };
    match commands::dispatch(cli, out, err) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
