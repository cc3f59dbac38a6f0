//! The `adaas` operator CLI.
//!
//! Exit codes: 0 success, 1 remote or validation failure, 2 local usage error.

mod client;
mod commands;
mod render;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

pub use client::Client;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:7070";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable local files.
    #[error("{0}")]
    Usage(String),
    /// The server or the request content was rejected, or the server is unreachable.
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Remote(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "adaas", version, about = "Declarative anomaly-detector deployment")]
pub struct Cli {
    /// Control server base URL.
    #[arg(long, global = true, env = "ADAAS_SERVER")]
    pub server: Option<String>,
    #[arg(long, short, global = true, value_enum)]
    pub output: Option<OutputFormat>,
    /// TOML file with `server` and `output` defaults.
    #[arg(long, global = true, env = "ADAAS_CLI_CONFIG")]
    pub cli_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replace the desired state with a JSON document.
    Apply {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
    },
    /// List deployed detectors and their states.
    Status,
    /// Remove one detector from the desired state.
    Delete { id: String },
    /// List the analyses the server offers.
    Analyses,
    /// Run one detector over a CSV file locally.
    Run {
        #[arg(long)]
        analysis: String,
        /// Parameter as `name=value`; values are parsed as JSON when possible.
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kpi: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic runs and evaluate the prediction pipeline.
    Experiment {
        /// TOML experiment configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    server: Option<String>,
    output: Option<OutputFormat>,
}

/// Resolved settings: flags and environment override the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub server: String,
    pub output: OutputFormat,
}

impl Settings {
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let file = match &cli.cli_config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let server = cli
            .server
            .clone()
            .or(file.server)
            .unwrap_or_else(|| DEFAULT_SERVER.to_owned());
        if !(server.starts_with("http://") || server.starts_with("https://")) {
            return Err(CliError::Usage(format!("server URL must be http(s): {server}")));
        }
        Ok(Self {
            server: server.trim_end_matches('/').to_owned(),
            output: cli.output.or(file.output).unwrap_or_default(),
        })
    }
}

/// Execute a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = Settings::resolve(cli)?;
    let client = || Client::new(&settings.server);
    let fmt = settings.output;
    match &cli.command {
        Command::Apply { file } => commands::apply(&client()?, file, fmt, out),
        Command::Status => commands::status(&client()?, fmt, out),
        Command::Delete { id } => commands::delete(&client()?, id, fmt, out),
        Command::Analyses => commands::analyses(&client()?, fmt, out),
        Command::Run {
            analysis,
            params,
            input,
            kpi,
            out: path,
        } => commands::run_offline(analysis, params, input, kpi, path, fmt, out),
        Command::Experiment { config, out: dir } => {
            commands::experiment(config.as_deref(), dir, fmt, out)
        }
    }
}
