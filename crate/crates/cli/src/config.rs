//! Command-line and config-file parameters.
//!
//! A config file is a flat JSON object holding any of the global keys (`output`,
//! `format`, `threads`) plus the keys of the chosen subcommand. Flags given on the
//! command line override the file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "gauss-nisim",
    version,
    about = "Non-interactive simulation toolkit over correlated Gaussian sources"
)]
pub struct Cli {
    /// Worker threads (falls back to GAUSS_NISIM_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Hermite expansion of a function up to a degree.
    Expand(ExpandArgs),
    /// Spectrum-matching projected polynomial and its potential trace.
    Boost(BoostArgs),
    /// Smoothed mixtures of two functions with the full report.
    Smooth(SmoothArgs),
    /// Decide a two-outcome target and build a strategy.
    #[command(name = "decide-k2")]
    DecideK2(DecideArgs),
    /// Maximal correlation of a finite joint distribution.
    Maxcorr(MaxcorrArgs),
    /// Monte-Carlo joint table of two functions.
    Table(TableArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Expand(_) => "expand",
            Command::Boost(_) => "boost",
            Command::Smooth(_) => "smooth",
            Command::DecideK2(_) => "decide-k2",
            Command::Maxcorr(_) => "maxcorr",
            Command::Table(_) => "table",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Quadrature,
    Mc,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandArgs {
    /// Function spec file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodArg>,
    /// Sample count for Monte-Carlo estimation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub function: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Where to write the `t,rho_sq,psi` trace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Correlated pairs used for the report.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Constant in the drift bounds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    /// Cap on the composed polynomial degree.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree_cap: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecideArgs {
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Marginal means `E U, E V`.
    #[arg(long, num_args = 1..=2, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Agreement probability `Pr[U = V]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Slack at the decision boundary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxcorrArgs {
    /// Joint distribution file `{"mass": [[…]]}`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Table file (`{"entries": …}` or a bare matrix) to measure TV distance against.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<PathBuf>,
    /// Also report TV distance to the product of the table's marginals.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub compare_product: bool,
}

/// Global settings after merging flags and config.
#[derive(Debug, Default)]
pub struct Globals {
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Reads the config file, if any, and splits it into global keys and the rest.
pub fn load_config(cli: &Cli) -> Result<(Globals, Map<String, Value>), CliError> {
    let mut globals = Globals {
        threads: cli.threads,
        output: cli.output.clone(),
        format: cli.format,
    };
    let Some(path) = &cli.config else {
        return Ok((globals, Map::new()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let Value::Object(mut map) = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {} is not valid JSON: {e}", path.display())))?
    else {
        return Err(CliError::usage("config must be a JSON object"));
    };
    if let Some(cmd) = map.remove("command") {
        if cmd.as_str() != Some(cli.command.name()) {
            return Err(CliError::usage(format!(
                "config is for command {cmd}, but {} was requested",
                cli.command.name()
            )));
        }
    }
    let take = |map: &mut Map<String, Value>, key: &str| map.remove(key);
    if globals.threads.is_none() {
        if let Some(v) = take(&mut map, "threads") {
            globals.threads = Some(from_value(v, "threads")?);
        }
    } else {
        map.remove("threads");
    }
    if globals.output.is_none() {
        if let Some(v) = take(&mut map, "output") {
            globals.output = Some(from_value(v, "output")?);
        }
    } else {
        map.remove("output");
    }
    if globals.format.is_none() {
        if let Some(v) = take(&mut map, "format") {
            globals.format = Some(from_value(v, "format")?);
        }
    } else {
        map.remove("format");
    }
    Ok((globals, map))
}

fn from_value<T: DeserializeOwned>(v: Value, key: &str) -> Result<T, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::usage(format!("config key {key}: {e}")))
}

/// Overlays the flags that were given onto the config values.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Map<String, Value>) -> Result<T, CliError> {
    let Value::Object(given) = serde_json::to_value(flags).expect("arguments serialise") else {
        unreachable!("argument structs serialise to objects");
    };
    let mut merged = config;
    merged.extend(given);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("invalid config: {e}")))
}
