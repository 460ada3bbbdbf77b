//! Run settings shared by every subcommand, and the config files that can
//! supply them.
//!
//! A config file is either JSON (`{"command": ..., "settings": {...}}`, the
//! layout written by `--echo-config`) or `key = value` lines using the flag
//! names. Flags given on the command line override the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Eval,
    BoundsScan,
    SolveDirect,
    SolveInverse,
    Verify,
    Selftest,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Eval => "eval",
            CommandName::BoundsScan => "bounds-scan",
            CommandName::SolveDirect => "solve-direct",
            CommandName::SolveInverse => "solve-inverse",
            CommandName::Verify => "verify",
            CommandName::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn is_on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Function {
    Qnumber,
    Qpochhammer,
    QpochhammerInf,
    QpochhammerReal,
    Qgamma,
    Qfactorial,
    Qexp,
    Ml,
    TranslatedMl,
}

impl Function {
    pub fn as_str(self) -> &'static str {
        match self {
            Function::Qnumber => "qnumber",
            Function::Qpochhammer => "qpochhammer",
            Function::QpochhammerInf => "qpochhammer-inf",
            Function::QpochhammerReal => "qpochhammer-real",
            Function::Qgamma => "qgamma",
            Function::Qfactorial => "qfactorial",
            Function::Qexp => "qexp",
            Function::Ml => "ml",
            Function::TranslatedMl => "translated-ml",
        }
    }
}

/// Every setting is optional here; each command checks what it needs
/// before computing anything.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Base q in (0, 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,

    /// Fractional order
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,

    /// Second Mittag-Leffler parameter (default 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    /// Time horizon
    #[arg(long = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,

    /// Number of modes of the built-in model
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,

    /// builtin:dirichlet-sine or file:PATH (CSV `k,lambda`)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,

    /// Initial value coefficients (CSV `k,value`)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<PathBuf>,

    /// Initial velocity (superorder) or final value (inverse) coefficients
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<PathBuf>,

    /// Time-independent source coefficients for solve-direct
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,

    /// Mass shift m added to every eigenvalue (default 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,

    /// Output file; stdout when absent where that makes sense
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// Wynn acceleration beyond the series radius (default on)
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accelerate: Option<Toggle>,

    /// Partial-fraction fallback when acceleration stalls (default on)
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<Toggle>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_series: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_product: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_terms: Option<usize>,

    /// Function to evaluate
    #[arg(long = "fn", value_enum)]
    #[serde(rename = "fn", skip_serializing_if = "Option::is_none")]
    pub function: Option<Function>,

    /// Argument of the evaluated function (`c` for translated-ml)
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,

    /// Integer index (qpochhammer, qfactorial)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Real index (qpochhammer-real)
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,

    /// Time (translated-ml)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,

    /// Translation point (translated-ml)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,

    /// Comma-separated Mittag-Leffler arguments
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,

    /// Sobolev order of the energy estimate (default 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

/// A complete, replayable run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    #[serde(default)]
    pub settings: Settings,
}

/// Parser used for `key = value` files, so keys are checked exactly like
/// flags.
#[derive(Parser)]
#[command(name = "config", no_binary_name = true, disable_help_flag = true)]
struct KeyValueSettings {
    #[command(flatten)]
    settings: Settings,
}

/// Contents of a config file: an optional command and its settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FileConfig {
    pub command: Option<CommandName>,
    pub settings: Settings,
}

pub fn read_config_file(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        module: "cli",
        operation: "read_config",
        source: qfrac::Error::Io(format!("{}: {e}", path.display())),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> CliResult<FileConfig> {
    if text.trim_start().starts_with('{') {
        parse_json_config(text)
    } else {
        parse_key_value_config(text)
    }
}

fn parse_json_config(text: &str) -> CliResult<FileConfig> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Partial {
        command: Option<CommandName>,
        #[serde(default)]
        settings: Settings,
    }
    let p: Partial =
        serde_json::from_str(text).map_err(|e| CliError::config("read_config", format!("config file: {e}")))?;
    Ok(FileConfig { command: p.command, settings: p.settings })
}

fn parse_key_value_config(text: &str) -> CliResult<FileConfig> {
    let mut command = None;
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(
                "read_config",
                format!("config line {}: expected `key = value`, got `{line}`", lineno + 1),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "command" {
            let c = CommandName::from_str(value, false).map_err(|_| {
                CliError::config("read_config", format!("config line {}: unknown command `{value}`", lineno + 1))
            })?;
            command = Some(c);
            continue;
        }
        args.push(format!("--{key}"));
        args.push(value.to_string());
    }
    let parsed = KeyValueSettings::try_parse_from(&args).map_err(|e| {
        CliError::config("read_config", format!("config file: {}", e.render().to_string().trim()))
    })?;
    Ok(FileConfig { command, settings: parsed.settings })
}

/// `flags` on top of `base`: every setting given in `flags` replaces the
/// one from `base`.
pub fn overlay(base: &Settings, flags: &Settings) -> CliResult<Settings> {
    let mut merged = as_map(base)?;
    merged.extend(as_map(flags)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::config("merge_config", e.to_string()))
}

fn as_map(s: &Settings) -> CliResult<Map<String, Value>> {
    match serde_json::to_value(s) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => unreachable!("settings serialize to an object"),
        Err(e) => Err(CliError::config("merge_config", e.to_string())),
    }
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
