//! Command line flags and the matching config file.
//!
//! Every flag of a subcommand has a key of the same name in that subcommand's
//! table of the config file. Flags win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Invalid flags or config file contents.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "alphawealth", version, about = "Alpha-wealth procedures, simulations and database manager")]
pub struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the repeated-stream experiment for one allocation scheme.
    SimulateTables(TablesArgs),
    /// Run the database cost experiment.
    SimulateQpd(QpdArgs),
    /// Emit the reward/level trade-off curve as CSV.
    Tradeoff(TradeoffArgs),
    /// Quote the cost of a request against a saved instance.
    Quote(QuoteArgs),
    /// Run the database manager service.
    Serve(ServeArgs),
}

impl Command {
    pub fn is_serve(&self) -> bool {
        matches!(self, Command::Serve(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Constant,
    Relative,
    RelativeFixedM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Z,
    T,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TablesArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Probability that a hypothesis is a false null.
    #[arg(long)]
    pub p_false_null: Option<f64>,
    /// Mean of the false-null statistics.
    #[arg(long)]
    pub effect: Option<f64>,
    /// Fraction of wealth (or initial wealth) budgeted per test.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Number of tests for the relative-fixed-m scheme.
    #[arg(long)]
    pub fixed_m: Option<u64>,
    /// Comma-separated procedure labels to keep, e.g. "Alpha Investing,ERO".
    #[arg(long, value_delimiter = ',')]
    pub procedures: Option<Vec<String>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write the paired comparisons as CSV here.
    #[arg(long)]
    pub comparisons: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QpdArgs {
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Requests per realization.
    #[arg(long)]
    pub tests: Option<usize>,
    #[arg(long)]
    pub p_false_null: Option<f64>,
    /// Comma-separated variants: as, asr, asr_opt. Cost ratios are relative to the first.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Also write the per-variant summary as CSV here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TradeoffArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Degrees of freedom of the t statistic.
    #[arg(long)]
    pub df: Option<u64>,
    /// Sample count of the z statistic.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Simple alternative (standardized effect for t).
    #[arg(long)]
    pub alt: Option<f64>,
    #[arg(long)]
    pub null: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub cost: Option<f64>,
    #[arg(long)]
    pub grid_min: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuoteArgs {
    /// Service journal of the instance.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Saved instance state as JSON (a state response from the service works too).
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub effect: Option<f64>,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_cost: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulate_tables: Option<TablesArgs>,
    #[serde(default)]
    pub simulate_qpd: Option<QpdArgs>,
    #[serde(default)]
    pub tradeoff: Option<TradeoffArgs>,
    #[serde(default)]
    pub quote: Option<QuoteArgs>,
    #[serde(default)]
    pub serve: Option<ServeArgs>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))
    }
}

/// Overlays the flags that were given on top of the file's values.
pub fn merge<T: Serialize + DeserializeOwned + Default>(file: Option<T>, flags: T) -> Result<T, UsageError> {
    let to_value = |v: &T| serde_json::to_value(v).map_err(|e| UsageError(e.to_string()));
    let mut base = to_value(&file.unwrap_or_default())?;
    if let (Some(base), serde_json::Value::Object(over)) = (base.as_object_mut(), to_value(&flags)?) {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| UsageError(e.to_string()))
}
