use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use guesswork_core::attack::GuessStrategy;
use guesswork_core::experiments::{Engine, Mode};

use crate::assertion::Assertion;

/// Guesswork of biased keyed hash functions used for password storage.
///
/// Every run prints its resolved configuration and a replay command; the
/// replay reproduces the output byte for byte.
#[derive(Debug, Parser)]
#[command(name = "guesswork-lab", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form guesswork rates (bits per output bit) for one scenario.
    Rates(RatesArgs),
    /// Monte Carlo mean guesswork for one scenario.
    Simulate(SimulateArgs),
    /// Fits the growth rate of log2(mean guesswork) over several widths m.
    Sweep(SweepArgs),
    /// Empirical P(G <= 2^{m l}) against the concentration bound.
    Concentration(ConcentrationArgs),
    /// Bias p0 and key sizes matching a uniform key alpha times larger.
    Keysize(KeysizeArgs),
    /// Recomputes the reference table of most-likely rates and offline bounds.
    Table1(Table1Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Tolerance check on a reported quantity, e.g. "rate≈1±0.15",
    /// "slope~1.55+-0.1" or "failures<=0". Exit code 3 when one fails.
    #[arg(long = "assert", value_name = "EXPR", value_parser = parse_assertion)]
    pub asserts: Vec<Assertion>,
}

/// A seed given as decimal, 0x-hex or `random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Random,
}

impl SeedArg {
    pub fn resolve(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Random => rand::random(),
        }
    }
}

fn parse_seed(s: &str) -> Result<SeedArg, String> {
    if s == "random" {
        return Ok(SeedArg::Random);
    }
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16),
        None => s.replace('_', "").parse(),
    };
    parsed
        .map(SeedArg::Fixed)
        .map_err(|_| format!("expected a 64-bit integer, 0x-hex or `random`, got `{s}`"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: guesswork_core::Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: guesswork_core::Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<GuessStrategy, String> {
    s.parse().map_err(|e: guesswork_core::Error| e.to_string())
}

fn parse_assertion(s: &str) -> Result<Assertion, String> {
    s.parse()
}

pub const DEFAULT_SEED_STR: &str = "0x6755657373776f72";

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Key bias: each key bit is one with probability p, 0 < p <= 1/2.
    #[arg(long, value_name = "REAL")]
    pub p: f64,
    /// User fraction: floor(2^{H(s) m - 1}) users, 1/2 <= s <= 1.
    #[arg(long, value_name = "REAL", default_value_t = 0.9)]
    pub s: f64,
    /// Password bias for the biased-password mode, 0 < theta < 1.
    #[arg(long, value_name = "REAL")]
    pub theta: Option<f64>,
    /// Password width in bits; defaults to ceil((1 + eps) m (log2(1/p) + H(s))).
    #[arg(long, value_name = "BITS")]
    pub n: Option<u32>,
    /// Slack eps in the default password width.
    #[arg(long, value_name = "REAL", default_value_t = 0.25)]
    pub n_epsilon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Trials per width.
    #[arg(long, value_name = "COUNT", default_value_t = 10_000)]
    pub trials: u64,
    /// Base seed: decimal, 0x-hex, or `random` to draw one.
    #[arg(long, value_name = "SEED", default_value = DEFAULT_SEED_STR, value_parser = parse_seed)]
    pub seed: SeedArg,
    /// auto, exhaustive (evaluate every guess), sampled (exact key-averaged
    /// sampling) or exact (broken-hash summation).
    #[arg(long, value_name = "ENGINE", default_value = "auto", value_parser = parse_engine)]
    pub engine: Engine,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "COUNT", env = "GUESSWORK_LAB_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModeArgs {
    /// allocated-online, allocated-offline, unallocated-online,
    /// unallocated-offline, broken-hash, biased-password or no-allocation-keyed.
    #[arg(long, value_name = "MODE", value_parser = parse_mode)]
    pub mode: Mode,
    /// Guess order: ascending, permutation:SEED or descending:THETA.
    #[arg(long, value_name = "STRATEGY", default_value = "ascending", value_parser = parse_strategy)]
    pub strategy: GuessStrategy,
    /// Moment order rho for the broken-hash mode.
    #[arg(long, value_name = "REAL", default_value_t = 1.0)]
    pub rho: f64,
    /// Maximum guesses per trial (default 2^n).
    #[arg(long, value_name = "COUNT")]
    pub budget: Option<u64>,
    /// User count, overriding the one implied by s.
    #[arg(long, value_name = "COUNT")]
    pub users: Option<u64>,
    /// Condition on every user landing in the most likely shell
    /// (unallocated modes; floor(2^{H(1-s) m}) users).
    #[arg(long)]
    pub most_likely: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RatesArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output width in bits; enables the biased-password analysis with --theta.
    #[arg(long, value_name = "BITS")]
    pub m: Option<u32>,
    /// Moment order rho for the broken-hash rate.
    #[arg(long, value_name = "REAL", default_value_t = 1.0)]
    pub rho: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output width in bits.
    #[arg(long, value_name = "BITS")]
    pub m: u32,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Also write the per-trial CSV log here.
    #[arg(long, value_name = "PATH")]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output widths, strictly increasing, at least three.
    #[arg(long, value_name = "BITS,...", value_delimiter = ',', required = true)]
    pub m: Vec<u32>,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output width in bits.
    #[arg(long, value_name = "BITS")]
    pub m: u32,
    /// Type (fraction of ones) of the attacked bin; q m must be an integer.
    #[arg(long, value_name = "REAL", default_value_t = 1.0)]
    pub q: f64,
    /// Thresholds l (guesses 2^{m l}); defaults to a grid around the mean
    /// exponent.
    #[arg(long, value_name = "REAL,...", value_delimiter = ',')]
    pub l: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct KeysizeArgs {
    /// Key-size ratios alpha >= 1.
    #[arg(long, value_name = "REAL,...", value_delimiter = ',', default_value = "1,1.25,1.5,2,3")]
    pub alpha: Vec<f64>,
    /// Output width in bits used for the symbolic sizes.
    #[arg(long, value_name = "BITS", default_value_t = 10)]
    pub m: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    #[command(flatten)]
    pub output: OutputArgs,
}
