//! Monte Carlo orchestration: configuration, the two trial engines, rate
//! regression over `m`, and the comparison panels.
//!
//! Every trial `t` draws all of its randomness (key, passwords, user choice)
//! from `derive_seed(seed, t)`, so a trial can be replayed on its own and the
//! result does not depend on how trials are spread over workers.

mod engine;
mod panels;
mod sweep;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{GuessStrategy, RaceArm};
use crate::error::{Error, Result};
use crate::hashmodel::BinLabel;
use crate::rates::ScenarioParams;
use crate::stats::EstimateWithCI;

pub use engine::{EXHAUSTIVE_WORK_LIMIT, MIN_SAMPLED_PROBABILITY};
pub use panels::{
    backdoor_preservation, concentration_report, keysize_panel, most_likely_panel,
    most_likely_sweep, BackdoorPreservation, ConcentrationReport, ConcentrationRow, KeySizeRow,
    MostLikelyPanel,
};
pub use sweep::{sweep_rate, SweepPoint, SweepResult, TheoryKind, TheoryTarget};

/// Which quantity a run estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Online guesswork of a uniformly chosen allocated user.
    AllocatedOnline,
    /// Guesses until any allocated user's bin is hit.
    AllocatedOffline,
    /// Online guesswork when users pick their own passwords (distinct bins).
    UnallocatedOnline,
    /// Offline guesswork when users pick their own passwords.
    UnallocatedOffline,
    /// `rho`-th moment when every bin's preimage is known.
    BrokenHash,
    /// Allocated users with Bernoulli(`theta`) passwords, raced against the
    /// hash.
    BiasedPassword,
    /// One user, uniform password, no allocation.
    NoAllocationKeyed,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::AllocatedOnline,
        Mode::AllocatedOffline,
        Mode::UnallocatedOnline,
        Mode::UnallocatedOffline,
        Mode::BrokenHash,
        Mode::BiasedPassword,
        Mode::NoAllocationKeyed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::AllocatedOnline => "allocated-online",
            Mode::AllocatedOffline => "allocated-offline",
            Mode::UnallocatedOnline => "unallocated-online",
            Mode::UnallocatedOffline => "unallocated-offline",
            Mode::BrokenHash => "broken-hash",
            Mode::BiasedPassword => "biased-password",
            Mode::NoAllocationKeyed => "no-allocation-keyed",
        }
    }

    pub fn is_offline(&self) -> bool {
        matches!(self, Mode::AllocatedOffline | Mode::UnallocatedOffline)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

/// How trials are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Exhaustive when the expected work is small, sampled otherwise; exact
    /// summation for the broken-hash mode.
    Auto,
    /// Builds the keyed model and evaluates every guess.
    Exhaustive,
    /// Draws first-hit positions from their exact distribution under key
    /// averaging instead of evaluating guesses one by one.
    Sampled,
    /// Closed-form summation (broken-hash mode only).
    Exact,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Auto => "auto",
            Engine::Exhaustive => "exhaustive",
            Engine::Sampled => "sampled",
            Engine::Exact => "exact",
        }
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Engine::Auto, Engine::Exhaustive, Engine::Sampled, Engine::Exact]
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::config("engine", format!("unknown engine `{s}`")))
    }
}

/// Smallest trial count accepted for Monte Carlo runs.
pub const MIN_TRIALS: u64 = 100;

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioParams,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_sweep: Option<Vec<u32>>,
    pub engine: Engine,
    /// Moment order for the broken-hash mode.
    pub rho: f64,
    /// Guess order for online modes. The biased-password mode always
    /// guesses in descending probability.
    pub strategy: GuessStrategy,
    /// Maximum guesses per trial; `None` means all `2^n` passwords.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Overrides the user count implied by `s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub users: Option<u64>,
    /// Sweeps pick `n = ceil((1 + eps) m (log2(1/p) + H(s)))`.
    pub n_epsilon: f64,
    /// Worker threads; `None` lets the pool decide.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, scenario: ScenarioParams) -> Self {
        ExperimentConfig {
            scenario,
            mode,
            trials: 10_000,
            seed: DEFAULT_SEED,
            m_sweep: None,
            engine: Engine::Auto,
            rho: 1.0,
            strategy: GuessStrategy::Ascending,
            budget: None,
            users: None,
            n_epsilon: 0.25,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.engine != Engine::Exact && self.trials < MIN_TRIALS {
            return Err(Error::config(
                "trials",
                format!("need at least {MIN_TRIALS} trials, got {}", self.trials),
            ));
        }
        if let Some(sweep) = &self.m_sweep {
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("m_sweep", "widths must be strictly increasing"));
            }
            if sweep.first() == Some(&0) {
                return Err(Error::config("m_sweep", "widths must be positive"));
            }
        }
        if self.mode == Mode::BiasedPassword && self.scenario.theta.is_none() {
            return Err(Error::config("theta", "the biased-password mode needs theta"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho", format!("must be a finite value >= 0, got {}", self.rho)));
        }
        if self.engine == Engine::Exact && self.mode != Mode::BrokenHash {
            return Err(Error::config("engine", "exact summation exists only for broken-hash"));
        }
        if let Some(b) = self.budget {
            if b == 0 || b > 1u64 << self.scenario.n {
                return Err(Error::config("budget", format!("need 1 <= budget <= 2^n, got {b}")));
            }
        }
        if let Some(u) = self.users {
            if u == 0 || u > 1u64 << self.scenario.m {
                return Err(Error::config("users", format!("need 1 <= users <= 2^m, got {u}")));
            }
        }
        if !(self.n_epsilon >= 0.0 && self.n_epsilon.is_finite()) {
            return Err(Error::config("n_epsilon", "must be a finite value >= 0"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Copy with the width changed to `m`, the password width recomputed
    /// from `n_epsilon` and the trial seed namespaced by `m`.
    pub fn at_width(&self, m: u32) -> Result<ExperimentConfig> {
        let sc = &self.scenario;
        let n = crate::rates::password_bits_for(m, sc.s, sc.p, self.n_epsilon)?;
        let mut c = self.clone();
        c.scenario.m = m;
        c.scenario.n = n;
        c.m_sweep = None;
        c.budget = None;
        c.seed = crate::seed::derive_seed(self.seed, 0x5EE9_0000 + m as u64);
        Ok(c)
    }
}

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x6755_6573_7377_6F72;

/// One trial, as streamed to CSV logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user: Option<u32>,
    /// Target bin; `None` for offline (set) targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin: Option<BinLabel>,
    pub guesses: u64,
    /// The trial's contribution to the mean (the guess count, or the moment
    /// for the broken-hash mode).
    pub value: f64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<RaceArm>,
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub mode: Mode,
    /// The engine actually used (never `Auto`).
    pub engine: Engine,
    pub m: u32,
    pub n: u32,
    pub users: u64,
    pub strategy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_min_type: Option<f64>,
    pub estimate: EstimateWithCI,
    pub log2_mean: f64,
    /// `log2(mean) / m`.
    pub rate: f64,
    /// Fraction of trials won by the password arm (biased-password mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub password_arm_fraction: Option<f64>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// Runs `cfg.trials` independent trials and averages them, failures
/// counting zero.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let setup = engine::Setup::new(cfg)?;
    run_with_setup(cfg, &setup)
}

pub(crate) fn run_with_setup(cfg: &ExperimentConfig, setup: &engine::Setup) -> Result<ExperimentOutcome> {
    let engine = setup.resolve_engine(cfg)?;
    let records: Vec<TrialRecord> = if engine == Engine::Exact {
        vec![setup.exact_record()?]
    } else {
        run_parallel(cfg.workers, cfg.trials, |t| {
            let trial_seed = crate::seed::derive_seed(cfg.seed, t);
            setup.trial(engine, trial_seed)
        })?
    };
    let values: Vec<f64> = records.iter().map(|r| r.value).collect();
    let failures = records.iter().filter(|r| !r.success).count() as u64;
    let estimate = EstimateWithCI::from_samples(&values, failures)?;
    let log2_mean = estimate.mean.log2();
    let password_arm_fraction = (cfg.mode == Mode::BiasedPassword).then(|| {
        records.iter().filter(|r| r.arm == Some(RaceArm::Password)).count() as f64
            / records.len() as f64
    });
    Ok(ExperimentOutcome {
        mode: cfg.mode,
        engine,
        m: cfg.scenario.m,
        n: cfg.scenario.n,
        users: setup.users(),
        strategy: setup.strategy_label(cfg),
        realized_min_type: setup.realized_min_type(),
        estimate,
        log2_mean,
        rate: log2_mean / cfg.scenario.m as f64,
        password_arm_fraction,
        records,
    })
}

/// Maps `f` over `0..count` on a pool of `workers` threads, keeping the
/// input order.
pub(crate) fn run_parallel<T, F>(workers: Option<usize>, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(m: u32, n: u32, p: f64) -> ScenarioParams {
        ScenarioParams {
            s: 0.9,
            p,
            m,
            n,
            theta: None,
        }
    }

    #[test]
    fn modes_round_trip_through_strings() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("nope".parse::<Mode>().is_err());
        assert_eq!("sampled".parse::<Engine>().unwrap(), Engine::Sampled);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::new(Mode::AllocatedOnline, scenario(8, 24, 0.3));
        cfg.trials = 10;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "trials", .. })));
        cfg.trials = 100;
        cfg.m_sweep = Some(vec![8, 8, 10]);
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "m_sweep", .. })));
        cfg.m_sweep = None;
        cfg.mode = Mode::BiasedPassword;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "theta", .. })));
        cfg.mode = Mode::AllocatedOnline;
        cfg.engine = Engine::Exact;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "engine", .. })));
    }

    #[test]
    fn constant_outcome_has_zero_width() {
        // Two users at m = 1 hold both bins, so the offline attack succeeds
        // on the first guess unless their passwords collide (2^-60 here).
        let mut cfg = ExperimentConfig::new(Mode::AllocatedOffline, scenario(1, 60, 0.5));
        cfg.users = Some(2);
        cfg.trials = 100;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.estimate.mean, 1.0);
        assert_eq!(out.estimate.half_width_95, 0.0);
        assert_eq!(out.estimate.failures, 0);
    }

    #[test]
    fn result_does_not_depend_on_worker_count() {
        for mode in [Mode::AllocatedOnline, Mode::UnallocatedOffline] {
            let mut cfg = ExperimentConfig::new(mode, scenario(6, 16, 0.3));
            cfg.trials = 300;
            cfg.workers = Some(1);
            let a = run_experiment(&cfg).unwrap();
            cfg.workers = Some(3);
            let b = run_experiment(&cfg).unwrap();
            assert_eq!(a.estimate, b.estimate);
            assert_eq!(a.records, b.records);
        }
    }
}
