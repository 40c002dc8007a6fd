//! Guesswork of biased keyed hash functions used for password storage.
//!
//! The crate has three layers:
//!
//! * closed forms: [`infotheory`] and [`rates`];
//! * models: [`hashmodel`], [`allocation`] and [`attack`];
//! * Monte Carlo orchestration: [`experiments`] and [`stats`].
//!
//! Rates are in bits per output bit (`(1/m) log2` of a guess count); guess
//! counts are plain numbers. Everything random is derived from explicit
//! 64-bit seeds, see [`seed`].

pub mod allocation;
pub mod attack;
pub mod error;
pub mod experiments;
pub mod hashmodel;
pub mod infotheory;
pub mod rates;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use hashmodel::{
    BinLabel, BinSet, EffectiveDistribution, HashFunction, KeyedHashModel, TableHash,
};
pub use infotheory::{BiasParam, Probability, RhoOrder};
pub use rates::{RateReport, Region, ScenarioParams};
pub use stats::EstimateWithCI;
