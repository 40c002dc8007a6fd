//! Shared fixtures for the criterion benches.

use guesswork_core::KeyedHashModel;

/// The keyed model used across benches: `m = 10`, `n = 32`, `p = 0.3`.
pub fn bench_model() -> KeyedHashModel {
    KeyedHashModel::new(10, 32, 0.3, 0x5EED).expect("valid fixture")
}
