//! Shared fixtures for the benchmarks.

use std::f64::consts::FRAC_PI_4;

use bellfrac_core::bell::default_bundled_set;
use bellfrac_core::expdata::synthetic_dataset;
use bellfrac_core::qstate::werner_like;
use bellfrac_core::{CCDataset, DensityMatrix, InequalitySet};

/// Werner-like GHZ state at angle 45° and the given visibility.
pub fn werner(n_qubits: usize, v: f64) -> DensityMatrix {
    werner_like(FRAC_PI_4, v, n_qubits).expect("valid parameters")
}

/// Bundled default orbit for `n` parties.
pub fn default_set(n_parties: usize) -> InequalitySet {
    default_bundled_set(n_parties).expect("bundled set")
}

/// Noiseless three-qubit dataset with `blocks` setting blocks.
pub fn dataset(blocks: u64) -> CCDataset {
    synthetic_dataset(&werner(3, 0.986), blocks, 1, 4000.0, "bench").expect("valid dataset")
}
