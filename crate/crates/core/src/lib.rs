//! Entanglement estimation from the nonlocal fraction: the probability that
//! randomly chosen local projective measurements on a two- or three-qubit
//! state produce a behavior violating some Bell inequality.

// `!(x > y)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod entanglement;
pub mod error;
pub mod expdata;
pub mod fits;
pub mod nlfrac;
pub mod qstate;
pub mod rng;
pub mod util;

pub use bell::{
    behavior_from_state, evaluate, expand_relabelings, max_violation, Behavior, BellInequality, InequalitySet,
    MeasurementSettings,
};
pub use error::{Error, Result};
pub use expdata::{CCDataset, CCRecord, PvCcEstimate};
pub use fits::{FitCurve, ThetaV0};
pub use nlfrac::{PvEstimate, ViolationSamples};
pub use qstate::{DensityMatrix, LocalUnitary, PureState};
