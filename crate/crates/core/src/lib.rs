//! Exact simulation of spin-squeezed Ramsey interferometry with a miscalibrated
//! state-preparation step.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod fisher;
pub mod largescale;
pub mod metrics;
pub mod mixedstate;
pub mod model;
pub mod optimize;
pub mod schemes;
pub mod selftest;
pub mod spin_core;

/// Crate version reported by the CLI and embedded in every result envelope.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use model::{JointModel, PhaseFamily, PhaseModel, SchemeModel};
pub use schemes::{PrepConfig, Preparer, RotationPolicy, SchemeKind};
pub use spin_core::{Axis, Basis, CollectiveOps, ProbDist, Propagator, SpinState};
