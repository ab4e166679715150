//! Recurrence and shrinking-target statistics for measure-preserving maps:
//! orbit hit counts, their limit laws, variance diagnostics, Ulam transfer
//! operators and a deterministic experiment harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod hitstats;
pub mod limits;
pub mod measures;
pub mod numeric;
pub mod radii;
pub mod rng;
pub mod symbolic;
pub mod systems;
pub mod transfer;
pub mod variance;

pub use error::{Error, FieldError, Result};
pub use harness::{
    run_experiment, run_with_jobs, ExperimentConfig, ExperimentKind, MetricResult, RunReport, Tolerance,
};
pub use limits::{LawSpec, LimitLaw};
pub use measures::{DensityMeasure, Piece};
pub use radii::{Mode, RadiusSchedule, Sequence};
pub use rng::{derive_substream, role_seed};
pub use symbolic::{CylinderFunction, MarkovMeasure, SftSystem, SymbolSeq};
pub use systems::{Branch, MapSystem, Metric, Point};
pub use transfer::{build_ulam, Bins, UlamOperator};
