//! Desk-scale laboratory for the configuration, dynamics and error view of
//! dataset distillation.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: vectors, seeded splittable RNG streams, OLS, finite differences.
//! * [`measures`]: datasets as weighted empirical measures, IDX ingestion.
//! * [`models`]: softmax-linear and one-hidden-layer tanh models with exact gradients.
//! * [`configspace`]: training configurations, the update operator, trajectories,
//!   configuration distance and greedy covers.
//! * [`discrepancy`]: matching discrepancy and the surrogate bridge bounds.
//! * [`surrogates`]: DM (MMD / sliced W1), GM and TM objectives and outer steps.
//! * [`distill`]: the bi-level distillation engine.
//! * [`lawlab`]: scaling-law and coverage-law harnesses, `K_min`.

pub mod configspace;
pub mod discrepancy;
pub mod distill;
mod error;
pub mod lawlab;
pub mod measures;
pub mod models;
pub mod numkit;
pub mod surrogates;

pub use configspace::{
    Augmentation, Configuration, CoverReport, DynamicsDiagnostics, OptimizerState,
    Preconditioner, Trajectory,
};
pub use discrepancy::{BridgeReport, ExchangeabilityReport};
pub use distill::{DistillRun, InitMode, Method};
pub use error::{Error, Result};
pub use lawlab::{CoveragePoint, DeltaMode, GapRecord, SubsetMode};
pub use measures::{LabeledPoint, WeightedDataset};
pub use models::{LipschitzEstimates, ModelKind, ModelSpec};
pub use numkit::{LawFit, RealVec, RngStream};
pub use surrogates::{SurrogateTrace, SyntheticSet};
