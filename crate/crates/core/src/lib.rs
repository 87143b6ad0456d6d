//! Pacing dynamics for online fair division: simulation, hindsight
//! equilibria, fairness metrics and input generators.

pub mod dynamics;
pub mod eg;
pub mod error;
pub mod harness;
pub mod inputs;
pub mod metrics;
pub mod model;

pub use dynamics::{run, run_with, FirstRound, Multiplier, PaceState, RunOptions, RunTrace, StepOutcome, Variant};
pub use error::{Error, Result};
pub use model::{AgentWeights, Allocation, ExtReal, ValueSequence};
