//! Safe Bayesian optimization laboratory.
//!
//! Gaussian-process regression over finite grids, the safe / maximizer /
//! expander set machinery built on its confidence bounds, a threshold-bandit
//! task environment, algorithmic agents that play it, and the behavioral
//! analyses that are run on the resulting choice records.

pub mod acquisition;
pub mod agents;
pub mod analysis;
pub mod campaign;
pub mod config;
pub mod error;
pub mod gp;
pub mod grid;
pub mod records;
pub mod seed;
pub mod stats;
pub mod task;

pub use acquisition::{Assessment, ConfidenceBounds, SetFeatures};
pub use agents::{AgentKind, AgentSpec, TreeParams};
pub use error::{Error, Result};
pub use gp::{GpModel, GpPosterior, KernelParams, ObservationSet};
pub use grid::GridDomain;
pub use records::{ChoiceRecord, Condition, RecordKind};
pub use task::{BlockState, BlockStatus, OutputScaling, TaskConfig, TaskEnv, ThresholdRule};
