//! JSON request and response bodies.

use safelab_core::records::Condition;
use safelab_core::{BlockState, BlockStatus, GridDomain};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub experiment: u8,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitChoice {
    pub index: usize,
    /// The session's `next_seq` as last seen by the client.
    #[serde(default)]
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl From<&GridDomain> for GridView {
    fn from(d: &GridDomain) -> Self {
        Self { dim: d.dim(), points: d.points().to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub y: f64,
}

/// What a participant may see of a block. The latent function is never included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockView {
    pub index: usize,
    pub condition: Condition,
    /// Whether outputs below the threshold end the block.
    pub constrained: bool,
    pub threshold_visible: bool,
    pub threshold: Option<f64>,
    pub start: Observation,
    /// Start observation first, then every choice so far.
    pub observations: Vec<Observation>,
    pub status: BlockStatus,
    pub score: f64,
    pub trials_remaining: usize,
}

impl BlockView {
    pub fn of(block: &BlockState, trials_per_block: usize) -> Self {
        let observations: Vec<Observation> = block.history.iter().map(|&(index, y)| Observation { index, y }).collect();
        let trials_remaining = if block.status.is_active() {
            trials_per_block.saturating_sub(block.choices_made())
        } else {
            0
        };
        Self {
            index: block.index,
            condition: block.condition(),
            constrained: block.constrained,
            threshold_visible: block.constrained,
            threshold: if block.constrained { block.threshold } else { None },
            start: observations[0],
            observations,
            status: block.status,
            score: block.score,
            trials_remaining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub experiment: u8,
    pub seed: u64,
    pub grid: GridView,
    pub blocks_total: usize,
    pub blocks_done: usize,
    pub total_score: f64,
    pub next_seq: u64,
    pub finished: bool,
    /// The block being played, or the last one once the session is finished.
    pub block: BlockView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub seq: u64,
    pub index: usize,
    pub y: f64,
    pub status: BlockStatus,
    pub block_score: f64,
    pub total_score: f64,
    pub trials_remaining: usize,
    pub blocks_done: usize,
    pub finished: bool,
    pub next_seq: u64,
    /// Start information of the following block when this choice ended one.
    pub next_block: Option<BlockView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
