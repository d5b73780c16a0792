//! Seeded simulation campaigns: many simulated participants, each playing a
//! full sequence of blocks, plus summary statistics over their records.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{run_block, AgentSpec};
use crate::error::Result;
use crate::records::{ChoiceRecord, RecordKind};
use crate::seed::{self, stream};
use crate::task::{BlockStatus, TaskEnv};

/// Seed of one participant (or session) within a campaign.
pub fn subject_seed(campaign_seed: u64, subject: usize) -> u64 {
    seed::derive(campaign_seed, &[stream::SUBJECT, subject as u64])
}

/// Seed of one block within a participant's session.
pub fn block_seed(session_seed: u64, block_index: usize) -> u64 {
    seed::derive(session_seed, &[stream::BLOCK, block_index as u64])
}

/// The participant's environment: block order permuted by the session seed.
pub fn session_env(env: &TaskEnv, session_seed: u64) -> Result<TaskEnv> {
    env.with_config(env.config().with_permuted_blocks(session_seed))
}

/// Every block of one session, played by `agent`.
pub fn run_session(env: &TaskEnv, agent: &AgentSpec, subject: &str, session_seed: u64) -> Result<Vec<ChoiceRecord>> {
    let env = session_env(env, session_seed)?;
    let mut out = Vec::new();
    for b in 0..env.config().blocks {
        let block = env.make_block(b, block_seed(session_seed, b))?;
        out.extend(run_block(agent, &env, block, subject)?);
    }
    Ok(out)
}

pub fn subject_name(k: usize) -> String {
    format!("sim{k:04}")
}

/// `runs` simulated participants; records come back in subject order.
pub fn simulate(env: &TaskEnv, agent: &AgentSpec, runs: usize, campaign_seed: u64) -> Result<Vec<ChoiceRecord>> {
    let per_subject: Vec<Vec<ChoiceRecord>> = (0..runs)
        .into_par_iter()
        .map(|k| run_session(env, agent, &subject_name(k), subject_seed(campaign_seed, k)))
        .collect::<Result<_>>()?;
    Ok(per_subject.into_iter().flatten().collect())
}

/// Per-block outcome extracted from a record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub agent: String,
    pub subject: String,
    pub block: usize,
    pub condition: crate::records::Condition,
    pub choices: usize,
    /// Sum of outputs from choices (the start observation is excluded).
    pub choice_score: f64,
    pub terminated: bool,
}

impl BlockOutcome {
    pub fn score_per_trial(&self) -> f64 {
        if self.choices == 0 {
            0.0
        } else {
            self.choice_score / self.choices as f64
        }
    }
}

pub fn block_outcomes(records: &[ChoiceRecord]) -> Vec<BlockOutcome> {
    let mut map: BTreeMap<(String, String, usize), BlockOutcome> = BTreeMap::new();
    for r in records {
        let agent = r.agent.clone().unwrap_or_else(|| "human".to_string());
        let entry = map
            .entry((agent.clone(), r.subject.clone(), r.block))
            .or_insert_with(|| BlockOutcome {
                agent,
                subject: r.subject.clone(),
                block: r.block,
                condition: r.condition,
                choices: 0,
                choice_score: 0.0,
                terminated: false,
            });
        if r.kind == RecordKind::Choice {
            entry.choices += 1;
            entry.choice_score += r.y;
            entry.terminated |= r.status == BlockStatus::Terminated;
        }
    }
    map.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: String,
    pub blocks: usize,
    pub choices: usize,
    pub score_per_trial: f64,
    pub mean_block_length: f64,
    /// Fraction of blocks ended by a sub-threshold output.
    pub violation_rate: f64,
}

pub fn summarize(records: &[ChoiceRecord]) -> Vec<Summary> {
    let mut by_agent: BTreeMap<String, Vec<BlockOutcome>> = BTreeMap::new();
    for o in block_outcomes(records) {
        by_agent.entry(o.agent.clone()).or_default().push(o);
    }
    by_agent
        .into_iter()
        .map(|(agent, blocks)| {
            let choices: usize = blocks.iter().map(|b| b.choices).sum();
            let score: f64 = blocks.iter().map(|b| b.choice_score).sum();
            let terminated = blocks.iter().filter(|b| b.terminated).count();
            Summary {
                agent,
                blocks: blocks.len(),
                choices,
                score_per_trial: if choices > 0 { score / choices as f64 } else { 0.0 },
                mean_block_length: choices as f64 / blocks.len() as f64,
                violation_rate: terminated as f64 / blocks.len() as f64,
            }
        })
        .collect()
}
