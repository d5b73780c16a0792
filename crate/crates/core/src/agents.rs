//! Choice policies that play the threshold bandit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ConfidenceBounds, SetFeatures, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::records::{ChoiceRecord, RecordKind};
use crate::seed::{self, stream};
use crate::task::{BlockState, TaskEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Widest confidence interval among expanding maximizers.
    SafeOpt,
    /// Safety gate, then probability-of-improvement gate.
    Tree1,
    /// Safety gate only.
    Tree2,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::SafeOpt, AgentKind::Tree1, AgentKind::Tree2, AgentKind::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::SafeOpt => "safeopt",
            AgentKind::Tree1 => "tree1",
            AgentKind::Tree2 => "tree2",
            AgentKind::Random => "random",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown agent '{s}' (safeopt, tree1, tree2, random)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub safe_cut: f64,
    pub improve_cut: f64,
}

impl TreeParams {
    pub const TREE1: TreeParams = TreeParams { safe_cut: 0.99, improve_cut: 0.05 };
    pub const TREE2: TreeParams = TreeParams { safe_cut: 0.8, improve_cut: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub beta: f64,
    pub tree: TreeParams,
    pub seed: u64,
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        let tree = match kind {
            AgentKind::Tree2 => TreeParams::TREE2,
            _ => TreeParams::TREE1,
        };
        Self { kind, beta: DEFAULT_BETA, tree, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }
}

/// Index of the largest score among `candidates`; the lowest index wins ties.
fn argmax(candidates: impl IntoIterator<Item = usize>, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let s = score(i);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

fn safest(features: &SetFeatures) -> usize {
    argmax(0..features.len(), |i| features.p_safe[i]).unwrap_or(0)
}

/// Pick the next grid index. `trial_seed` only matters for the random agent.
///
/// The tree agents' safety gate applies only in blocks where sub-threshold
/// outputs end the block; in unconstrained blocks they skip straight to the
/// within-leaf choice.
pub fn choose(
    agent: &AgentSpec,
    features: &SetFeatures,
    bounds: &ConfidenceBounds,
    block: &BlockState,
    trial_seed: u64,
) -> usize {
    let n = features.len();
    match agent.kind {
        AgentKind::SafeOpt => {
            let pick = |mask: &dyn Fn(usize) -> bool| argmax((0..n).filter(|&i| mask(i)), |i| bounds.width(i));
            pick(&|i| features.maximizer[i] && features.expander[i])
                .or_else(|| pick(&|i| features.maximizer[i]))
                .or_else(|| pick(&|i| features.safe[i]))
                .unwrap_or_else(|| safest(features))
        }
        AgentKind::Tree1 => {
            let cut = if block.constrained { agent.tree.safe_cut } else { f64::NEG_INFINITY };
            argmax(
                (0..n).filter(|&i| features.p_safe[i] > cut && features.p_improve[i] > agent.tree.improve_cut),
                |i| features.p_improve[i],
            )
            .unwrap_or_else(|| safest(features))
        }
        AgentKind::Tree2 => {
            let cut = if block.constrained { agent.tree.safe_cut } else { f64::NEG_INFINITY };
            argmax((0..n).filter(|&i| features.p_safe[i] > cut), |i| bounds.midpoint(i))
                .unwrap_or_else(|| safest(features))
        }
        AgentKind::Random => seed::rng(trial_seed).random_range(0..n),
    }
}

fn agent_trial_seed(agent: &AgentSpec, block: &BlockState, trial: usize) -> u64 {
    seed::derive(agent.seed, &[stream::AGENT, block.seed, trial as u64])
}

/// Play one block to the end. The first record is the start observation;
/// every choice record carries the features computed before that choice.
pub fn run_block(agent: &AgentSpec, env: &TaskEnv, mut block: BlockState, subject: &str) -> Result<Vec<ChoiceRecord>> {
    let wrap = |e: Error, block: usize| Error::Block { subject: subject.to_string(), block, source: Box::new(e) };
    let mut records = vec![start_record(&block, subject, Some(agent.kind))];
    while block.status.is_active() {
        let trial = block.choices_made() + 1;
        let assessment = env.assess(&block, agent.beta).map_err(|e| wrap(e, block.index))?;
        let choice = choose(
            agent,
            &assessment.features,
            &assessment.bounds,
            &block,
            agent_trial_seed(agent, &block, trial),
        );
        let noise_seed = TaskEnv::noise_seed(&block, trial);
        let y = env
            .step(&mut block, choice, noise_seed)
            .map_err(|e| wrap(e, block.index))?;
        records.push(ChoiceRecord {
            subject: subject.to_string(),
            block: block.index,
            trial,
            kind: RecordKind::Choice,
            condition: block.condition(),
            agent: Some(agent.kind.to_string()),
            chosen: choice,
            y,
            status: block.status,
            start_index: block.start_index,
            threshold: block.threshold,
            features: Some(assessment.features),
        });
    }
    Ok(records)
}

pub fn start_record(block: &BlockState, subject: &str, agent: Option<AgentKind>) -> ChoiceRecord {
    ChoiceRecord {
        subject: subject.to_string(),
        block: block.index,
        trial: 0,
        kind: RecordKind::Start,
        condition: block.condition(),
        agent: agent.map(|a| a.to_string()),
        chosen: block.start_index,
        y: block.start_value(),
        status: block.status,
        start_index: block.start_index,
        threshold: block.threshold,
        features: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::BlockStatus;

    fn features(n: usize) -> SetFeatures {
        SetFeatures {
            safe: vec![false; n],
            maximizer: vec![false; n],
            expander: vec![false; n],
            expander_count: vec![0; n],
            p_safe: vec![0.1; n],
            p_improve: vec![0.1; n],
            p_expand: vec![0.0; n],
            threshold: Some(0.0),
        }
    }

    fn flat_bounds(n: usize) -> ConfidenceBounds {
        ConfidenceBounds { upper: vec![1.0; n], lower: vec![-1.0; n], beta: 3.0 }
    }

    fn block(n: usize) -> BlockState {
        BlockState {
            index: 0,
            seed: 0,
            latent: vec![0.0; n],
            threshold: Some(0.0),
            constrained: true,
            start_index: 0,
            history: vec![(0, 0.5)],
            status: BlockStatus::Active,
            score: 0.5,
        }
    }

    #[test]
    fn single_safe_point_wins_for_every_rule() {
        let mut f = features(5);
        f.p_safe[3] = 0.999;
        for kind in [AgentKind::SafeOpt, AgentKind::Tree1, AgentKind::Tree2] {
            assert_eq!(choose(&AgentSpec::new(kind), &f, &flat_bounds(5), &block(5), 0), 3, "{kind}");
        }
    }

    #[test]
    fn safeopt_takes_widest_expanding_maximizer() {
        let mut f = features(4);
        for i in [1, 2] {
            f.safe[i] = true;
            f.maximizer[i] = true;
            f.expander[i] = true;
        }
        f.safe[3] = true;
        f.maximizer[3] = true;
        let b = ConfidenceBounds { upper: vec![5.0, 2.0, 1.5, 9.0], lower: vec![0.0; 4], beta: 3.0 };
        assert_eq!(choose(&AgentSpec::new(AgentKind::SafeOpt), &f, &b, &block(4), 0), 1);

        // Ties go to the lowest index.
        let b = ConfidenceBounds { upper: vec![5.0, 2.0, 2.0, 9.0], lower: vec![0.0; 4], beta: 3.0 };
        assert_eq!(choose(&AgentSpec::new(AgentKind::SafeOpt), &f, &b, &block(4), 0), 1);

        // Without expanders, the widest maximizer.
        f.expander = vec![false; 4];
        assert_eq!(choose(&AgentSpec::new(AgentKind::SafeOpt), &f, &b, &block(4), 0), 3);
    }

    #[test]
    fn tree1_skips_points_below_the_safety_cut() {
        let mut f = features(3);
        f.p_safe = vec![0.98, 0.995, 0.999];
        f.p_improve = vec![0.9, 0.3, 0.04];
        let agent = AgentSpec::new(AgentKind::Tree1);
        assert_eq!(choose(&agent, &f, &flat_bounds(3), &block(3), 0), 1);

        let mut open = block(3);
        open.constrained = false;
        assert_eq!(choose(&agent, &f, &flat_bounds(3), &open, 0), 0);
    }

    #[test]
    fn tree2_takes_highest_mean_among_safe_enough() {
        let mut f = features(3);
        f.p_safe = vec![0.7, 0.85, 0.9];
        let b = ConfidenceBounds { upper: vec![10.0, 4.0, 3.0], lower: vec![0.0, 0.0, 0.0], beta: 3.0 };
        assert_eq!(choose(&AgentSpec::new(AgentKind::Tree2), &f, &b, &block(3), 0), 1);
    }

    #[test]
    fn random_is_seeded() {
        let f = features(21);
        let agent = AgentSpec::new(AgentKind::Random);
        let picks: Vec<usize> = (0..50).map(|s| choose(&agent, &f, &flat_bounds(21), &block(21), s)).collect();
        let again: Vec<usize> = (0..50).map(|s| choose(&agent, &f, &flat_bounds(21), &block(21), s)).collect();
        assert_eq!(picks, again);
        assert!(picks.iter().collect::<std::collections::BTreeSet<_>>().len() > 10);
    }

    #[test]
    fn agent_names_parse() {
        for k in AgentKind::ALL {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert!("greedy".parse::<AgentKind>().is_err());
    }
}
