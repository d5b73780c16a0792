//! The threshold-bandit task: latent function generation and the block
//! state machine shared by simulated agents and human sessions.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, Assessment, FeatureSettings};
use crate::error::{Error, Result};
use crate::gp::{GpModel, GpSampler, KernelParams, ObservationSet};
use crate::grid::GridDomain;
use crate::records::Condition;
use crate::seed::{self, stream};
use crate::stats::prob_above;

const MAX_RESAMPLES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    /// Threshold at the median of the block's latent values.
    MedianSplit,
    Fixed(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputScaling {
    Identity,
    /// Per-surface affine map sending the grid minimum to 0 and maximum to 100.
    AffineTo0To100,
}

/// The belief model agents (and server-side feature snapshots) use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrior {
    pub kernel: KernelParams,
    /// Constant prior mean, in output units.
    pub prior_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub experiment: u8,
    /// Kernel the latent functions are drawn from.
    pub kernel: KernelParams,
    pub domain: Arc<GridDomain>,
    pub noise_sd: f64,
    pub trials_per_block: usize,
    pub blocks: usize,
    pub threshold_rule: ThresholdRule,
    pub output_scaling: OutputScaling,
    /// `true` marks a "safe" block, where sub-threshold outputs end the block.
    pub safe_block_flags: Vec<bool>,
    pub model: ModelPrior,
    pub expand_samples: usize,
}

impl TaskConfig {
    pub fn experiment1() -> Self {
        let kernel = KernelParams { signal_sd: 1.0, lengthscale: 1.0 };
        let blocks = 9;
        Self {
            experiment: 1,
            kernel,
            domain: Arc::new(GridDomain::experiment1()),
            noise_sd: 1.0,
            trials_per_block: 10,
            blocks,
            threshold_rule: ThresholdRule::MedianSplit,
            output_scaling: OutputScaling::Identity,
            safe_block_flags: vec![true; blocks],
            model: ModelPrior { kernel, prior_mean: 0.0 },
            expand_samples: crate::acquisition::DEFAULT_EXPAND_SAMPLES,
        }
    }

    pub fn experiment2() -> Self {
        let blocks = 10;
        Self {
            experiment: 2,
            kernel: KernelParams { signal_sd: 1.0, lengthscale: 2.0 },
            domain: Arc::new(GridDomain::experiment2()),
            noise_sd: 1.0,
            trials_per_block: 10,
            blocks,
            threshold_rule: ThresholdRule::Fixed(50.0),
            output_scaling: OutputScaling::AffineTo0To100,
            safe_block_flags: (0..blocks).map(|b| b < blocks / 2).collect(),
            // Surfaces live on a 0-100 scale after the affine map; the belief
            // model is centered on the midpoint with the matching output scale.
            model: ModelPrior {
                kernel: KernelParams { signal_sd: EXPERIMENT2_MODEL_SIGNAL_SD, lengthscale: 2.0 },
                prior_mean: 50.0,
            },
            expand_samples: crate::acquisition::DEFAULT_EXPAND_SAMPLES,
        }
    }

    pub fn for_experiment(experiment: u8) -> Result<Self> {
        match experiment {
            1 => Ok(Self::experiment1()),
            2 => Ok(Self::experiment2()),
            other => Err(Error::invalid(format!("unknown experiment {other} (expected 1 or 2)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.model.kernel.validate()?;
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::invalid("noise_sd must be nonnegative"));
        }
        if self.trials_per_block == 0 || self.blocks == 0 {
            return Err(Error::invalid("trials_per_block and blocks must be positive"));
        }
        if self.safe_block_flags.len() != self.blocks {
            return Err(Error::invalid(format!(
                "{} safe-block flags for {} blocks",
                self.safe_block_flags.len(),
                self.blocks
            )));
        }
        if self.expand_samples == 0 {
            return Err(Error::invalid("expand_samples must be positive"));
        }
        if let ThresholdRule::Fixed(v) = self.threshold_rule {
            if !v.is_finite() {
                return Err(Error::invalid("fixed threshold must be finite"));
            }
        }
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    /// Copy with the safe/normal block order shuffled, deterministic in `seed`.
    pub fn with_permuted_blocks(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.safe_block_flags.shuffle(&mut seed::rng(seed::derive(seed, &[stream::ORDER])));
        out
    }
}

/// Prior output scale of the experiment-2 belief model. The 0-100 map
/// stretches a latent draw by `100 / range`, and the median range of a
/// `(signal_sd 1, lengthscale 2)` draw over the unit grid is about 0.73.
pub const EXPERIMENT2_MODEL_SIGNAL_SD: f64 = 140.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Active,
    Completed,
    Terminated,
}

impl BlockStatus {
    pub fn is_active(self) -> bool {
        self == BlockStatus::Active
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub index: usize,
    pub seed: u64,
    /// True function values after scaling. Never shown to participants.
    pub latent: Vec<f64>,
    /// The task's threshold, present whenever the rule defines one.
    pub threshold: Option<f64>,
    /// Whether sub-threshold outputs end this block.
    pub constrained: bool,
    pub start_index: usize,
    /// `(grid index, observed y)`; the first entry is the provided start point.
    pub history: Vec<(usize, f64)>,
    pub status: BlockStatus,
    pub score: f64,
}

impl BlockState {
    pub fn condition(&self) -> Condition {
        if self.constrained {
            Condition::Safe
        } else {
            Condition::Normal
        }
    }

    /// Choices made so far, excluding the provided start observation.
    pub fn choices_made(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn observations(&self, noise_var: f64) -> ObservationSet {
        ObservationSet::from_pairs(noise_var, self.history.iter().copied())
    }

    pub fn start_value(&self) -> f64 {
        self.history[0].1
    }
}

/// A task configuration with its latent-function sampler and belief model
/// prepared once.
#[derive(Debug, Clone)]
pub struct TaskEnv {
    config: TaskConfig,
    sampler: Arc<GpSampler>,
    model: Arc<GpModel>,
}

impl TaskEnv {
    pub fn new(config: TaskConfig) -> Result<Self> {
        config.validate()?;
        let sampler = GpSampler::new(&config.kernel, &config.domain)?;
        let model = GpModel::new(config.model.kernel, &config.domain)?;
        Ok(Self { config, sampler: Arc::new(sampler), model: Arc::new(model) })
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn domain(&self) -> &GridDomain {
        &self.config.domain
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    /// Same sampler and model, different block order.
    pub fn with_config(&self, config: TaskConfig) -> Result<Self> {
        config.validate()?;
        if config.kernel != self.config.kernel
            || config.model != self.config.model
            || config.domain != self.config.domain
        {
            return TaskEnv::new(config);
        }
        Ok(Self { config, sampler: self.sampler.clone(), model: self.model.clone() })
    }

    fn scale(&self, mut f: Vec<f64>) -> Vec<f64> {
        if self.config.output_scaling == OutputScaling::AffineTo0To100 {
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            if span > 0.0 {
                f.iter_mut().for_each(|v| *v = (*v - lo) / span * 100.0);
            }
        }
        f
    }

    fn threshold_for(&self, latent: &[f64]) -> Option<f64> {
        match self.config.threshold_rule {
            ThresholdRule::MedianSplit => Some(median(latent)),
            ThresholdRule::Fixed(v) => Some(v),
            ThresholdRule::None => None,
        }
    }

    /// Draw a latent function and start point for one block.
    pub fn make_block(&self, block_index: usize, block_seed: u64) -> Result<BlockState> {
        if block_index >= self.config.blocks {
            return Err(Error::invalid(format!(
                "block index {block_index} out of range ({} blocks)",
                self.config.blocks
            )));
        }
        let constrained_flag = self.config.safe_block_flags[block_index];
        for attempt in 0..MAX_RESAMPLES {
            let latent = self.scale(
                self.sampler
                    .sample_seeded(seed::derive(block_seed, &[stream::BLOCK, attempt])),
            );
            let threshold = self.threshold_for(&latent);
            let eligible: Vec<usize> = match threshold {
                Some(t) => (0..latent.len()).filter(|&i| latent[i] > t).collect(),
                None => (0..latent.len()).collect(),
            };
            if eligible.is_empty() {
                continue;
            }
            let mut rng = seed::rng(seed::derive(block_seed, &[stream::START]));
            let start_index = eligible[rng.random_range(0..eligible.len())];
            let noise = Normal::new(0.0, self.config.noise_sd)
                .map_err(|e| Error::invalid(e.to_string()))?;
            let y0 = latent[start_index] + noise.sample(&mut rng);
            return Ok(BlockState {
                index: block_index,
                seed: block_seed,
                latent,
                threshold,
                constrained: constrained_flag && threshold.is_some(),
                start_index,
                history: vec![(start_index, y0)],
                status: BlockStatus::Active,
                score: y0,
            });
        }
        Err(Error::GenerationFailure(format!(
            "no grid point above threshold after {MAX_RESAMPLES} draws"
        )))
    }

    /// Noise seed used for the `trial`-th choice of a block.
    pub fn noise_seed(block: &BlockState, trial: usize) -> u64 {
        seed::derive(block.seed, &[stream::NOISE, trial as u64])
    }

    /// Seed of the forward-simulation draws behind the `trial`-th feature snapshot.
    pub fn features_seed(block: &BlockState, trial: usize) -> u64 {
        seed::derive(block.seed, &[stream::FEATURES, trial as u64])
    }

    /// Posterior, bounds and set features for the block's current history, as
    /// seen before its next choice. Agents and the session service both go
    /// through here.
    pub fn assess(&self, block: &BlockState, beta: f64) -> Result<Assessment> {
        let settings = FeatureSettings { beta, expand_samples: self.config.expand_samples };
        acquisition::assess(
            &self.model,
            &block.observations(self.config.noise_var()),
            self.config.model.prior_mean,
            block.threshold,
            &settings,
            Self::features_seed(block, block.choices_made() + 1),
        )
    }

    /// Observe `latent[choice]` plus noise and advance the block.
    pub fn step(&self, block: &mut BlockState, choice: usize, noise_seed: u64) -> Result<f64> {
        if !block.status.is_active() {
            return Err(Error::InvalidState(format!("block {} is {:?}", block.index, block.status)));
        }
        self.config.domain.check_index(choice)?;
        let noise = Normal::new(0.0, self.config.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
        let y = block.latent[choice] + noise.sample(&mut seed::rng(noise_seed));
        block.history.push((choice, y));
        block.score += y;
        match block.threshold {
            Some(t) if block.constrained && y < t => block.status = BlockStatus::Terminated,
            _ if block.choices_made() >= self.config.trials_per_block => block.status = BlockStatus::Completed,
            _ => {}
        }
        Ok(y)
    }

    /// Exact expected number of choices a uniform-random agent makes in this
    /// block: per-trial survival `p` is the grid average of `P(y >= J_min)`.
    pub fn expected_random_length(&self, block: &BlockState) -> f64 {
        let p = match block.threshold {
            Some(t) if block.constrained => {
                block
                    .latent
                    .iter()
                    .map(|&f| prob_above(f, t, self.config.noise_sd))
                    .sum::<f64>()
                    / block.latent.len() as f64
            }
            _ => 1.0,
        };
        (0..self.config.trials_per_block).map(|k| p.powi(k as i32)).sum()
    }

    /// Monte Carlo performance of the uniform-random agent.
    pub fn chance_level(&self, n_sims: usize, seed: u64) -> Result<ChanceLevel> {
        if n_sims == 0 {
            return Err(Error::invalid("chance_level needs n_sims >= 1"));
        }
        let n = self.config.domain.len();
        let mut score = 0.0;
        let mut choices = 0usize;
        let mut violations = 0usize;
        for s in 0..n_sims {
            let block_seed = seed::derive(seed, &[stream::BLOCK, s as u64]);
            let mut block = self.make_block(s % self.config.blocks, block_seed)?;
            let mut rng = seed::rng(seed::derive(block_seed, &[stream::AGENT]));
            while block.status.is_active() {
                let trial = block.choices_made() + 1;
                let choice = rng.random_range(0..n);
                let noise_seed = Self::noise_seed(&block, trial);
                score += self.step(&mut block, choice, noise_seed)?;
                choices += 1;
            }
            violations += usize::from(block.status == BlockStatus::Terminated);
        }
        Ok(ChanceLevel {
            score_per_trial: score / choices as f64,
            block_length: choices as f64 / n_sims as f64,
            violation_rate: violations as f64 / n_sims as f64,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceLevel {
    pub score_per_trial: f64,
    pub block_length: f64,
    pub violation_rate: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(mut config: TaskConfig) -> TaskEnv {
        config.noise_sd = 0.0;
        TaskEnv::new(config).unwrap()
    }

    fn fixed_block(latent: Vec<f64>, threshold: Option<f64>) -> BlockState {
        BlockState {
            index: 0,
            seed: 1,
            latent,
            threshold,
            constrained: threshold.is_some(),
            start_index: 0,
            history: vec![(0, 0.0)],
            status: BlockStatus::Active,
            score: 0.0,
        }
    }

    #[test]
    fn median_split_leaves_ten_or_eleven_above() {
        let env = TaskEnv::new(TaskConfig::experiment1()).unwrap();
        for s in 0..200 {
            let block = env.make_block(s % 9, s as u64).unwrap();
            let t = block.threshold.unwrap();
            let above = block.latent.iter().filter(|&&f| f > t).count();
            assert!(above == 10 || above == 11, "{above}");
            assert!(block.latent[block.start_index] > t);
            assert_eq!(block.score, block.start_value());
        }
    }

    #[test]
    fn experiment2_surfaces_span_0_to_100() {
        let env = TaskEnv::new(TaskConfig::experiment2()).unwrap();
        for s in 0..20 {
            let block = env.make_block(s % 10, 100 + s as u64).unwrap();
            let lo = block.latent.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = block.latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo.abs() < 1e-9 && (hi - 100.0).abs() < 1e-9);
            assert!(block.latent[block.start_index] > 50.0);
            assert_eq!(block.constrained, env.config().safe_block_flags[s % 10]);
        }
    }

    #[test]
    fn make_block_is_deterministic_and_range_checked() {
        let env = TaskEnv::new(TaskConfig::experiment1()).unwrap();
        assert_eq!(env.make_block(2, 9).unwrap(), env.make_block(2, 9).unwrap());
        assert!(env.make_block(9, 9).is_err());
    }

    #[test]
    fn noiseless_pass_and_violation() {
        let env = noiseless(TaskConfig::experiment1());
        let mut latent = vec![0.0; 21];
        latent[3] = 3.2;
        latent[4] = -1.0;
        let mut block = fixed_block(latent.clone(), Some(0.0));
        let y = env.step(&mut block, 3, 5).unwrap();
        assert!((y - 3.2).abs() < 1e-12);
        assert!(block.status.is_active());

        let y = env.step(&mut block, 4, 6).unwrap();
        assert!((y + 1.0).abs() < 1e-12);
        assert_eq!(block.status, BlockStatus::Terminated);
        assert!((block.score - 2.2).abs() < 1e-12);
        assert!(matches!(env.step(&mut block, 3, 7), Err(Error::InvalidState(_))));
    }

    #[test]
    fn completion_after_trials_per_block() {
        let env = noiseless(TaskConfig::experiment1());
        let mut block = fixed_block(vec![1.0; 21], Some(0.0));
        for k in 0..10 {
            assert!(block.status.is_active(), "trial {k}");
            env.step(&mut block, k, k as u64).unwrap();
        }
        assert_eq!(block.status, BlockStatus::Completed);
        assert_eq!(block.choices_made(), 10);
    }

    #[test]
    fn invalid_choice_is_rejected() {
        let env = TaskEnv::new(TaskConfig::experiment1()).unwrap();
        let mut block = env.make_block(0, 1).unwrap();
        assert!(matches!(env.step(&mut block, 21, 0), Err(Error::InvalidInput(_))));
        assert_eq!(block.history.len(), 1);
    }

    #[test]
    fn no_threshold_never_terminates() {
        let mut config = TaskConfig::experiment1();
        config.threshold_rule = ThresholdRule::None;
        let env = TaskEnv::new(config).unwrap();
        let mut starts = std::collections::BTreeSet::new();
        for s in 0..100 {
            let block = env.make_block(0, s).unwrap();
            assert!(block.threshold.is_none() && !block.constrained);
            starts.insert(block.start_index);
        }
        assert!(starts.len() > 15);
        let level = env.chance_level(200, 3).unwrap();
        assert_eq!(level.block_length, 10.0);
        assert_eq!(level.violation_rate, 0.0);
    }

    #[test]
    fn chance_level_is_deterministic() {
        let env = TaskEnv::new(TaskConfig::experiment1()).unwrap();
        assert_eq!(env.chance_level(50, 4).unwrap(), env.chance_level(50, 4).unwrap());
        assert!(env.chance_level(0, 4).is_err());
    }

    #[test]
    fn permutation_keeps_five_safe_blocks() {
        let config = TaskConfig::experiment2();
        let a = config.with_permuted_blocks(1);
        assert_eq!(a.safe_block_flags.iter().filter(|&&f| f).count(), 5);
        assert_eq!(a, config.with_permuted_blocks(1));
        let distinct: std::collections::BTreeSet<Vec<bool>> =
            (0..20).map(|s| config.with_permuted_blocks(s).safe_block_flags).collect();
        assert!(distinct.len() > 5);
    }
}
