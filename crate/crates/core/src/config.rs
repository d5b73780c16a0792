//! Flat key-value task configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! experiment = 2          # defaults to start from (1 or 2)
//! blocks = 6
//! safe_blocks = 3         # the first N blocks are safe before permutation
//! threshold = 50          # median | none | <number>
//! ```
//!
//! Unknown keys and repeated keys are errors.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::task::{OutputScaling, TaskConfig, ThresholdRule};

pub const KEYS: &[&str] = &[
    "experiment",
    "grid",
    "signal_sd",
    "lengthscale",
    "noise_sd",
    "trials_per_block",
    "blocks",
    "safe_blocks",
    "threshold",
    "output_scaling",
    "model_signal_sd",
    "model_lengthscale",
    "model_prior_mean",
    "expand_samples",
];

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| err(line, format!("{key}: cannot parse '{value}'")))
}

fn parse_grid(line: usize, value: &str) -> Result<GridDomain> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    let [shape, start, stop, step] = parts.as_slice() else {
        return Err(err(line, "grid must be '<line|square> <start> <stop> <step>'"));
    };
    let (start, stop, step) = (num(line, "grid", start)?, num(line, "grid", stop)?, num(line, "grid", step)?);
    match *shape {
        "line" => GridDomain::line(start, stop, step),
        "square" => GridDomain::square(start, stop, step),
        other => return Err(err(line, format!("unknown grid shape '{other}'"))),
    }
    .map_err(|e| err(line, e))
}

pub fn parse_config(text: &str) -> Result<TaskConfig> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        let key = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| err(line, format!("unknown key '{key}'")))?;
        if entries.insert(key, (line, value.trim())).is_some() {
            return Err(err(line, format!("duplicate key '{key}'")));
        }
    }

    let mut config = match entries.get("experiment") {
        Some(&(line, v)) => TaskConfig::for_experiment(num(line, "experiment", v)?).map_err(|e| err(line, e))?,
        None => TaskConfig::experiment1(),
    };
    let mut safe_blocks = None;
    for (&key, &(line, value)) in &entries {
        match key {
            "experiment" => {}
            "grid" => config.domain = Arc::new(parse_grid(line, value)?),
            "signal_sd" => config.kernel.signal_sd = num(line, key, value)?,
            "lengthscale" => config.kernel.lengthscale = num(line, key, value)?,
            "noise_sd" => config.noise_sd = num(line, key, value)?,
            "trials_per_block" => config.trials_per_block = num(line, key, value)?,
            "blocks" => config.blocks = num(line, key, value)?,
            "safe_blocks" => safe_blocks = Some((line, num::<usize>(line, key, value)?)),
            "threshold" => {
                config.threshold_rule = match value {
                    "median" => ThresholdRule::MedianSplit,
                    "none" => ThresholdRule::None,
                    v => ThresholdRule::Fixed(num(line, key, v)?),
                }
            }
            "output_scaling" => {
                config.output_scaling = match value {
                    "identity" => OutputScaling::Identity,
                    "affine_0_100" => OutputScaling::AffineTo0To100,
                    v => return Err(err(line, format!("output_scaling: unknown value '{v}'"))),
                }
            }
            "model_signal_sd" => config.model.kernel.signal_sd = num(line, key, value)?,
            "model_lengthscale" => config.model.kernel.lengthscale = num(line, key, value)?,
            "model_prior_mean" => config.model.prior_mean = num(line, key, value)?,
            "expand_samples" => config.expand_samples = num(line, key, value)?,
            _ => unreachable!("key list and match disagree on {key}"),
        }
    }

    // Flags follow the block count: an explicit safe_blocks wins, otherwise
    // the experiment's default proportion is kept.
    let safe = match safe_blocks {
        Some((line, k)) if k > config.blocks => {
            return Err(err(line, format!("safe_blocks {k} exceeds blocks {}", config.blocks)))
        }
        Some((_, k)) => k,
        None if config.experiment == 2 => config.blocks / 2,
        None => config.blocks,
    };
    config.safe_block_flags = (0..config.blocks).map(|b| b < safe).collect();
    config.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<TaskConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_experiment1() {
        assert_eq!(parse_config("").unwrap(), TaskConfig::experiment1());
        assert_eq!(parse_config("experiment = 2\n").unwrap(), TaskConfig::experiment2());
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config(
            "experiment = 2\nblocks = 4 # short\nsafe_blocks = 1\nthreshold = none\ngrid = line 0 5 1\n",
        )
        .unwrap();
        assert_eq!(c.blocks, 4);
        assert_eq!(c.safe_block_flags, vec![true, false, false, false]);
        assert_eq!(c.threshold_rule, ThresholdRule::None);
        assert_eq!(c.domain.len(), 6);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail_loudly() {
        let e = parse_config("noise_sd = 1\nbeta = 3\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("unknown key 'beta'"), "{e}");
        assert!(parse_config("blocks = 2\nblocks = 3").is_err());
        assert!(parse_config("blocks = two").is_err());
        assert!(parse_config("just words").is_err());
        assert!(parse_config("experiment = 3").is_err());
        assert!(parse_config("blocks = 2\nsafe_blocks = 3").is_err());
        assert!(parse_config("noise_sd = -1").is_err());
        assert!(parse_config("output_scaling = log").is_err());
    }
}
