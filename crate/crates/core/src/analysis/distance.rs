use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::records::{ChoiceRecord, Condition};

/// Squared distances are keyed at this resolution so that equal grid
/// distances share a bin regardless of floating-point noise.
const KEY_SCALE: f64 = 1e6;

fn key(squared: f64) -> i64 {
    (squared * KEY_SCALE).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub distance: f64,
    pub count: usize,
    pub empirical: f64,
    /// Probability of this distance for a uniformly random choice from the same starts.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub condition: Condition,
    pub choices: usize,
    pub bins: Vec<DistanceBin>,
    pub mean: f64,
    pub reference_mean: f64,
}

impl DistanceSummary {
    pub fn total_variation(&self) -> f64 {
        0.5 * self.bins.iter().map(|b| (b.empirical - b.reference).abs()).sum::<f64>()
    }
}

/// Distance from the start point to each chosen point, per condition, next
/// to the exact distribution a uniform random chooser would produce.
pub fn distance_stats(records: &[ChoiceRecord], domain: &GridDomain) -> Result<Vec<DistanceSummary>> {
    let mut groups: BTreeMap<&str, (Condition, Vec<&ChoiceRecord>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_choice()) {
        domain.check_index(r.chosen).map_err(|e| Error::DataIntegrity(e.to_string()))?;
        domain.check_index(r.start_index).map_err(|e| Error::DataIntegrity(e.to_string()))?;
        groups.entry(r.condition.as_str()).or_insert_with(|| (r.condition, Vec::new())).1.push(r);
    }
    if groups.is_empty() {
        return Err(Error::invalid("distance analysis needs at least one choice record"));
    }

    let n = domain.len() as u64;
    let mut summaries = Vec::new();
    for (_, (condition, rows)) in groups {
        // Start index -> how many choices were made from it.
        let mut starts: BTreeMap<usize, u64> = BTreeMap::new();
        // key -> (distance, empirical count, reference weight in units of 1 / (n * rows)).
        let mut bins: BTreeMap<i64, (f64, usize, u64)> = BTreeMap::new();
        let mut sum = 0.0;
        for r in &rows {
            let d2 = domain.squared_distance(r.start_index, r.chosen);
            sum += d2.sqrt();
            bins.entry(key(d2)).or_insert((d2.sqrt(), 0, 0)).1 += 1;
            *starts.entry(r.start_index).or_insert(0) += 1;
        }
        for (&start, &weight) in &starts {
            for j in 0..domain.len() {
                let d2 = domain.squared_distance(start, j);
                bins.entry(key(d2)).or_insert((d2.sqrt(), 0, 0)).2 += weight;
            }
        }
        let m = rows.len() as f64;
        let denom = (n * rows.len() as u64) as f64;
        let reference_mean = bins.values().map(|&(d, _, w)| d * w as f64).sum::<f64>() / denom;
        summaries.push(DistanceSummary {
            condition,
            choices: rows.len(),
            bins: bins
                .into_values()
                .map(|(distance, count, weight)| DistanceBin {
                    distance,
                    count,
                    empirical: count as f64 / m,
                    reference: weight as f64 / denom,
                })
                .collect(),
            mean: sum / m,
            reference_mean,
        });
    }
    Ok(summaries)
}
