use serde::{Deserialize, Serialize};

use crate::acquisition::SetFeatures;
use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::records::{ChoiceRecord, Condition, RecordKind};
use crate::task::BlockStatus;

use super::Design;

/// Feature columns available in a long table.
pub const FEATURE_NAMES: &[&str] = &["safe", "maximizer", "expander", "expander_count", "p_safe", "p_improve", "p_expand"];

/// Everything about a trial that is not per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject: String,
    pub block: usize,
    pub trial: usize,
    pub condition: Condition,
    pub agent: Option<String>,
    pub chosen: usize,
    pub y: f64,
    pub status: BlockStatus,
    pub start_index: usize,
    pub threshold: Option<f64>,
    pub feature_threshold: Option<f64>,
}

/// One row per (trial, grid point), stored column-wise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LongTable {
    pub trials: Vec<TrialMeta>,
    pub trial_id: Vec<u32>,
    pub point: Vec<u32>,
    pub chosen: Vec<bool>,
    pub safe: Vec<bool>,
    pub maximizer: Vec<bool>,
    pub expander: Vec<bool>,
    pub expander_count: Vec<u32>,
    pub p_safe: Vec<f64>,
    pub p_improve: Vec<f64>,
    pub p_expand: Vec<f64>,
}

fn indicator(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

impl LongTable {
    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    pub fn subject_of(&self, row: usize) -> &str {
        &self.trials[self.trial_id[row] as usize].subject
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(match name {
            "safe" => indicator(&self.safe),
            "maximizer" => indicator(&self.maximizer),
            "expander" => indicator(&self.expander),
            "expander_count" => self.expander_count.iter().map(|&c| c as f64).collect(),
            "p_safe" => self.p_safe.clone(),
            "p_improve" => self.p_improve.clone(),
            "p_expand" => self.p_expand.clone(),
            other => {
                return Err(Error::invalid(format!(
                    "unknown feature '{other}' (known: {})",
                    FEATURE_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn outcome(&self) -> Vec<f64> {
        indicator(&self.chosen)
    }

    pub fn design(&self, features: &[&str]) -> Result<Design> {
        Ok(Design {
            names: features.iter().map(|s| s.to_string()).collect(),
            columns: features.iter().map(|f| self.column(f)).collect::<Result<_>>()?,
            outcome: self.outcome(),
        })
    }

    /// Rows whose trial satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(&TrialMeta) -> bool) -> LongTable {
        let mut out = LongTable::default();
        let mut remap = vec![None; self.trials.len()];
        for (i, t) in self.trials.iter().enumerate() {
            if keep(t) {
                remap[i] = Some(out.trials.len() as u32);
                out.trials.push(t.clone());
            }
        }
        for row in 0..self.len() {
            if let Some(id) = remap[self.trial_id[row] as usize] {
                out.trial_id.push(id);
                out.point.push(self.point[row]);
                out.chosen.push(self.chosen[row]);
                out.safe.push(self.safe[row]);
                out.maximizer.push(self.maximizer[row]);
                out.expander.push(self.expander[row]);
                out.expander_count.push(self.expander_count[row]);
                out.p_safe.push(self.p_safe[row]);
                out.p_improve.push(self.p_improve[row]);
                out.p_expand.push(self.p_expand[row]);
            }
        }
        out
    }

    pub fn condition(&self, condition: Condition) -> LongTable {
        self.filter(|t| t.condition == condition)
    }

    /// Rebuild the choice records the table was expanded from.
    pub fn to_records(&self) -> Vec<ChoiceRecord> {
        let mut out: Vec<ChoiceRecord> = self
            .trials
            .iter()
            .map(|t| ChoiceRecord {
                subject: t.subject.clone(),
                block: t.block,
                trial: t.trial,
                kind: RecordKind::Choice,
                condition: t.condition,
                agent: t.agent.clone(),
                chosen: t.chosen,
                y: t.y,
                status: t.status,
                start_index: t.start_index,
                threshold: t.threshold,
                features: Some(SetFeatures {
                    safe: vec![],
                    maximizer: vec![],
                    expander: vec![],
                    expander_count: vec![],
                    p_safe: vec![],
                    p_improve: vec![],
                    p_expand: vec![],
                    threshold: t.feature_threshold,
                }),
            })
            .collect();
        for row in 0..self.len() {
            let f = out[self.trial_id[row] as usize].features.as_mut().expect("set above");
            f.safe.push(self.safe[row]);
            f.maximizer.push(self.maximizer[row]);
            f.expander.push(self.expander[row]);
            f.expander_count.push(self.expander_count[row]);
            f.p_safe.push(self.p_safe[row]);
            f.p_improve.push(self.p_improve[row]);
            f.p_expand.push(self.p_expand[row]);
        }
        out
    }
}

/// One row per (subject, block, trial, grid point) with outcome 1 for the
/// chosen point. Start records are skipped; they are not choices.
pub fn expand_long(records: &[ChoiceRecord], domain: &GridDomain) -> Result<LongTable> {
    let n = domain.len();
    let mut table = LongTable::default();
    for r in records.iter().filter(|r| r.is_choice()) {
        let f = r.features.as_ref().ok_or_else(|| {
            Error::DataIntegrity(format!(
                "choice record (subject {}, block {}, trial {}) has no features",
                r.subject, r.block, r.trial
            ))
        })?;
        let lengths = [
            f.safe.len(),
            f.maximizer.len(),
            f.expander.len(),
            f.expander_count.len(),
            f.p_safe.len(),
            f.p_improve.len(),
            f.p_expand.len(),
        ];
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::DataIntegrity(format!(
                "features of (subject {}, block {}, trial {}) do not cover the {n}-point grid",
                r.subject, r.block, r.trial
            )));
        }
        if r.chosen >= n {
            return Err(Error::DataIntegrity(format!(
                "chosen index {} missing from features of (subject {}, block {}, trial {})",
                r.chosen, r.subject, r.block, r.trial
            )));
        }
        let id = table.trials.len() as u32;
        table.trials.push(TrialMeta {
            subject: r.subject.clone(),
            block: r.block,
            trial: r.trial,
            condition: r.condition,
            agent: r.agent.clone(),
            chosen: r.chosen,
            y: r.y,
            status: r.status,
            start_index: r.start_index,
            threshold: r.threshold,
            feature_threshold: f.threshold,
        });
        for i in 0..n {
            table.trial_id.push(id);
            table.point.push(i as u32);
            table.chosen.push(i == r.chosen);
        }
        table.safe.extend_from_slice(&f.safe);
        table.maximizer.extend_from_slice(&f.maximizer);
        table.expander.extend_from_slice(&f.expander);
        table.expander_count.extend_from_slice(&f.expander_count);
        table.p_safe.extend_from_slice(&f.p_safe);
        table.p_improve.extend_from_slice(&f.p_improve);
        table.p_expand.extend_from_slice(&f.p_expand);
    }
    Ok(table)
}
