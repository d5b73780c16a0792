//! Behavioral analyses over choice records: long-format expansion,
//! set-membership logistic regression, log-loss threshold trees and
//! distance-to-start distributions.

mod distance;
mod logistic;
mod long;
pub mod report;
pub mod synthetic;
mod tree;

pub use distance::{distance_stats, DistanceBin, DistanceSummary};
pub use logistic::{aliased_features, fit_logistic, fit_logistic_firth, logistic_fit, logistic_fit_firth, LogisticFit};
pub use long::{expand_long, LongTable, TrialMeta, FEATURE_NAMES};
pub use tree::{fit_tree, tree_fit, TreeFit, TreeNode, CUT_STEPS};

/// Named numeric columns plus a 0/1 outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub outcome: Vec<f64>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.outcome.len()
    }
}
