//! Exhaustive log-loss threshold trees of depth 1 or 2.
//!
//! Splits are `value > k / 100` for `k = 0..=100`. Every row is binned once
//! per feature (bin = smallest `k` with `value <= k / 100`, or 101 above 1),
//! after which every candidate tree is scored from cumulative counts. A
//! second-level split is only kept when it lowers the total log-loss by more
//! than `ln(rows)` nats, the BIC charge for one extra leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Design, LongTable};

pub const CUT_STEPS: usize = 100;
const BINS: usize = CUT_STEPS + 2;
const LAST: usize = BINS - 1;

fn cut_value(k: usize) -> f64 {
    k as f64 / CUT_STEPS as f64
}

fn bin(v: f64) -> usize {
    let mut k = (v * CUT_STEPS as f64).ceil().clamp(0.0, LAST as f64) as usize;
    while k > 0 && v <= cut_value(k - 1) {
        k -= 1;
    }
    while k <= CUT_STEPS && v > cut_value(k) {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Counts {
    n: u64,
    pos: u64,
}

impl Counts {
    fn sub(self, o: Counts) -> Counts {
        Counts { n: self.n - o.n, pos: self.pos - o.pos }
    }

    /// Total log-loss of predicting the empirical rate for these rows.
    fn loss(self) -> f64 {
        let term = |k: u64| if k == 0 { 0.0 } else { -(k as f64) * (k as f64 / self.n as f64).ln() };
        term(self.pos) + term(self.n - self.pos)
    }

    fn leaf(self) -> TreeNode {
        TreeNode::Leaf {
            rows: self.n as usize,
            positives: self.pos as usize,
            rate: if self.n == 0 { 0.0 } else { self.pos as f64 / self.n as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum TreeNode {
    Leaf { rows: usize, positives: usize, rate: f64 },
    /// `left` holds rows with `value <= cut`, `right` rows with `value > cut`.
    Split { feature: String, cut: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    fn collect_splits<'a>(&'a self, out: &mut Vec<(&'a str, f64)>) {
        if let TreeNode::Split { feature, cut, left, right } = self {
            out.push((feature, *cut));
            left.collect_splits(out);
            right.collect_splits(out);
        }
    }

    fn collect_leaves(&self, out: &mut Vec<f64>) {
        match self {
            TreeNode::Leaf { rate, .. } => out.push(*rate),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Leaf rate for a row given a feature lookup.
    pub fn predict(&self, value: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            TreeNode::Leaf { rate, .. } => *rate,
            TreeNode::Split { feature, cut, left, right } => {
                if value(feature) > *cut {
                    right.predict(value)
                } else {
                    left.predict(value)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFit {
    /// 1 or 2.
    pub depth: usize,
    pub root: TreeNode,
    /// Mean log-loss per row.
    pub log_loss: f64,
    pub total_log_loss: f64,
    pub rows: usize,
}

impl TreeFit {
    /// `(feature, cut)` pairs in pre-order.
    pub fn splits(&self) -> Vec<(&str, f64)> {
        let mut out = Vec::new();
        self.root.collect_splits(&mut out);
        out
    }

    pub fn cut_for(&self, feature: &str) -> Option<f64> {
        self.splits().into_iter().find(|(f, _)| *f == feature).map(|(_, c)| c)
    }

    pub fn leaf_rates(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }
}

/// Best way to treat one child region: stay a leaf or split once more.
#[derive(Clone, Copy)]
struct ChildChoice {
    score: f64,
    split: Option<(usize, usize)>,
}

struct Candidate {
    score: f64,
    splits: usize,
    feature: usize,
    cut: usize,
    children: Option<[ChildChoice; 2]>,
}

fn better(new: f64, old: f64) -> bool {
    new < old - 1e-9 * (1.0 + old.abs())
}

pub fn fit_tree(design: &Design, max_depth: usize) -> Result<TreeFit> {
    if !(1..=2).contains(&max_depth) {
        return Err(Error::invalid(format!("tree depth must be 1 or 2, got {max_depth}")));
    }
    let rows = design.rows();
    if rows == 0 {
        return Err(Error::invalid("tree fit needs a nonempty table"));
    }
    if design.names.is_empty() {
        return Err(Error::invalid("tree fit needs at least one candidate feature"));
    }
    let f_count = design.columns.len();
    let mut bins = Vec::with_capacity(f_count);
    for (name, col) in design.names.iter().zip(&design.columns) {
        if col.len() != rows {
            return Err(Error::invalid(format!("feature '{name}' has {} rows, expected {rows}", col.len())));
        }
        if col.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid(format!("feature '{name}' contains NaN")));
        }
        bins.push(col.iter().map(|&v| bin(v) as u8).collect::<Vec<u8>>());
    }
    let positive: Vec<bool> = design.outcome.iter().map(|&y| y > 0.5).collect();
    let total = Counts { n: rows as u64, pos: positive.iter().filter(|&&p| p).count() as u64 };

    // 1-D cumulative counts: cum1[f][k] = rows with bin_f <= k.
    let cum1: Vec<Vec<Counts>> = bins
        .iter()
        .map(|b| {
            let mut h = vec![Counts::default(); BINS];
            for (r, &k) in b.iter().enumerate() {
                h[k as usize].n += 1;
                h[k as usize].pos += positive[r] as u64;
            }
            cumulate(&mut h);
            h
        })
        .collect();

    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        let replace = match best {
            None => true,
            Some(b) => better(c.score, b.score),
        };
        if replace {
            *best = Some(c);
        }
    };

    for f in 0..f_count {
        for k in 0..=CUT_STEPS {
            let left = cum1[f][k];
            let score = left.loss() + total.sub(left).loss();
            consider(Candidate { score, splits: 1, feature: f, cut: k, children: None }, &mut best);
        }
    }

    if max_depth == 2 {
        let penalty = (rows as f64).ln();
        // cum2[f][g][a * BINS + b] = rows with bin_f <= a and bin_g <= b.
        let cum2: Vec<Vec<Vec<Counts>>> = (0..f_count)
            .map(|f| (0..f_count).map(|g| joint_cumulative(&bins[f], &bins[g], &positive)).collect())
            .collect();
        for f in 0..f_count {
            for k in 0..=CUT_STEPS {
                let left = cum1[f][k];
                let right = total.sub(left);
                let mut children = [
                    ChildChoice { score: left.loss(), split: None },
                    ChildChoice { score: right.loss(), split: None },
                ];
                for g in 0..f_count {
                    let c = &cum2[f][g];
                    for k2 in 0..=CUT_STEPS {
                        let ll = c[k * BINS + k2];
                        let lr = left.sub(ll);
                        let rl = c[LAST * BINS + k2].sub(ll);
                        let rr = right.sub(rl);
                        let split_left = ll.loss() + lr.loss() + penalty;
                        let split_right = rl.loss() + rr.loss() + penalty;
                        if better(split_left, children[0].score) {
                            children[0] = ChildChoice { score: split_left, split: Some((g, k2)) };
                        }
                        if better(split_right, children[1].score) {
                            children[1] = ChildChoice { score: split_right, split: Some((g, k2)) };
                        }
                    }
                }
                let extra = children.iter().filter(|c| c.split.is_some()).count();
                if extra > 0 {
                    let score = children[0].score + children[1].score;
                    consider(Candidate { score, splits: 1 + extra, feature: f, cut: k, children: Some(children) }, &mut best);
                }
            }
        }
    }

    let best = best.expect("at least one candidate");
    let root = build(design, &bins, &positive, &best);
    let total_log_loss = tree_loss(&root);
    Ok(TreeFit {
        depth: if best.splits > 1 { 2 } else { 1 },
        root,
        log_loss: total_log_loss / rows as f64,
        total_log_loss,
        rows,
    })
}

fn cumulate(h: &mut [Counts]) {
    for k in 1..h.len() {
        h[k].n += h[k - 1].n;
        h[k].pos += h[k - 1].pos;
    }
}

fn joint_cumulative(a: &[u8], b: &[u8], positive: &[bool]) -> Vec<Counts> {
    let mut h = vec![Counts::default(); BINS * BINS];
    for r in 0..a.len() {
        let cell = &mut h[a[r] as usize * BINS + b[r] as usize];
        cell.n += 1;
        cell.pos += positive[r] as u64;
    }
    for i in 0..BINS {
        cumulate(&mut h[i * BINS..(i + 1) * BINS]);
    }
    for i in 1..BINS {
        for j in 0..BINS {
            let prev = h[(i - 1) * BINS + j];
            let cell = &mut h[i * BINS + j];
            cell.n += prev.n;
            cell.pos += prev.pos;
        }
    }
    h
}

fn tree_loss(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf { rows, positives, .. } => Counts { n: *rows as u64, pos: *positives as u64 }.loss(),
        TreeNode::Split { left, right, .. } => tree_loss(left) + tree_loss(right),
    }
}

/// Materialize the winning candidate by routing rows through it.
fn build(design: &Design, bins: &[Vec<u8>], positive: &[bool], c: &Candidate) -> TreeNode {
    let route = |rows: &mut dyn Iterator<Item = usize>, f: usize, k: usize| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for row in rows {
            if bins[f][row] as usize > k {
                r.push(row)
            } else {
                l.push(row)
            }
        }
        (l, r)
    };
    let counts = |rows: &[usize]| Counts {
        n: rows.len() as u64,
        pos: rows.iter().filter(|&&r| positive[r]).count() as u64,
    };
    let (left, right) = route(&mut (0..design.rows()), c.feature, c.cut);
    let child = |rows: Vec<usize>, choice: Option<ChildChoice>| match choice.and_then(|ch| ch.split) {
        Some((g, k2)) => {
            let (l, r) = route(&mut rows.into_iter(), g, k2);
            TreeNode::Split {
                feature: design.names[g].clone(),
                cut: cut_value(k2),
                left: Box::new(counts(&l).leaf()),
                right: Box::new(counts(&r).leaf()),
            }
        }
        None => counts(&rows).leaf(),
    };
    let (lc, rc) = match c.children {
        Some([l, r]) => (Some(l), Some(r)),
        None => (None, None),
    };
    TreeNode::Split {
        feature: design.names[c.feature].clone(),
        cut: cut_value(c.cut),
        left: Box::new(child(left, lc)),
        right: Box::new(child(right, rc)),
    }
}

/// Fit a threshold tree predicting whether each point was chosen.
pub fn tree_fit(table: &LongTable, candidate_features: &[&str], max_depth: usize) -> Result<TreeFit> {
    if table.is_empty() {
        return Err(Error::invalid("tree fit needs a nonempty table"));
    }
    fit_tree(&table.design(candidate_features)?, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_matches_direct_comparison() {
        for v in [0.0, 1e-12, 0.07, 0.070000001, 0.29, 0.57, 0.99, 0.990001, 1.0, 1.2, -0.3] {
            let b = bin(v);
            for k in 0..=CUT_STEPS {
                assert_eq!(b > k, v > cut_value(k), "v={v} k={k}");
            }
        }
    }

    #[test]
    fn constant_outcome_degenerates_to_base_rate_entropy() {
        let design = Design {
            names: vec!["p".into()],
            columns: vec![(0..100).map(|i| i as f64 / 100.0).collect()],
            outcome: vec![0.0; 100],
        };
        let fit = fit_tree(&design, 1).unwrap();
        assert_eq!(fit.depth, 1);
        assert_eq!(fit.log_loss, 0.0);
        assert_eq!(fit.cut_for("p"), Some(0.0));
        assert!(fit.leaf_rates().iter().all(|&r| r == 0.0));

        // All ones, then a 25% base rate with an uninformative feature.
        let mut d = design.clone();
        d.outcome = vec![1.0; 100];
        assert_eq!(fit_tree(&d, 2).unwrap().log_loss, 0.0);
        d.columns = vec![vec![0.5; 100]];
        d.outcome = (0..100).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let fit = fit_tree(&d, 2).unwrap();
        let h = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((fit.log_loss - h).abs() < 1e-12);
        assert_eq!(fit.depth, 1);
    }

    #[test]
    fn exact_threshold_is_found() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let outcome = xs.iter().map(|&x| (x > 0.37) as u8 as f64).collect();
        let design = Design { names: vec!["x".into()], columns: vec![xs], outcome };
        let fit = fit_tree(&design, 2).unwrap();
        assert_eq!(fit.depth, 1);
        assert_eq!(fit.cut_for("x"), Some(0.37));
        assert_eq!(fit.log_loss, 0.0);
    }

    #[test]
    fn two_level_rule_is_found() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                let (x1, x2) = (i as f64 / 100.0 + 0.005, j as f64 / 100.0 + 0.005);
                a.push(x1);
                b.push(x2);
                y.push((x1 > 0.6 && x2 > 0.2) as u8 as f64);
            }
        }
        let design = Design { names: vec!["a".into(), "b".into()], columns: vec![a, b], outcome: y };
        let fit = fit_tree(&design, 2).unwrap();
        assert_eq!(fit.depth, 2);
        assert_eq!(fit.cut_for("a"), Some(0.6));
        assert_eq!(fit.cut_for("b"), Some(0.2));
        assert_eq!(fit.log_loss, 0.0);
        assert!(fit.log_loss <= fit_tree(&design, 1).unwrap().log_loss);
    }

    #[test]
    fn bad_inputs() {
        let d = Design { names: vec!["x".into()], columns: vec![vec![f64::NAN]], outcome: vec![1.0] };
        assert!(fit_tree(&d, 1).is_err());
        let d = Design { names: vec!["x".into()], columns: vec![vec![0.1]], outcome: vec![1.0] };
        assert!(fit_tree(&d, 3).is_err());
        assert!(fit_tree(&Design::default(), 1).is_err());
    }
}
