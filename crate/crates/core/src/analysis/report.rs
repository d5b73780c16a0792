//! Plain-text and CSV renderings of analysis results.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;

use super::{DistanceSummary, LogisticFit, TreeFit, TreeNode};

/// One row per (group, term). Groups are usually conditions.
pub fn logistic_csv<W: Write>(fits: &[(&str, &LogisticFit)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "term", "estimate", "std_error", "z", "rows", "converged", "method"])?;
    for (group, fit) in fits {
        for ((name, b), se) in fit.names.iter().zip(&fit.coefficients).zip(&fit.standard_errors) {
            w.write_record([
                group.to_string(),
                name.clone(),
                b.to_string(),
                se.to_string(),
                (b / se).to_string(),
                fit.rows.to_string(),
                fit.converged.to_string(),
                method(fit).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn method(fit: &LogisticFit) -> &'static str {
    if fit.penalized {
        "firth"
    } else {
        "ml"
    }
}

pub fn logistic_text(fit: &LogisticFit) -> String {
    let mut s = String::new();
    let kind = if fit.penalized { "Firth-penalized logistic regression" } else { "logistic regression" };
    let _ = writeln!(s, "{kind}, {} rows", fit.rows);
    let _ = writeln!(
        s,
        "converged: {} after {} iterations, log-likelihood {:.4}",
        fit.converged, fit.iterations, fit.log_likelihood
    );
    let _ = writeln!(s, "{:<24} {:>10} {:>10} {:>8}", "term", "b", "SE(b)", "z");
    for ((name, b), se) in fit.names.iter().zip(&fit.coefficients).zip(&fit.standard_errors) {
        let _ = writeln!(s, "{name:<24} {b:>10.4} {se:>10.4} {:>8.2}", b / se);
    }
    s
}

fn visit<'a>(node: &'a TreeNode, path: String, out: &mut Vec<(String, &'a TreeNode)>) {
    out.push((path.clone(), node));
    if let TreeNode::Split { left, right, .. } = node {
        visit(left, format!("{path}L"), out);
        visit(right, format!("{path}R"), out);
    }
}

/// One row per node; `path` is `root`, then L/R steps (`L` = at or below the cut).
pub fn tree_csv<W: Write>(fits: &[(&str, &TreeFit)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "path", "kind", "feature", "cut", "rows", "positives", "rate"])?;
    for (group, fit) in fits {
        let mut nodes = Vec::new();
        visit(&fit.root, String::new(), &mut nodes);
        for (path, node) in nodes {
            let path = if path.is_empty() { "root".to_string() } else { path };
            let fields: [String; 6] = match node {
                TreeNode::Split { feature, cut, .. } => {
                    ["split".into(), feature.clone(), format!("{cut:.2}"), String::new(), String::new(), String::new()]
                }
                TreeNode::Leaf { rows, positives, rate } => {
                    ["leaf".into(), String::new(), String::new(), rows.to_string(), positives.to_string(), rate.to_string()]
                }
            };
            let mut record = vec![group.to_string(), path];
            record.extend(fields);
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn render(node: &TreeNode, depth: usize, s: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        TreeNode::Leaf { rows, positives, rate } => {
            let _ = writeln!(s, "{pad}leaf: rate {rate:.4} ({positives}/{rows})");
        }
        TreeNode::Split { feature, cut, left, right } => {
            let _ = writeln!(s, "{pad}{feature} > {cut:.2}:");
            render(right, depth + 1, s);
            let _ = writeln!(s, "{pad}{feature} <= {cut:.2}:");
            render(left, depth + 1, s);
        }
    }
}

pub fn tree_text(fit: &TreeFit) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "threshold tree, depth {}, {} rows, log-loss {:.6} per row ({:.3} total)",
        fit.depth, fit.rows, fit.log_loss, fit.total_log_loss
    );
    render(&fit.root, 0, &mut s);
    s
}

pub fn distance_csv<W: Write>(summaries: &[DistanceSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "distance", "count", "empirical", "random_reference"])?;
    for s in summaries {
        for b in &s.bins {
            w.write_record([
                s.condition.as_str().to_string(),
                b.distance.to_string(),
                b.count.to_string(),
                b.empirical.to_string(),
                b.reference.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn distance_text(summaries: &[DistanceSummary]) -> String {
    let mut s = String::from("distance from start to chosen point\n");
    for d in summaries {
        let _ = writeln!(
            s,
            "{:<8} choices {:>7}  mean {:.4}  random reference {:.4}  total variation {:.4}",
            d.condition.as_str(),
            d.choices,
            d.mean,
            d.reference_mean,
            d.total_variation()
        );
    }
    s
}
