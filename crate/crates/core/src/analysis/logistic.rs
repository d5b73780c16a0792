//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, with standard errors from the inverse observed information.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Design, LongTable};

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-8;
/// A coefficient this large means fitted probabilities within 1e-13 of 0 or 1.
const DIVERGED: f64 = 30.0;
/// Smallest admissible `min / max` ratio of squared Cholesky pivots.
const PIVOT_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// `"intercept"` first, then one name per slope.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub rows: usize,
    /// Estimated with the Firth bias-reduction penalty.
    #[serde(default)]
    pub penalized: bool,
}

impl LogisticFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.standard_errors[i])
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

struct Pass {
    information: DMatrix<f64>,
    score: DVector<f64>,
    log_likelihood: f64,
    max_residual: f64,
}

/// One sweep over the rows: information matrix `X'WX`, score `X'(y - p)`,
/// and log-likelihood at `beta`. Column 0 of the design is the intercept.
fn pass(columns: &[&[f64]], y: &[f64], beta: &[f64]) -> Pass {
    let p = beta.len();
    let mut information = DMatrix::zeros(p, p);
    let mut score = DVector::zeros(p);
    let mut log_likelihood = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut x = vec![1.0; p];
    for row in 0..y.len() {
        for j in 1..p {
            x[j] = columns[j - 1][row];
        }
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = sigmoid(eta);
        let w = mu * (1.0 - mu);
        let r = y[row] - mu;
        log_likelihood += y[row] * eta - softplus(eta);
        max_residual = max_residual.max(r.abs());
        for a in 0..p {
            score[a] += x[a] * r;
            let wa = w * x[a];
            for b in 0..=a {
                information[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            information[(b, a)] = information[(a, b)];
        }
    }
    Pass { information, score, log_likelihood, max_residual }
}

fn factor(information: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let chol = Cholesky::new(information)?;
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|d| d * d).collect();
    let max = pivots.iter().copied().fold(0.0, f64::max);
    let min = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    (max > 0.0 && min / max > PIVOT_RATIO).then_some(chol)
}

/// Fit `P(y = 1) = sigmoid(b0 + sum b_j x_j)` to a design.
pub fn fit_logistic(design: &Design) -> Result<LogisticFit> {
    check_design(design)?;
    let y = &design.outcome;
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::invalid("logistic fit needs at least one positive and one negative outcome"));
    }
    let columns: Vec<&[f64]> = design.columns.iter().map(Vec::as_slice).collect();
    let p = columns.len() + 1;
    let mut beta = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let step = pass(&columns, y, &beta);
        if step.max_residual < 1e-6 {
            return Err(Error::Separation("fitted probabilities reproduce every outcome".into()));
        }
        let Some(chol) = factor(step.information) else {
            return Err(if it == 1 {
                Error::Collinearity("information matrix is singular at the starting point".into())
            } else {
                Error::Separation(format!("information matrix degenerated at iteration {it}"))
            });
        };
        let delta = chol.solve(&step.score);
        beta.iter_mut().zip(delta.iter()).for_each(|(b, d)| *b += d);
        if beta.iter().any(|b| !b.is_finite() || b.abs() > DIVERGED) {
            return Err(Error::Separation(format!("coefficients diverged at iteration {it}")));
        }
        if delta.amax() < TOLERANCE {
            converged = true;
            break;
        }
    }

    let last = pass(&columns, y, &beta);
    let standard_errors = match factor(last.information) {
        Some(chol) => chol.inverse().diagonal().iter().map(|v| v.sqrt()).collect(),
        None => vec![f64::NAN; p],
    };
    let mut names = vec!["intercept".to_string()];
    names.extend(design.names.iter().cloned());
    Ok(LogisticFit {
        names,
        coefficients: beta,
        standard_errors,
        converged,
        iterations,
        log_likelihood: last.log_likelihood,
        rows: y.len(),
        penalized: false,
    })
}

fn check_design(design: &Design) -> Result<()> {
    let y = &design.outcome;
    if design.columns.iter().any(|c| c.len() != y.len()) {
        return Err(Error::invalid("design columns and outcome differ in length"));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic outcome must be 0 or 1"));
    }
    Ok(())
}

struct FirthPass {
    chol: Cholesky<f64, nalgebra::Dyn>,
    score: DVector<f64>,
    log_likelihood: f64,
    penalized: f64,
}

fn firth_pass(columns: &[&[f64]], y: &[f64], beta: &[f64]) -> Option<FirthPass> {
    let base = pass(columns, y, beta);
    let chol = factor(base.information)?;
    let inverse = chol.inverse();
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let p = beta.len();
    let mut score = DVector::zeros(p);
    let mut x = DVector::from_element(p, 1.0);
    for row in 0..y.len() {
        for j in 1..p {
            x[j] = columns[j - 1][row];
        }
        let mu = sigmoid(x.iter().zip(beta).map(|(a, b)| a * b).sum());
        let h = mu * (1.0 - mu) * (&inverse * &x).dot(&x);
        score.axpy(y[row] - mu + h * (0.5 - mu), &x, 1.0);
    }
    Some(FirthPass {
        chol,
        score,
        log_likelihood: base.log_likelihood,
        penalized: base.log_likelihood + 0.5 * log_det,
    })
}

/// Firth-penalized fit: maximizes `l(b) + log|I(b)| / 2`. Estimates stay
/// finite under complete or quasi-complete separation.
pub fn fit_logistic_firth(design: &Design) -> Result<LogisticFit> {
    check_design(design)?;
    let y = &design.outcome;
    if y.is_empty() {
        return Err(Error::invalid("logistic fit needs at least one row"));
    }
    let columns: Vec<&[f64]> = design.columns.iter().map(Vec::as_slice).collect();
    let p = columns.len() + 1;
    let mut beta = vec![0.0; p];
    let mut current = firth_pass(&columns, y, &beta)
        .ok_or_else(|| Error::Collinearity("information matrix is singular at the starting point".into()))?;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let mut delta = current.chol.solve(&current.score);
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
            if let Some(candidate) = firth_pass(&columns, y, &trial) {
                if candidate.penalized >= current.penalized - 1e-10 * current.penalized.abs().max(1.0) {
                    next = Some((trial, candidate));
                    break;
                }
            }
            delta /= 2.0;
        }
        let Some((trial, candidate)) = next else {
            return Err(Error::NumericalFailure(format!("penalized step failed at iteration {it}")));
        };
        beta = trial;
        current = candidate;
        if delta.amax() < TOLERANCE {
            converged = true;
            break;
        }
    }
    let standard_errors = current.chol.inverse().diagonal().iter().map(|v| v.sqrt()).collect();
    let mut names = vec!["intercept".to_string()];
    names.extend(design.names.iter().cloned());
    Ok(LogisticFit {
        names,
        coefficients: beta,
        standard_errors,
        converged,
        iterations,
        log_likelihood: current.log_likelihood,
        rows: y.len(),
        penalized: true,
    })
}

/// Logistic regression of "was this point chosen" on the named features of a
/// long table, optionally with one dummy intercept per subject after the first.
pub fn logistic_fit(table: &LongTable, features: &[&str], subject_dummies: bool) -> Result<LogisticFit> {
    fit_logistic(&logistic_design(table, features, subject_dummies)?)
}

/// [`logistic_fit`] with the Firth penalty.
pub fn logistic_fit_firth(table: &LongTable, features: &[&str], subject_dummies: bool) -> Result<LogisticFit> {
    fit_logistic_firth(&logistic_design(table, features, subject_dummies)?)
}

fn logistic_design(table: &LongTable, features: &[&str], subject_dummies: bool) -> Result<Design> {
    let mut design = table.design(features)?;
    if subject_dummies {
        let mut subjects: Vec<&str> = table.trials.iter().map(|t| t.subject.as_str()).collect();
        subjects.sort_unstable();
        subjects.dedup();
        for s in subjects.iter().skip(1) {
            design.names.push(format!("subject[{s}]"));
            design
                .columns
                .push((0..table.len()).map(|r| if table.subject_of(r) == *s { 1.0 } else { 0.0 }).collect());
        }
    }
    Ok(design)
}

/// Features that cannot be estimated alongside the others: constant columns,
/// and columns identical to an earlier feature. Returns `(feature, reason)`.
pub fn aliased_features(table: &LongTable, features: &[&str]) -> Result<Vec<(String, String)>> {
    let mut kept: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut aliased = Vec::new();
    for &name in features {
        let column = table.column(name)?;
        if column.windows(2).all(|w| w[0] == w[1]) {
            let value = column.first().copied().unwrap_or(f64::NAN);
            aliased.push((name.to_string(), format!("constant at {value}")));
        } else if let Some((other, _)) = kept.iter().find(|(_, c)| *c == column) {
            aliased.push((name.to_string(), format!("identical to {other}")));
        } else {
            kept.push((name, column));
        }
    }
    Ok(aliased)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn simulated(beta: &[f64], n: usize, seed_value: u64) -> Design {
        let mut rng = seed::rng(seed_value);
        let mut columns = vec![Vec::with_capacity(n); beta.len() - 1];
        let mut outcome = Vec::with_capacity(n);
        for _ in 0..n {
            let mut eta = beta[0];
            for (j, col) in columns.iter_mut().enumerate() {
                let x: f64 = rng.random_range(-1.0..1.0);
                eta += beta[j + 1] * x;
                col.push(x);
            }
            outcome.push(if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 });
        }
        Design { names: (1..beta.len()).map(|j| format!("x{j}")).collect(), columns, outcome }
    }

    #[test]
    fn recovers_planted_continuous_coefficients() {
        let fit = fit_logistic(&simulated(&[-1.0, 2.0, -0.5], 20_000, 3)).unwrap();
        assert!(fit.converged);
        for (got, want) in fit.coefficients.iter().zip([-1.0, 2.0, -0.5]) {
            assert!((got - want).abs() < 0.1, "{got} vs {want}");
        }
        assert!(fit.standard_errors.iter().all(|s| s.is_finite() && *s > 0.0));
        assert!(fit.log_likelihood < 0.0);
    }

    #[test]
    fn intercept_only_matches_base_rate() {
        let outcome: Vec<f64> = (0..400).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logistic(&Design { names: vec![], columns: vec![], outcome }).unwrap();
        assert!((fit.coefficients[0] - (0.25f64 / 0.75).ln()).abs() < 1e-10);
        // SE of a logit from n Bernoulli(p) draws: 1 / sqrt(n p (1 - p)).
        assert!((fit.standard_errors[0] - 1.0 / (400.0f64 * 0.25 * 0.75).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_column_is_collinear() {
        let mut d = simulated(&[-1.0, 1.0], 500, 1);
        d.names.push("zero".into());
        d.columns.push(vec![0.0; 500]);
        assert!(matches!(fit_logistic(&d), Err(Error::Collinearity(_))));
    }

    #[test]
    fn duplicated_column_is_collinear() {
        let mut d = simulated(&[-1.0, 1.0], 500, 2);
        d.names.push("copy".into());
        d.columns.push(d.columns[0].clone());
        assert!(matches!(fit_logistic(&d), Err(Error::Collinearity(_))));
    }

    fn two_by_two(cells: [[usize; 2]; 2]) -> Design {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (xv, row) in cells.iter().enumerate() {
            for (yv, &n) in row.iter().enumerate() {
                x.extend(std::iter::repeat_n(xv as f64, n));
                y.extend(std::iter::repeat_n(yv as f64, n));
            }
        }
        Design { names: vec!["x".into()], columns: vec![x], outcome: y }
    }

    #[test]
    fn firth_on_two_by_two_adds_half_to_each_cell() {
        for cells in [[[40, 0], [25, 7]], [[13, 5], [4, 9]], [[30, 2], [0, 6]]] {
            let fit = fit_logistic_firth(&two_by_two(cells)).unwrap();
            let c = |a: usize, b: usize| cells[a][b] as f64 + 0.5;
            let b0 = (c(0, 1) / c(0, 0)).ln();
            let b1 = (c(1, 1) * c(0, 0) / (c(1, 0) * c(0, 1))).ln();
            assert!(fit.converged && fit.penalized);
            assert!((fit.coefficients[0] - b0).abs() < 1e-7, "{cells:?} {:?}", fit.coefficients);
            assert!((fit.coefficients[1] - b1).abs() < 1e-7, "{cells:?} {:?}", fit.coefficients);
        }
        assert!(matches!(fit_logistic(&two_by_two([[40, 0], [25, 7]])), Err(Error::Separation(_))));
    }

    #[test]
    fn firth_matches_plain_fit_on_large_samples() {
        let d = simulated(&[-0.5, 1.0, -0.7], 50_000, 21);
        let plain = fit_logistic(&d).unwrap();
        let firth = fit_logistic_firth(&d).unwrap();
        for (a, b) in plain.coefficients.iter().zip(&firth.coefficients) {
            assert!((a - b).abs() < 1e-3, "{a} {b}");
        }
    }

    #[test]
    fn aliased_features_are_named() {
        let table = LongTable {
            safe: vec![true, true, false, false],
            maximizer: vec![true, true, false, false],
            expander: vec![false; 4],
            p_safe: vec![0.9, 0.8, 0.1, 0.2],
            ..LongTable::default()
        };
        let aliased = aliased_features(&table, &["safe", "maximizer", "expander", "p_safe"]).unwrap();
        assert_eq!(
            aliased,
            vec![
                ("maximizer".to_string(), "identical to safe".to_string()),
                ("expander".to_string(), "constant at 0".to_string()),
            ]
        );
        assert!(aliased_features(&table, &["nope"]).is_err());
    }

    #[test]
    fn perfect_predictor_is_separation() {
        let outcome: Vec<f64> = (0..200).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let d = Design { names: vec!["x".into()], columns: vec![outcome.clone()], outcome };
        assert!(matches!(fit_logistic(&d), Err(Error::Separation(_))));
    }

    #[test]
    fn degenerate_outcomes_are_rejected() {
        let d = Design { names: vec![], columns: vec![], outcome: vec![0.0; 10] };
        assert!(matches!(fit_logistic(&d), Err(Error::InvalidInput(_))));
    }
}
