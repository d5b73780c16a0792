use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, ordered set of candidate inputs. A point's index is its identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl GridDomain {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("grid must contain at least one point"))?;
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::invalid(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("point {i} is not finite")));
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::invalid(format!("points {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { dim, points })
    }

    /// Evenly spaced axis `start, start + step, ..., stop`.
    pub fn axis(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::invalid("axis needs step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step).round() as usize + 1;
        Ok((0..n).map(|k| start + k as f64 * step).collect())
    }

    pub fn line(start: f64, stop: f64, step: f64) -> Result<Self> {
        Self::new(Self::axis(start, stop, step)?.into_iter().map(|x| vec![x]).collect())
    }

    /// Square lattice, row-major: index `i * n + j` is `(axis[i], axis[j])`.
    pub fn square(start: f64, stop: f64, step: f64) -> Result<Self> {
        let axis = Self::axis(start, stop, step)?;
        let points = axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
            .collect();
        Self::new(points)
    }

    /// `{0, 0.5, ..., 10}`.
    pub fn experiment1() -> Self {
        Self::line(0.0, 10.0, 0.5).expect("static grid")
    }

    /// `{0, 0.05, ..., 1}^2`.
    pub fn experiment2() -> Self {
        Self::square(0.0, 1.0, 0.05).expect("static grid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "grid index {index} out of range (grid has {} points)",
                self.len()
            )))
        }
    }

    pub fn squared_distance(&self, a: usize, b: usize) -> f64 {
        squared_distance(&self.points[a], &self.points[b])
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.squared_distance(a, b).sqrt()
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}
