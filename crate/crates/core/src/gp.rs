//! Exact Gaussian-process regression over a finite grid.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{squared_distance, GridDomain};
use crate::seed;

/// Diagonal jitter added to every factorized covariance.
pub const JITTER: f64 = 1e-10;

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Output scale, in units of the output.
    pub signal_sd: f64,
    /// Length scale, in units of the input.
    pub lengthscale: f64,
}

impl KernelParams {
    pub fn new(signal_sd: f64, lengthscale: f64) -> Result<Self> {
        let params = Self { signal_sd, lengthscale };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signal_sd > 0.0 && self.lengthscale > 0.0 && self.signal_sd.is_finite() && self.lengthscale.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "kernel needs signal_sd > 0 and lengthscale > 0, got ({}, {})",
                self.signal_sd, self.lengthscale
            )))
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_sd.powi(2) * (-squared_distance(a, b) / (2.0 * self.lengthscale.powi(2))).exp()
    }
}

/// `K[i][j] = k(a_i, b_j)`.
pub fn kernel_matrix(params: &KernelParams, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    params.validate()?;
    let dim = a.first().or(b.first()).map(Vec::len).unwrap_or(0);
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != dim) {
        return Err(Error::invalid(format!(
            "kernel inputs must share dimension {dim}, found {}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| params.eval(&a[i], &b[j])))
}

/// Noisy observations at grid indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub inputs: Vec<usize>,
    pub outputs: Vec<f64>,
    pub noise_var: f64,
}

impl ObservationSet {
    pub fn new(noise_var: f64) -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new(), noise_var }
    }

    pub fn from_pairs(noise_var: f64, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let (inputs, outputs) = pairs.into_iter().unzip();
        Self { inputs, outputs, noise_var }
    }

    pub fn push(&mut self, index: usize, y: f64) {
        self.inputs.push(index);
        self.outputs.push(y);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Copy with every output shifted by `-offset`.
    pub fn centered(&self, offset: f64) -> Self {
        Self {
            inputs: self.inputs.clone(),
            outputs: self.outputs.iter().map(|y| y - offset).collect(),
            noise_var: self.noise_var,
        }
    }
}

/// Posterior mean, marginal standard deviation and full covariance over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl GpPosterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Same posterior with the mean shifted by a constant prior mean.
    pub fn shifted(mut self, offset: f64) -> Self {
        if offset != 0.0 {
            self.mean.iter_mut().for_each(|m| *m += offset);
        }
        self
    }

    fn from_cov(mean: Vec<f64>, mut cov: DMatrix<f64>) -> Self {
        let n = cov.nrows();
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        let sd = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
        Self { mean, sd, cov }
    }
}

/// Zero-mean GP prior over a fixed grid, with the prior covariance cached.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    prior_cov: DMatrix<f64>,
}

impl GpModel {
    pub fn new(params: KernelParams, domain: &GridDomain) -> Result<Self> {
        let prior_cov = kernel_matrix(&params, domain.points(), domain.points())?;
        Ok(Self { params, prior_cov })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.prior_cov.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn posterior(&self, obs: &ObservationSet) -> Result<GpPosterior> {
        let n = self.len();
        let t = obs.len();
        if obs.outputs.len() != t {
            return Err(Error::invalid("observation inputs and outputs differ in length"));
        }
        if !(obs.noise_var >= 0.0) || !obs.noise_var.is_finite() {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {}", obs.noise_var)));
        }
        if let Some(&bad) = obs.inputs.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("observation index {bad} outside grid of {n} points")));
        }
        if obs.outputs.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("observation outputs must be finite"));
        }
        if t == 0 {
            return Ok(GpPosterior::from_cov(vec![0.0; n], self.prior_cov.clone()));
        }

        let noise = obs.noise_var + JITTER;
        let gram = DMatrix::from_fn(t, t, |a, b| {
            let k = self.prior_cov[(obs.inputs[a], obs.inputs[b])];
            if a == b {
                k + noise
            } else {
                k
            }
        });
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::numerical(format!("observation Gram matrix ({t}x{t}) is not positive definite")))?;
        let cross = DMatrix::from_fn(t, n, |a, j| self.prior_cov[(obs.inputs[a], j)]);
        let alpha = chol.solve(&DVector::from_column_slice(&obs.outputs));
        let mean = cross.tr_mul(&alpha).iter().copied().collect();
        let v = chol
            .l()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::numerical("triangular solve failed"))?;
        let mut cov = self.prior_cov.clone();
        cov.gemm_tr(-1.0, &v, &v, 1.0);
        Ok(GpPosterior::from_cov(mean, cov))
    }
}

/// Posterior of a zero-mean GP with squared-exponential kernel.
pub fn posterior(params: &KernelParams, domain: &GridDomain, obs: &ObservationSet) -> Result<GpPosterior> {
    GpModel::new(*params, domain)?.posterior(obs)
}

/// Draws latent functions from the prior over a grid; the factorization is
/// computed once.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(params: &KernelParams, domain: &GridDomain) -> Result<Self> {
        let mut k = kernel_matrix(params, domain.points(), domain.points())?;
        for i in 0..k.nrows() {
            k[(i, i)] += JITTER;
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(k)
            .ok_or_else(|| Error::numerical("prior covariance is not positive definite after jitter"))?;
        Ok(Self { factor: chol.unpack() })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.len(), (0..self.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.factor * z).iter().copied().collect()
    }

    pub fn sample_seeded(&self, seed: u64) -> Vec<f64> {
        self.sample(&mut seed::rng(seed))
    }
}

/// One draw from the GP prior over the grid, deterministic in `seed`.
pub fn sample_function(params: &KernelParams, domain: &GridDomain, seed: u64) -> Result<Vec<f64>> {
    Ok(GpSampler::new(params, domain)?.sample_seeded(seed))
}
