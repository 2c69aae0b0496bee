//! The LMM PF-SMC sampler: a Liu-West style auxiliary particle filter whose
//! innovation variance comes from the integrator's local error estimates.
//!
//! Parameters are carried in unconstrained coordinates (`log θ` for positive
//! parameters); the trace reports both those and natural-unit moments.

mod filter;
mod ops;

pub use filter::{initialize, pf_step, run, RunOutput, StepOutput};
pub use ops::{
    effective_sample_size, fitness_weights, innovate, log_likelihood, log_sum_exp, normalize_log_weights, proliferate,
    proliferate_one, resample_multinomial, shrink, update_weights, weighted_mean,
};

use thiserror::Error;

use crate::exec::ExecError;
use crate::linalg::{DenseMatrix, LinalgError};
use crate::lmm::{Integrator, LmmError};
use crate::models::OdeModel;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("every particle has zero likelihood at observation {step}")]
    TotalDegeneracy { step: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("propagation failed: {0}")]
    Propagation(LmmError),
}

/// Gaussian prior on one parameter in its unconstrained coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPrior {
    pub mean: f64,
    pub std: f64,
}

/// Independent Gaussian initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePrior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StatePrior {
    pub fn fixed(x0: Vec<f64>) -> Self {
        let std = vec![0.0; x0.len()];
        Self { mean: x0, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfConfig {
    pub particles: usize,
    /// Shrinkage factor `a`; proliferation variance is scaled by `1 - a²`.
    pub shrink_a: f64,
    pub integrator: Integrator,
    pub seed: u64,
    pub prior: Vec<ParamPrior>,
    pub x0_prior: StatePrior,
}

impl PfConfig {
    pub fn validate(&self, model: &dyn OdeModel) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if self.particles == 0 {
            return bad("at least one particle is required".into());
        }
        if u32::try_from(self.particles).is_err() {
            return bad(format!("too many particles: {}", self.particles));
        }
        if !(self.shrink_a > 0.0 && self.shrink_a < 1.0) {
            return bad(format!("shrinkage factor must lie in (0, 1), got {}", self.shrink_a));
        }
        if self.prior.len() != model.param_dim() {
            return bad(format!("{} prior entries for {} parameters", self.prior.len(), model.param_dim()));
        }
        if self.prior.iter().any(|p| !p.mean.is_finite() || !(p.std >= 0.0) || !p.std.is_finite()) {
            return bad("prior means must be finite and standard deviations non-negative".into());
        }
        let x0 = &self.x0_prior;
        if x0.mean.len() != model.dim() || x0.std.len() != model.dim() {
            return bad(format!("initial-state prior must have {} components", model.dim()));
        }
        if x0.mean.iter().any(|v| !v.is_finite()) || x0.std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("initial-state prior must be finite with non-negative spreads".into());
        }
        Ok(())
    }
}

/// Which state components are observed, with per-component noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    indices: Vec<usize>,
    sigma: Vec<f64>,
}

impl ObservationModel {
    pub fn new(indices: Vec<usize>, sigma: Vec<f64>, dim: usize) -> Result<Self, SamplerError> {
        if indices.is_empty() {
            return Err(SamplerError::Config("no observed components".into()));
        }
        if sigma.len() != indices.len() {
            return Err(SamplerError::Config(format!(
                "{} noise levels for {} observations",
                sigma.len(),
                indices.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(SamplerError::Config(format!("noise standard deviation must be positive, got {s}")));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(SamplerError::Config("observation indices must be distinct".into()));
        }
        if let Some(i) = indices.iter().find(|i| **i >= dim) {
            return Err(SamplerError::Config(format!("observation index {i} outside state of size {dim}")));
        }
        Ok(Self { indices, sigma })
    }

    /// Same noise level for every observed component.
    pub fn scalar(indices: Vec<usize>, sigma: f64, dim: usize) -> Result<Self, SamplerError> {
        let s = vec![sigma; indices.len()];
        Self::new(indices, s, dim)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Observation sequence `y_1, ..., y_T` at increasing times after `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub t0: f64,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self, obs: &ObservationModel) -> Result<(), SamplerError> {
        if self.times.len() != self.values.len() {
            return Err(SamplerError::Config(format!(
                "{} times for {} observation rows",
                self.times.len(),
                self.values.len()
            )));
        }
        let mut prev = self.t0;
        for (t, y) in self.times.iter().zip(&self.values) {
            if !(*t > prev) {
                return Err(SamplerError::Config(format!("observation times must increase past {prev}, got {t}")));
            }
            if y.len() != obs.len() {
                return Err(SamplerError::Config(format!(
                    "observation row has {} entries, expected {}",
                    y.len(),
                    obs.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(SamplerError::Config(format!("non-finite observation at t = {t}")));
            }
            prev = *t;
        }
        Ok(())
    }

    /// `(t_{j-1}, t_j)` for observation `j` (1-based).
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let start = if j == 1 { self.t0 } else { self.times[j - 2] };
        (start, self.times[j - 1])
    }
}

/// Particle states, unconstrained parameters and normalised log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub x: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub logw: Vec<f64>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.logw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logw.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.logw.iter().map(|l| l.exp()).collect()
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.logw)
    }
}

/// Posterior summary after observation `j` (row 0 is the prior ensemble).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub j: usize,
    pub t: f64,
    /// Weighted mean and variance of the parameters in natural units.
    pub theta_mean: Vec<f64>,
    pub theta_var: Vec<f64>,
    /// Weighted mean and covariance in the unconstrained coordinates.
    pub log_mean: Vec<f64>,
    pub log_cov: DenseMatrix,
    pub state_mean: Vec<f64>,
    pub ess: f64,
    /// Particles whose propagation failed during this step.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTrace {
    pub param_names: Vec<String>,
    pub rows: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl PosteriorTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("a trace always has the initial row")
    }
}
