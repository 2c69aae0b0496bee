//! The two benchmark problems: a three-compartment metabolic chain observed
//! in full, and a periodic advection-diffusion field observed at a few
//! fixed grid points.

use std::fmt;

use pfsmc::models::{gaussian_plume_ic, AdvDiffModel, MetabolicModel, OdeModel, Transform};
use pfsmc::rng::{Purpose, RngStream};
use pfsmc::sampler::{ParamPrior, StatePrior};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Metabolic,
    Advdiff,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::Metabolic => "metabolic",
            Problem::Advdiff => "advdiff",
        })
    }
}

pub const METABOLIC_TRUTH: [f64; 4] = [2.0, 0.5, 1.0, 0.8];
pub const METABOLIC_X0: [f64; 3] = [0.5, 0.5, 1.0];
pub const ADVDIFF_TRUTH: [f64; 5] = [9.0, 4.0, 6.0, 2.5, -1.5];
pub const DEFAULT_GRID: usize = 10;
pub const ADVDIFF_OBSERVED: usize = 20;

/// Relative noise level on each metabolic component, as a fraction of the
/// component's largest value over the observation window.
pub const METABOLIC_NOISE: f64 = 0.05;
/// Advection-diffusion noise is the largest observed initial value over this.
pub const ADVDIFF_NOISE_DIVISOR: f64 = 50.0;
pub const MIN_SIGMA: f64 = 1e-12;

impl Problem {
    /// The grid parameter matters only for advection-diffusion.
    pub fn grid(self, n: usize) -> Option<usize> {
        match self {
            Problem::Metabolic => None,
            Problem::Advdiff => Some(n),
        }
    }

    pub fn model(self, n: usize) -> Result<Box<dyn OdeModel>, BenchError> {
        Ok(match self {
            Problem::Metabolic => Box::new(MetabolicModel::default()),
            Problem::Advdiff => Box::new(AdvDiffModel::new(n).map_err(|e| BenchError::Config(e.to_string()))?),
        })
    }

    pub fn truth(self) -> Vec<f64> {
        match self {
            Problem::Metabolic => METABOLIC_TRUTH.to_vec(),
            Problem::Advdiff => ADVDIFF_TRUTH.to_vec(),
        }
    }

    pub fn initial_state(self, n: usize) -> Result<Vec<f64>, BenchError> {
        match self {
            Problem::Metabolic => Ok(METABOLIC_X0.to_vec()),
            Problem::Advdiff => gaussian_plume_ic(n).map_err(|e| BenchError::Config(e.to_string())),
        }
    }

    pub fn start_time(self) -> f64 {
        0.0
    }

    /// Fifty equispaced times on (0, 10] or the integers 1 to 30.
    pub fn observation_times(self) -> Vec<f64> {
        match self {
            Problem::Metabolic => (1..=50).map(|k| 0.2 * k as f64).collect(),
            Problem::Advdiff => (1..=30).map(f64::from).collect(),
        }
    }

    /// Observed state components. The advection-diffusion locations are
    /// drawn without replacement from stream `(0, 0, init)` of `seed`.
    pub fn observed_indices(self, dim: usize, seed: u64) -> Vec<usize> {
        match self {
            Problem::Metabolic => (0..dim).collect(),
            Problem::Advdiff => {
                let mut rng = RngStream::new(seed, 0, 0, Purpose::Init);
                let mut pool: Vec<usize> = (0..dim).collect();
                let k = ADVDIFF_OBSERVED.min(dim);
                for i in 0..k {
                    let j = i + ((rng.uniform() * (dim - i) as f64) as usize).min(dim - i - 1);
                    pool.swap(i, j);
                }
                pool.truncate(k);
                pool
            }
        }
    }

    /// Prior on the unconstrained parameters. Neither prior is centred on
    /// the data-generating values.
    pub fn default_prior(self) -> Vec<ParamPrior> {
        let lognormal = |median: f64| ParamPrior { mean: median.ln(), std: 0.5 };
        match self {
            Problem::Metabolic => [1.5, 0.7, 1.5, 0.5].into_iter().map(lognormal).collect(),
            Problem::Advdiff => vec![
                lognormal(6.0),
                lognormal(6.0),
                ParamPrior { mean: 3.0, std: 3.0 },
                ParamPrior { mean: 0.0, std: 2.0 },
                ParamPrior { mean: 0.0, std: 2.0 },
            ],
        }
    }

    /// The metabolic initial state is uncertain; the plume is known.
    pub fn default_state_prior(self, x0: Vec<f64>) -> StatePrior {
        match self {
            Problem::Metabolic => {
                let std = vec![0.02; x0.len()];
                StatePrior { mean: x0, std }
            }
            Problem::Advdiff => StatePrior::fixed(x0),
        }
    }
}

/// Checks a parameter vector against the model's parameter list.
pub fn check_truth(model: &dyn OdeModel, truth: &[f64]) -> Result<(), BenchError> {
    if truth.len() != model.param_dim() {
        return Err(BenchError::Config(format!(
            "{} parameter values given, model has {}",
            truth.len(),
            model.param_dim()
        )));
    }
    for (spec, v) in model.params().iter().zip(truth) {
        if !v.is_finite() || (spec.transform == Transform::Log && *v <= 0.0) {
            return Err(BenchError::Config(format!("invalid value {v} for parameter {}", spec.name)));
        }
    }
    Ok(())
}

pub fn check_sigma(sigma: f64) -> Result<(), BenchError> {
    if sigma.is_finite() && sigma >= MIN_SIGMA {
        Ok(())
    } else {
        Err(BenchError::Config(format!("noise standard deviation must be at least {MIN_SIGMA:e}, got {sigma:e}")))
    }
}
