//! Fixed-step linear multistep integrators with local-error estimates.
//!
//! Every interval is integrated from a fresh history, ramping the order up
//! from one, so a propagation is a pure function of `(x0, θ, h)`. The
//! per-step error estimates are squared and summed per component to give
//! the diagonal innovation variance.

mod adaptive;
mod batched;
mod history;
mod propagate;
mod scheme;
mod step;

pub use adaptive::{adaptive_bdf_interval, AdaptiveOptions};
pub use batched::{batched_implicit_step, propagate_interval_batched};
pub use history::{StepHistory, HISTORY_CAPACITY};
pub use propagate::{
    propagate_from_history, propagate_interval, propagate_interval_with, step_count, PropagationResult,
};
pub use scheme::{scheme_coefficients, Family, LmmScheme};
pub use step::{explicit_step, implicit_step, lte_estimate, ErrorReference, NewtonOptions, NewtonSolve};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::models::{self, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmmError {
    #[error("unsupported order {0}; orders 1 to 3 are available")]
    UnsupportedOrder(usize),
    #[error("invalid integrator configuration: {0}")]
    Config(String),
    #[error("particle invalid: {0}")]
    ParticleInvalid(String),
    #[error("Newton iteration did not converge in {iterations} iterations")]
    NewtonDivergence { iterations: usize, last_iterate: Vec<f64> },
    #[error("singular Newton iteration matrix")]
    Singular,
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StiffnessFailure { t: f64, h: f64 },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Linalg(LinalgError),
}

impl LmmError {
    /// Failures that invalidate one particle rather than the whole run.
    pub fn is_particle_failure(&self) -> bool {
        matches!(
            self,
            LmmError::ParticleInvalid(_)
                | LmmError::NewtonDivergence { .. }
                | LmmError::Singular
                | LmmError::StiffnessFailure { .. }
        )
    }
}

impl From<ModelError> for LmmError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidState(m) | ModelError::InvalidParameter(m) => LmmError::ParticleInvalid(m),
            ModelError::Linalg(l) => l.into(),
            other => LmmError::Model(other),
        }
    }
}

impl From<LinalgError> for LmmError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular => LmmError::Singular,
            other => LmmError::Linalg(other),
        }
    }
}

/// How particles are propagated between observations.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    Fixed { scheme: LmmScheme, h: f64, newton: NewtonOptions },
    Adaptive(AdaptiveOptions),
}

impl Integrator {
    pub fn fixed(scheme: LmmScheme, h: f64) -> Self {
        Integrator::Fixed { scheme, h, newton: NewtonOptions::default() }
    }

    pub fn adaptive(rtol: f64) -> Self {
        Integrator::Adaptive(AdaptiveOptions::new(rtol))
    }

    /// `ab1` to `bdf3`, or `adaptive-bdf2`.
    pub fn label(&self) -> String {
        match self {
            Integrator::Fixed { scheme, .. } => scheme.to_string(),
            Integrator::Adaptive(_) => "adaptive-bdf2".to_string(),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Integrator::Adaptive(_))
    }

    pub fn propagate(
        &self,
        model: &dyn models::OdeModel,
        theta: &[f64],
        x0: &[f64],
        t0: f64,
        t1: f64,
    ) -> Result<PropagationResult, LmmError> {
        match self {
            Integrator::Fixed { scheme, h, newton } => {
                propagate_interval_with(model, theta, x0, t0, t1, *h, scheme, *newton)
            }
            Integrator::Adaptive(opts) => adaptive_bdf_interval(model, theta, x0, t0, t1, opts),
        }
    }

    /// Checks that the observation spacing is compatible with the step.
    pub fn check_interval(&self, t0: f64, t1: f64) -> Result<(), LmmError> {
        match self {
            Integrator::Fixed { h, .. } => step_count(t0, t1, *h).map(|_| ()),
            Integrator::Adaptive(o) if !(o.rtol > 0.0) => {
                Err(LmmError::Config(format!("rtol must be positive, got {}", o.rtol)))
            }
            Integrator::Adaptive(_) => Ok(()),
        }
    }
}
