//! ODE systems the sampler can estimate parameters of.

mod advdiff;
mod metabolic;

pub use advdiff::{
    cholesky_to_diffusion, gaussian_plume_ic, AdvDiffModel, PLUME_CENTERS_X, PLUME_CENTERS_Y, PLUME_WIDTHS,
};
pub use metabolic::{input_phi, InputPulse, MetabolicModel};

use thiserror::Error;

use crate::linalg::{Block, CsrMatrix, DenseMatrix, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state or parameters outside the model's domain: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("wrong dimension for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How a parameter is mapped to the unconstrained space the sampler works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Strictly positive; sampled as `log θ`.
    Log,
    Identity,
}

impl Transform {
    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Identity => u,
        }
    }

    pub fn to_unconstrained(self, v: f64) -> f64 {
        match self {
            Transform::Log => v.ln(),
            Transform::Identity => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub transform: Transform,
}

/// State Jacobian `∂f/∂x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Jacobian {
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
}

impl Jacobian {
    /// Newton iteration matrix `I - c J`.
    pub fn iteration_matrix(&self, c: f64) -> Result<Block, LinalgError> {
        Ok(match self {
            Jacobian::Dense(d) => Block::Dense(d.identity_minus_scaled(c)?),
            Jacobian::Sparse(s) => Block::Sparse(s.identity_minus_scaled(c)?),
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Jacobian::Dense(d) => d.clone(),
            Jacobian::Sparse(s) => s.to_dense(),
        }
    }
}

/// `dx/dt = f(t, x, θ)` with parameters in natural (constrained) units.
///
/// Implementations are immutable and shared read-only across worker threads.
pub trait OdeModel: Send + Sync {
    fn dim(&self) -> usize;

    fn params(&self) -> &[ParamSpec];

    fn param_dim(&self) -> usize {
        self.params().len()
    }

    /// True when `f(t, x, θ) = L(θ) x`; Newton then converges in one solve.
    fn is_linear(&self) -> bool {
        false
    }

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError>;

    fn jacobian(&self, t: f64, x: &[f64], theta: &[f64]) -> Result<Jacobian, ModelError>;

    fn eval_rhs(&self, t: f64, x: &[f64], theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.dim()];
        self.rhs(t, x, theta, &mut out)?;
        Ok(out)
    }
}

pub(crate) fn check_dims(model: &dyn OdeModel, x: &[f64], theta: &[f64]) -> Result<(), ModelError> {
    if x.len() != model.dim() {
        return Err(ModelError::Dimension { what: "state", expected: model.dim(), got: x.len() });
    }
    if theta.len() != model.param_dim() {
        return Err(ModelError::Dimension { what: "parameters", expected: model.param_dim(), got: theta.len() });
    }
    Ok(())
}

/// `dxᵢ/dt = -θ₀ xᵢ` for every component: the scalar test equation
/// `x' = λx` with `λ = -θ₀`, in any dimension.
#[derive(Debug, Clone)]
pub struct LinearDecay {
    dim: usize,
    params: [ParamSpec; 1],
}

impl LinearDecay {
    pub fn new(dim: usize) -> Self {
        Self { dim, params: [ParamSpec { name: "rate", transform: Transform::Identity }] }
    }
}

impl OdeModel for LinearDecay {
    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        check_dims(self, x, theta)?;
        for (o, v) in out.iter_mut().zip(x) {
            *o = -theta[0] * v;
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, x: &[f64], theta: &[f64]) -> Result<Jacobian, ModelError> {
        check_dims(self, x, theta)?;
        let mut j = DenseMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            j[(i, i)] = -theta[0];
        }
        Ok(Jacobian::Dense(j))
    }
}

#[cfg(test)]
pub(crate) mod fd {
    use super::OdeModel;

    /// Central finite-difference Jacobian with step `1e-6 (1 + |x|)`.
    pub fn jacobian(model: &dyn OdeModel, t: f64, x: &[f64], theta: &[f64]) -> Vec<Vec<f64>> {
        let d = model.dim();
        let mut cols = vec![vec![0.0; d]; d];
        for j in 0..d {
            let step = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += step;
            xm[j] -= step;
            let fp = model.eval_rhs(t, &xp, theta).unwrap();
            let fm = model.eval_rhs(t, &xm, theta).unwrap();
            for i in 0..d {
                cols[i][j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        cols
    }
}
