use super::{check_dims, Jacobian, ModelError, OdeModel, ParamSpec, Transform};
use crate::linalg::DenseMatrix;

/// Input function constants: `Φ(t) = A0 + A (t - t0)₊ exp(-(t - t0)/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputPulse {
    pub a0: f64,
    pub amplitude: f64,
    pub onset: f64,
    pub tau: f64,
}

impl Default for InputPulse {
    fn default() -> Self {
        Self { a0: 1.0, amplitude: 5.0, onset: 2.0, tau: 1.0 }
    }
}

/// The input function. The exponential only acts past the onset, so Φ is
/// continuous at `t0` and equals `A0` before it.
pub fn input_phi(t: f64, a0: f64, amplitude: f64, onset: f64, tau: f64) -> f64 {
    let s = t - onset;
    if s <= 0.0 {
        a0
    } else {
        a0 + amplitude * s * (-s / tau).exp()
    }
}

/// Three-compartment Michaelis-Menten chain with linear clearance:
///
/// ```text
/// x1' = Φ(t) - V1 x1/(x1+k1)
/// x2' = V1 x1/(x1+k1) - V2 x2/(x2+k2)
/// x3' = V2 x2/(x2+k2) - λ (x3 - c0)
/// ```
///
/// Unknown parameters are `θ = (V1, k1, V2, k2)`, all positive.
#[derive(Debug, Clone)]
pub struct MetabolicModel {
    pub lambda: f64,
    pub c0: f64,
    pub input: InputPulse,
    params: [ParamSpec; 4],
}

impl Default for MetabolicModel {
    fn default() -> Self {
        Self::new(1.0, 1.0, InputPulse::default()).expect("default constants are valid")
    }
}

impl MetabolicModel {
    pub fn new(lambda: f64, c0: f64, input: InputPulse) -> Result<Self, ModelError> {
        if !(input.tau > 0.0) {
            return Err(ModelError::InvalidParameter(format!("tau must be positive, got {}", input.tau)));
        }
        let p = |name| ParamSpec { name, transform: Transform::Log };
        Ok(Self { lambda, c0, input, params: [p("V1"), p("k1"), p("V2"), p("k2")] })
    }

    pub fn phi(&self, t: f64) -> f64 {
        let i = &self.input;
        input_phi(t, i.a0, i.amplitude, i.onset, i.tau)
    }

    fn check(&self, x: &[f64], theta: &[f64]) -> Result<(), ModelError> {
        check_dims(self, x, theta)?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("non-finite parameters {theta:?}")));
        }
        if !(x[0] + theta[1] > 0.0) || !(x[1] + theta[3] > 0.0) {
            return Err(ModelError::InvalidState(format!(
                "Michaelis-Menten denominator not positive at x = {x:?}, theta = {theta:?}"
            )));
        }
        Ok(())
    }
}

impl OdeModel for MetabolicModel {
    fn dim(&self) -> usize {
        3
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        self.check(x, theta)?;
        let (v1, k1, v2, k2) = (theta[0], theta[1], theta[2], theta[3]);
        let flux1 = v1 * x[0] / (x[0] + k1);
        let flux2 = v2 * x[1] / (x[1] + k2);
        out[0] = self.phi(t) - flux1;
        out[1] = flux1 - flux2;
        out[2] = flux2 - self.lambda * (x[2] - self.c0);
        Ok(())
    }

    fn jacobian(&self, _t: f64, x: &[f64], theta: &[f64]) -> Result<Jacobian, ModelError> {
        self.check(x, theta)?;
        let (v1, k1, v2, k2) = (theta[0], theta[1], theta[2], theta[3]);
        let d1 = v1 * k1 / ((x[0] + k1) * (x[0] + k1));
        let d2 = v2 * k2 / ((x[1] + k2) * (x[1] + k2));
        let mut j = DenseMatrix::zeros(3, 3);
        j[(0, 0)] = -d1;
        j[(1, 0)] = d1;
        j[(1, 1)] = -d2;
        j[(2, 1)] = d2;
        j[(2, 2)] = -self.lambda;
        Ok(Jacobian::Dense(j))
    }
}
