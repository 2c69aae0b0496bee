use super::step::{ensure_finite, eval_f, newton_guess, step_error};
use super::{implicit_step, LmmError, LmmScheme, NewtonOptions, StepHistory};
use crate::models::OdeModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub state: Vec<f64>,
    /// Per-component innovation variance, the sum of squared step errors.
    pub gamma_diag: Vec<f64>,
    pub steps_taken: usize,
    pub newton_failures: usize,
}

/// Number of fixed steps of size `h` covering `[t0, t1]`. The ratio must be
/// an integer up to a relative slack of 1e-9.
pub fn step_count(t0: f64, t1: f64, h: f64) -> Result<usize, LmmError> {
    if !(t1 > t0) || !(h > 0.0) || !t0.is_finite() || !t1.is_finite() {
        return Err(LmmError::Config(format!("bad interval [{t0}, {t1}] with step {h}")));
    }
    let ratio = (t1 - t0) / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(LmmError::Config(format!("step {h} does not divide the interval [{t0}, {t1}] into whole steps")));
    }
    Ok(n as usize)
}

/// Integrates `[t0, t1]` with fixed steps, ramping the order up from one.
pub fn propagate_interval(
    model: &dyn OdeModel,
    theta: &[f64],
    x0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
    scheme: &LmmScheme,
) -> Result<PropagationResult, LmmError> {
    propagate_interval_with(model, theta, x0, t0, t1, h, scheme, NewtonOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn propagate_interval_with(
    model: &dyn OdeModel,
    theta: &[f64],
    x0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
    scheme: &LmmScheme,
    opts: NewtonOptions,
) -> Result<PropagationResult, LmmError> {
    let n = step_count(t0, t1, h)?;
    let h = (t1 - t0) / n as f64;
    let f0 = eval_f(model, t0, x0, theta)?;
    propagate_from_history(model, theta, StepHistory::new(x0.to_vec(), f0), t0, h, n, scheme, opts)
}

/// Takes `steps` steps from an existing history whose newest entry is at
/// `t0`. The order used is the nominal one capped by the history length, so
/// a single-entry history ramps up and a full one runs at nominal order.
#[allow(clippy::too_many_arguments)]
pub fn propagate_from_history(
    model: &dyn OdeModel,
    theta: &[f64],
    mut hist: StepHistory,
    t0: f64,
    h: f64,
    steps: usize,
    scheme: &LmmScheme,
    opts: NewtonOptions,
) -> Result<PropagationResult, LmmError> {
    let mut gamma = vec![0.0; hist.dim()];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let sq = ramp_scheme(scheme, &hist);
        let guess = newton_guess(&hist, h, sq.order());
        let x_new = if sq.is_implicit() {
            implicit_step(model, theta, &hist, t, h, &sq, opts)?.x
        } else {
            ensure_finite(guess.clone(), t + h)?
        };
        let (f_new, err) = finish_step(model, theta, &hist, &sq, t, h, &guess, &x_new)?;
        accumulate(&mut gamma, &err);
        hist.push(x_new, f_new);
    }
    Ok(PropagationResult { state: hist.state(0).to_vec(), gamma_diag: gamma, steps_taken: steps, newton_failures: 0 })
}

pub(crate) fn ramp_scheme(scheme: &LmmScheme, hist: &StepHistory) -> LmmScheme {
    let q = scheme.order().min(hist.filled());
    if q == scheme.order() {
        scheme.clone()
    } else {
        scheme.with_order(q)
    }
}

/// Evaluates `f` at the new point and estimates the step's local error.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_step(
    model: &dyn OdeModel,
    theta: &[f64],
    hist: &StepHistory,
    sq: &LmmScheme,
    t: f64,
    h: f64,
    guess: &[f64],
    x_new: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LmmError> {
    let f_new = eval_f(model, t + h, x_new, theta)?;
    let err = step_error(sq, hist, h, guess, x_new, &f_new);
    Ok((f_new, err))
}

pub(crate) fn accumulate(gamma: &mut [f64], err: &[f64]) {
    for (g, e) in gamma.iter_mut().zip(err) {
        *g += e * e;
    }
}
