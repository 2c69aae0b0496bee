use super::scheme::{ab_error_const, adams_bashforth_weights, extrapolation_weights, Family, LmmScheme};
use super::{LmmError, StepHistory};
use crate::instrument::{self, Counter};
use crate::linalg::{norm_inf, solve_block, Block};
use crate::models::OdeModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolve {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// `f(t, x, θ)`, rejecting non-finite values.
pub(crate) fn eval_f(model: &dyn OdeModel, t: f64, x: &[f64], theta: &[f64]) -> Result<Vec<f64>, LmmError> {
    let f = model.eval_rhs(t, x, theta)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(LmmError::ParticleInvalid(format!("non-finite derivative at t = {t}")));
    }
    Ok(f)
}

/// `x_n + h Σ w_i f_{n-i}` with Adams-Bashforth weights of order `q`.
pub(crate) fn ab_combination(hist: &StepHistory, h: f64, q: usize) -> Vec<f64> {
    let mut x = hist.state(0).to_vec();
    for (lag, w) in adams_bashforth_weights(q).iter().enumerate() {
        for (xi, fi) in x.iter_mut().zip(hist.fval(lag)) {
            *xi += h * w * fi;
        }
    }
    x
}

/// Polynomial extrapolation of degree `q` through the last `q + 1` states.
pub(crate) fn extrapolate(hist: &StepHistory, q: usize) -> Vec<f64> {
    let mut x = vec![0.0; hist.dim()];
    for (lag, w) in extrapolation_weights(q).iter().enumerate() {
        for (xi, si) in x.iter_mut().zip(hist.state(lag)) {
            *xi += w * si;
        }
    }
    x
}

fn check_history(scheme: &LmmScheme, hist: &StepHistory, h: f64) -> Result<(), LmmError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(LmmError::Config(format!("step size must be positive, got {h}")));
    }
    let need = scheme.states_needed().max(scheme.fvals_needed());
    if hist.filled() < need {
        return Err(LmmError::Config(format!("{scheme} needs {need} history entries, have {}", hist.filled())));
    }
    Ok(())
}

pub(crate) fn ensure_finite(x: Vec<f64>, t: f64) -> Result<Vec<f64>, LmmError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LmmError::ParticleInvalid(format!("non-finite state at t = {t}")))
    }
}

/// One Adams-Bashforth step of the scheme's order. Uses only stored
/// derivatives, so the model is not called.
pub fn explicit_step(
    _model: &dyn OdeModel,
    _theta: &[f64],
    hist: &StepHistory,
    t: f64,
    h: f64,
    scheme: &LmmScheme,
) -> Result<Vec<f64>, LmmError> {
    if scheme.family() != Family::AdamsBashforth {
        return Err(LmmError::Config(format!("{scheme} is not explicit")));
    }
    check_history(scheme, hist, h)?;
    ensure_finite(ab_combination(hist, h, scheme.order()), t + h)
}

/// The implicit equation `x = c f(t_new, x) + known` of one step.
#[derive(Debug, Clone)]
pub(crate) struct NewtonProblem {
    pub t_new: f64,
    pub c: f64,
    pub known: Vec<f64>,
}

impl NewtonProblem {
    pub fn new(scheme: &LmmScheme, hist: &StepHistory, t: f64, h: f64) -> Self {
        let mut known = vec![0.0; hist.dim()];
        for (lag, a) in scheme.alpha().iter().enumerate() {
            for (k, s) in known.iter_mut().zip(hist.state(lag)) {
                *k += a * s;
            }
        }
        for (i, b) in scheme.beta().iter().enumerate().skip(1) {
            for (k, f) in known.iter_mut().zip(hist.fval(i - 1)) {
                *k += h * b * f;
            }
        }
        Self { t_new: t + h, c: h * scheme.beta()[0], known }
    }

    /// Newton right-hand side `-G(x) = known + c f(x) - x`.
    pub fn neg_residual(&self, model: &dyn OdeModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>, LmmError> {
        let f = eval_f(model, self.t_new, x, theta)?;
        Ok(self.known.iter().zip(&f).zip(x).map(|((k, fi), xi)| k + self.c * fi - xi).collect())
    }

    /// Iteration matrix `I - c J(x)`.
    pub fn matrix(&self, model: &dyn OdeModel, theta: &[f64], x: &[f64]) -> Result<Block, LmmError> {
        Ok(model.jacobian(self.t_new, x, theta)?.iteration_matrix(self.c)?)
    }
}

/// Applies `x += dx` and reports convergence. Non-finite iterates are an error.
pub(crate) fn newton_update(x: &mut [f64], dx: &[f64], tol: f64) -> Result<bool, ()> {
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(());
    }
    Ok(norm_inf(dx) <= tol * (1.0 + norm_inf(x)))
}

/// Initial Newton guess: the Adams-Bashforth predictor of matching order,
/// dropping to lower order when the history is short.
pub(crate) fn newton_guess(hist: &StepHistory, h: f64, order: usize) -> Vec<f64> {
    ab_combination(hist, h, order.min(hist.filled()))
}

/// One implicit (Adams-Moulton or BDF) step solved by Newton iteration.
pub fn implicit_step(
    model: &dyn OdeModel,
    theta: &[f64],
    hist: &StepHistory,
    t: f64,
    h: f64,
    scheme: &LmmScheme,
    opts: NewtonOptions,
) -> Result<NewtonSolve, LmmError> {
    instrument::bump(Counter::ImplicitStep);
    if !scheme.is_implicit() {
        return Err(LmmError::Config(format!("{scheme} is explicit")));
    }
    check_history(scheme, hist, h)?;
    let problem = NewtonProblem::new(scheme, hist, t, h);
    let guess = newton_guess(hist, h, scheme.order());
    newton_solve(model, theta, &problem, guess, opts)
}

pub(crate) fn newton_solve(
    model: &dyn OdeModel,
    theta: &[f64],
    problem: &NewtonProblem,
    mut x: Vec<f64>,
    opts: NewtonOptions,
) -> Result<NewtonSolve, LmmError> {
    let linear = model.is_linear();
    for it in 1..=opts.max_iter {
        let rhs = problem.neg_residual(model, theta, &x)?;
        let m = problem.matrix(model, theta, &x)?;
        let dx = solve_block(&m, &rhs)?;
        match newton_update(&mut x, &dx, opts.tol) {
            Err(()) => return Err(LmmError::NewtonDivergence { iterations: it, last_iterate: x }),
            Ok(done) if done || linear => return Ok(NewtonSolve { x, iterations: it }),
            Ok(_) => {}
        }
    }
    Err(LmmError::NewtonDivergence { iterations: opts.max_iter, last_iterate: x })
}

/// What a step is compared against to estimate its local error.
#[derive(Debug, Clone, Copy)]
pub enum ErrorReference<'a> {
    /// A predictor with leading error constant `error_const`; the difference
    /// is rescaled by Milne's device `|C| / |C_pred - C|`.
    Predictor { values: &'a [f64], error_const: f64 },
    /// A more accurate value; the raw difference is the estimate.
    Reference(&'a [f64]),
}

/// Per-component absolute local truncation error estimate.
pub fn lte_estimate(scheme: &LmmScheme, corrector: &[f64], reference: ErrorReference<'_>) -> Vec<f64> {
    let (values, scale) = match reference {
        ErrorReference::Predictor { values, error_const } => (values, milne_factor(scheme.error_const(), error_const)),
        ErrorReference::Reference(values) => (values, 1.0),
    };
    debug_assert_eq!(values.len(), corrector.len());
    corrector.iter().zip(values).map(|(c, p)| scale * (c - p).abs()).collect()
}

pub(crate) fn milne_factor(corrector_const: f64, predictor_const: f64) -> f64 {
    corrector_const.abs() / (predictor_const - corrector_const).abs()
}

/// Local error estimate for a step of order `q` that produced `x_new`
/// (with derivative `f_new`) from `hist`. `guess` is the Adams-Bashforth
/// predictor used to start Newton, or the explicit step itself.
pub(crate) fn step_error(
    scheme_q: &LmmScheme,
    hist: &StepHistory,
    h: f64,
    guess: &[f64],
    x_new: &[f64],
    f_new: &[f64],
) -> Vec<f64> {
    let q = scheme_q.order();
    let filled = hist.filled();
    match scheme_q.family() {
        Family::AdamsBashforth => {
            let reference = if filled > q {
                ab_combination(hist, h, q + 1)
            } else if q == 1 {
                // trapezoid rule with the freshly evaluated derivative
                let (xn, fn_) = (hist.state(0), hist.fval(0));
                (0..xn.len()).map(|i| xn[i] + 0.5 * h * (fn_[i] + f_new[i])).collect()
            } else {
                ab_combination(hist, h, q - 1)
            };
            lte_estimate(scheme_q, x_new, ErrorReference::Reference(&reference))
        }
        Family::AdamsMoulton => lte_estimate(
            scheme_q,
            x_new,
            ErrorReference::Predictor { values: guess, error_const: ab_error_const(q.min(filled)) },
        ),
        Family::Bdf => {
            if filled > q {
                let pred = extrapolate(hist, q);
                lte_estimate(scheme_q, x_new, ErrorReference::Predictor { values: &pred, error_const: 1.0 })
            } else {
                lte_estimate(
                    scheme_q,
                    x_new,
                    ErrorReference::Predictor { values: guess, error_const: ab_error_const(q.min(filled)) },
                )
            }
        }
    }
}
