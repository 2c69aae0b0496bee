use super::step::{eval_f, newton_solve, NewtonProblem};
use super::{LmmError, NewtonOptions, PropagationResult};
use crate::linalg::norm_inf;
use crate::models::OdeModel;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.25;
const MAX_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub newton: NewtonOptions,
    /// Attempted steps (accepted plus rejected) before giving up.
    pub max_attempts: usize,
}

impl AdaptiveOptions {
    pub fn new(rtol: f64) -> Self {
        Self { rtol, newton: NewtonOptions::default(), max_attempts: 1_000_000 }
    }
}

/// Variable-step BDF of orders 1 and 2 over `[t0, t1]`.
///
/// The first step is backward Euler with a forward Euler predictor, the
/// second is backward Euler checked against linear extrapolation, and all
/// later steps use the variable-coefficient BDF2 checked against quadratic
/// extrapolation. A step is accepted when its error estimate is at most
/// `rtol (1 + ‖x‖∞)`. The innovation variance is `rtol` times the number of
/// accepted steps, for every component.
pub fn adaptive_bdf_interval(
    model: &dyn OdeModel,
    theta: &[f64],
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: &AdaptiveOptions,
) -> Result<PropagationResult, LmmError> {
    let rtol = opts.rtol;
    if !(rtol > 0.0) || !rtol.is_finite() {
        return Err(LmmError::Config(format!("rtol must be positive, got {rtol}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(LmmError::Config(format!("bad interval [{t0}, {t1}]")));
    }
    let span = t1 - t0;
    let h_min = span * 1e-10;
    let newton = NewtonOptions { tol: opts.newton.tol.min(1e-2 * rtol), ..opts.newton };

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut f = eval_f(model, t, &x, theta)?;
    // earlier accepted points, newest first: (t_{n-1}, x_{n-1}), (t_{n-2}, x_{n-2})
    let mut past: Vec<(f64, Vec<f64>)> = Vec::with_capacity(2);
    let fnorm = norm_inf(&f);
    let mut h = if fnorm > 0.0 { span.min(rtol.sqrt() * (1.0 + norm_inf(&x)) / fnorm) } else { span };
    let mut steps = 0usize;
    let mut failures = 0usize;
    let mut attempts = 0usize;

    while t < t1 {
        attempts += 1;
        if attempts > opts.max_attempts {
            return Err(LmmError::StiffnessFailure { t, h });
        }
        let remaining = t1 - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < h_min {
            return Err(LmmError::StiffnessFailure { t, h });
        }
        let t_new = if last { t1 } else { t + h };
        let (order, predictor, factor, problem) = plan(&x, &f, &past, t, h, t_new);

        let solved = newton_solve(model, theta, &problem, predictor.clone(), newton).and_then(|s| {
            let f_new = eval_f(model, t_new, &s.x, theta)?;
            Ok((s.x, f_new))
        });
        let (x_new, f_new) = match solved {
            Ok(v) => v,
            Err(e) if e.is_particle_failure() => {
                failures += 1;
                h *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };

        let est = factor * x_new.iter().zip(&predictor).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let tol = rtol * (1.0 + norm_inf(&x_new));
        if est <= tol {
            past.insert(0, (t, std::mem::replace(&mut x, x_new)));
            past.truncate(2);
            f = f_new;
            t = t_new;
            steps += 1;
        }
        let ratio = if est > 0.0 { SAFETY * (tol / est).powf(1.0 / (order as f64 + 1.0)) } else { MAX_FACTOR };
        h *= ratio.clamp(MIN_FACTOR, MAX_FACTOR);
    }

    Ok(PropagationResult {
        gamma_diag: vec![rtol * steps as f64; x.len()],
        state: x,
        steps_taken: steps,
        newton_failures: failures,
    })
}

/// Order, predictor, Milne factor and implicit equation for the next step.
fn plan(
    x: &[f64],
    f: &[f64],
    past: &[(f64, Vec<f64>)],
    t: f64,
    h: f64,
    t_new: f64,
) -> (usize, Vec<f64>, f64, NewtonProblem) {
    let backward_euler = NewtonProblem { t_new, c: h, known: x.to_vec() };
    match past {
        [] => {
            let pred = x.iter().zip(f).map(|(xi, fi)| xi + h * fi).collect();
            (1, pred, 0.5, backward_euler)
        }
        [(tp, xp)] => {
            let h1 = t - tp;
            let w = h / h1;
            let pred = x.iter().zip(xp).map(|(a, b)| a + w * (a - b)).collect();
            // backward Euler error h²/2 x'', linear extrapolation error h(h+h1)/2 x''
            (1, pred, h / (2.0 * h + h1), backward_euler)
        }
        [(tp, xp), (tpp, xpp), ..] => {
            let (h1, h2) = (t - tp, tp - tpp);
            let w = h / h1;
            let denom = 1.0 + 2.0 * w;
            let a1 = (1.0 + w) * (1.0 + w) / denom;
            let a2 = w * w / denom;
            let known = x.iter().zip(xp).map(|(a, b)| a1 * a - a2 * b).collect();
            let problem = NewtonProblem { t_new, c: h * (1.0 + w) / denom, known };
            // Lagrange extrapolation through t_n, t_{n-1}, t_{n-2}
            let (s0, s1, s2) = (h, h + h1, h + h1 + h2);
            let l0 = s1 * s2 / (h1 * (h1 + h2));
            let l1 = -s0 * s2 / (h1 * h2);
            let l2 = s0 * s1 / ((h1 + h2) * h2);
            let pred = (0..x.len()).map(|i| l0 * x[i] + l1 * xp[i] + l2 * xpp[i]).collect();
            let c_corr = h * h * (h + h1) * (h + h1) / (6.0 * (2.0 * h + h1));
            let c_pred = s0 * s1 * s2 / 6.0;
            (2, pred, c_corr / (c_pred + c_corr), problem)
        }
    }
}
