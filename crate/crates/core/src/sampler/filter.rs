use std::time::Instant;

use super::ops::{
    fitness_weights, innovate, log_likelihood, proliferate_one, resample_multinomial, shrink_towards, update_weights,
};
use super::{Ensemble, ObservationModel, Observations, PfConfig, PosteriorTrace, SamplerError, TraceRow};
use crate::exec::{Executor, PhaseTimes, WorkReport};
use crate::linalg::{chol_psd, weighted_mean_cov, DenseMatrix};
use crate::lmm::{LmmError, PropagationResult};
use crate::models::OdeModel;
use crate::rng::{Purpose, RngStream};

/// Consecutive steps with an effective sample size of one before a warning.
const DEGENERACY_STREAK: usize = 3;

/// Draws the initial ensemble. Particle `n` uses stream `(0, n, init)`:
/// parameters first, then the initial state.
pub fn initialize(cfg: &PfConfig, model: &dyn OdeModel) -> Result<Ensemble, SamplerError> {
    cfg.validate(model)?;
    let n = cfg.particles;
    let mut x = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = RngStream::new(cfg.seed, 0, k as u64, Purpose::Init);
        theta.push(cfg.prior.iter().map(|p| p.mean + p.std * rng.standard_normal()).collect());
        let x0 = &cfg.x0_prior;
        x.push(x0.mean.iter().zip(&x0.std).map(|(m, s)| m + s * rng.standard_normal()).collect());
    }
    Ok(Ensemble { x, theta, logw: vec![-(n as f64).ln(); n] })
}

fn natural(model: &dyn OdeModel, theta: &[f64]) -> Vec<f64> {
    model.params().iter().zip(theta).map(|(spec, u)| spec.transform.to_natural(*u)).collect()
}

fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

fn particle_result(r: Result<PropagationResult, LmmError>) -> Result<Option<PropagationResult>, SamplerError> {
    match r {
        Ok(p) => Ok(Some(p)),
        Err(e) if e.is_particle_failure() => Ok(None),
        Err(e) => Err(SamplerError::Propagation(e)),
    }
}

/// Weighted summaries of an ensemble.
pub(crate) fn summarize(
    ens: &Ensemble,
    model: &dyn OdeModel,
    j: usize,
    t: f64,
    failed: usize,
) -> Result<TraceRow, SamplerError> {
    let p = model.param_dim();
    let w = ens.weights();
    let (log_mean, log_cov) =
        if p == 0 { (Vec::new(), DenseMatrix::zeros(0, 0)) } else { weighted_mean_cov(&flatten(&ens.theta), p, &w)? };
    let nat: Vec<Vec<f64>> = ens.theta.iter().map(|th| natural(model, th)).collect();
    let mut theta_mean = vec![0.0; p];
    for (row, wi) in nat.iter().zip(&w) {
        for (m, v) in theta_mean.iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    let mut theta_var = vec![0.0; p];
    for (row, wi) in nat.iter().zip(&w) {
        for ((s, v), m) in theta_var.iter_mut().zip(row).zip(&theta_mean) {
            *s += wi * (v - m) * (v - m);
        }
    }
    let d = model.dim();
    let mut state_mean = vec![0.0; d];
    for (row, wi) in ens.x.iter().zip(&w) {
        for (m, v) in state_mean.iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    Ok(TraceRow { j, t, theta_mean, theta_var, log_mean, log_cov, state_mean, ess: ens.ess(), failed })
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub ensemble: Ensemble,
    pub row: TraceRow,
}

/// One pass of the filter for observation `j` (1-based) at the end of
/// `interval`: shrink, predict, resample on fitness, proliferate,
/// repropagate with innovation, reweight, summarise.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    ens: &Ensemble,
    y: &[f64],
    j: usize,
    interval: (f64, f64),
    cfg: &PfConfig,
    exec: &Executor,
    model: &dyn OdeModel,
    obs: &ObservationModel,
    phases: &mut PhaseTimes,
) -> Result<StepOutput, SamplerError> {
    let (t0, t1) = interval;
    let n = ens.len();
    let p = model.param_dim();
    let a = cfg.shrink_a;
    let time = j as u64;
    let seed = cfg.seed;

    // propagation with shrunk parameters
    let clock = Instant::now();
    let w = ens.weights();
    let (mean, cov) =
        if p == 0 { (Vec::new(), DenseMatrix::zeros(0, 0)) } else { weighted_mean_cov(&flatten(&ens.theta), p, &w)? };
    let shrunk = shrink_towards(&ens.theta, &mean, a);
    let nat: Vec<Vec<f64>> = shrunk.iter().map(|th| natural(model, th)).collect();
    let predicted = exec.propagate(model, &cfg.integrator, &nat, &ens.x, t0, t1)?;
    let mut loglik_pred = Vec::with_capacity(n);
    for r in predicted {
        loglik_pred.push(match particle_result(r)? {
            Some(r) => log_likelihood(y, &r.state, obs),
            None => f64::NEG_INFINITY,
        });
    }
    phases.propagate += clock.elapsed().as_secs_f64();

    // survival of the fittest
    let clock = Instant::now();
    let g = fitness_weights(&ens.logw, &loglik_pred, j)?;
    let idx = resample_multinomial(&g, seed, time);
    let x_start: Vec<Vec<f64>> = idx.iter().map(|&i| ens.x[i].clone()).collect();
    let theta_bar: Vec<Vec<f64>> = idx.iter().map(|&i| shrunk[i].clone()).collect();
    let loglik_old: Vec<f64> = idx.iter().map(|&i| loglik_pred[i]).collect();
    phases.resample += clock.elapsed().as_secs_f64();

    // proliferation
    let clock = Instant::now();
    let theta_new = if p == 0 {
        theta_bar
    } else {
        let chol = chol_psd(&cov)?;
        let s = (1.0 - a * a).sqrt();
        exec.map_particles(n, |k| proliferate_one(&theta_bar[k], &chol, s, seed, time, k))?
    };
    phases.proliferate += clock.elapsed().as_secs_f64();

    // repropagation and innovation
    let clock = Instant::now();
    let nat: Vec<Vec<f64>> = theta_new.iter().map(|th| natural(model, th)).collect();
    let propagated = exec.propagate(model, &cfg.integrator, &nat, &x_start, t0, t1)?;
    let mut outcomes = Vec::with_capacity(n);
    for r in propagated {
        outcomes.push(particle_result(r)?);
    }
    let x_new: Vec<Option<Vec<f64>>> =
        exec.map_particles(n, |k| outcomes[k].as_ref().map(|r| innovate(&r.state, &r.gamma_diag, seed, time, k)))?;
    phases.repropagate += clock.elapsed().as_secs_f64();

    // weight update
    let clock = Instant::now();
    let mut failed = 0;
    let mut x = Vec::with_capacity(n);
    let mut loglik_new = Vec::with_capacity(n);
    for (k, xk) in x_new.into_iter().enumerate() {
        match xk {
            Some(v) => {
                loglik_new.push(log_likelihood(y, &v, obs));
                x.push(v);
            }
            None => {
                failed += 1;
                loglik_new.push(f64::NEG_INFINITY);
                x.push(x_start[k].clone());
            }
        }
    }
    let logw = update_weights(&loglik_new, &loglik_old, j)?;
    let ensemble = Ensemble { x, theta: theta_new, logw };
    let row = summarize(&ensemble, model, j, t1, failed)?;
    phases.weights += clock.elapsed().as_secs_f64();
    Ok(StepOutput { ensemble, row })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: PosteriorTrace,
    pub ensemble: Ensemble,
    pub report: WorkReport,
}

/// Runs the filter over every observation.
pub fn run(
    data: &Observations,
    cfg: &PfConfig,
    exec: &Executor,
    model: &dyn OdeModel,
    obs: &ObservationModel,
) -> Result<RunOutput, SamplerError> {
    data.validate(obs)?;
    for j in 1..=data.len() {
        let (a, b) = data.interval(j);
        cfg.integrator.check_interval(a, b).map_err(|e| SamplerError::Config(e.to_string()))?;
    }
    let mut ens = initialize(cfg, model)?;
    let names = model.params().iter().map(|s| s.name.to_string()).collect();
    let mut trace =
        PosteriorTrace { param_names: names, rows: vec![summarize(&ens, model, 0, data.t0, 0)?], warnings: Vec::new() };
    let mut phases = PhaseTimes::default();
    exec.take_busy();
    let mut streak = 0;
    for j in 1..=data.len() {
        let out = pf_step(&ens, &data.values[j - 1], j, data.interval(j), cfg, exec, model, obs, &mut phases)?;
        streak = if out.row.ess < 1.0 + 1e-6 { streak + 1 } else { 0 };
        if streak == DEGENERACY_STREAK {
            trace.warnings.push(format!(
                "effective sample size has been 1 for {DEGENERACY_STREAK} consecutive steps (through observation {j})"
            ));
        }
        trace.rows.push(out.row);
        ens = out.ensemble;
    }
    Ok(RunOutput { trace, ensemble: ens, report: WorkReport { phases, busy: exec.take_busy() } })
}
