use rayon::prelude::*;

use super::propagate::{accumulate, finish_step, ramp_scheme};
use super::step::{ensure_finite, eval_f, newton_guess, newton_update, NewtonProblem};
use super::{step_count, LmmError, LmmScheme, NewtonOptions, NewtonSolve, PropagationResult, StepHistory};
use crate::linalg::{block_diag_assemble, Block};
use crate::models::OdeModel;

/// Newton iteration for many particles at once. Each outer iteration stacks
/// the residuals of the unconverged particles, assembles one block-diagonal
/// iteration matrix and solves it. Converged or failed particles drop out.
///
/// Per particle, the arithmetic is the same as [`super::implicit_step`], so
/// results agree bitwise.
pub(crate) fn batched_newton(
    model: &dyn OdeModel,
    thetas: &[&[f64]],
    problems: &[NewtonProblem],
    guesses: Vec<Vec<f64>>,
    opts: NewtonOptions,
) -> Vec<Result<NewtonSolve, LmmError>> {
    let n = problems.len();
    let d = model.dim();
    let linear = model.is_linear();
    let mut xs = guesses;
    let mut status: Vec<Option<Result<NewtonSolve, LmmError>>> = (0..n).map(|_| None).collect();
    let mut active: Vec<usize> = (0..n).collect();

    for it in 1..=opts.max_iter {
        if active.is_empty() {
            break;
        }
        let evals: Vec<Result<(Vec<f64>, Block), LmmError>> = active
            .par_iter()
            .map(|&i| {
                let rhs = problems[i].neg_residual(model, thetas[i], &xs[i])?;
                let m = problems[i].matrix(model, thetas[i], &xs[i])?;
                Ok((rhs, m))
            })
            .collect();
        let mut rhs = Vec::with_capacity(active.len() * d);
        let mut blocks = Vec::with_capacity(active.len());
        let mut members = Vec::with_capacity(active.len());
        for (&i, e) in active.iter().zip(evals) {
            match e {
                Ok((r, m)) => {
                    rhs.extend_from_slice(&r);
                    blocks.push(m);
                    members.push(i);
                }
                Err(e) => status[i] = Some(Err(e)),
            }
        }
        if members.is_empty() {
            active.clear();
            break;
        }
        let solution = block_diag_assemble(blocks).and_then(|a| a.solve_par(&rhs));
        let solution = match solution {
            Ok(s) => s,
            Err(e) => {
                for &i in &members {
                    status[i] = Some(Err(e.clone().into()));
                }
                active.clear();
                break;
            }
        };
        let mut still = Vec::with_capacity(members.len());
        for (k, &i) in members.iter().enumerate() {
            if solution.singular.binary_search(&k).is_ok() {
                status[i] = Some(Err(LmmError::Singular));
                continue;
            }
            let dx = &solution.x[k * d..(k + 1) * d];
            match newton_update(&mut xs[i], dx, opts.tol) {
                Err(()) => {
                    let last_iterate = std::mem::take(&mut xs[i]);
                    status[i] = Some(Err(LmmError::NewtonDivergence { iterations: it, last_iterate }));
                }
                Ok(done) if done || linear => {
                    status[i] = Some(Ok(NewtonSolve { x: std::mem::take(&mut xs[i]), iterations: it }));
                }
                Ok(_) => still.push(i),
            }
        }
        active = still;
    }
    for i in active {
        let last_iterate = std::mem::take(&mut xs[i]);
        status[i] = Some(Err(LmmError::NewtonDivergence { iterations: opts.max_iter, last_iterate }));
    }
    status.into_iter().map(|s| s.expect("every particle receives a status")).collect()
}

/// One implicit step for every particle through the aggregate
/// block-diagonal Newton solve. Configuration errors abort; per-particle
/// failures are reported in the returned statuses.
pub fn batched_implicit_step(
    model: &dyn OdeModel,
    thetas: &[Vec<f64>],
    hists: &[StepHistory],
    t: f64,
    h: f64,
    scheme: &LmmScheme,
    opts: NewtonOptions,
) -> Result<Vec<Result<NewtonSolve, LmmError>>, LmmError> {
    if !scheme.is_implicit() {
        return Err(LmmError::Config(format!("{scheme} is explicit")));
    }
    if thetas.len() != hists.len() {
        return Err(LmmError::Config(format!("{} parameter rows for {} histories", thetas.len(), hists.len())));
    }
    if !(h > 0.0) {
        return Err(LmmError::Config(format!("step size must be positive, got {h}")));
    }
    let need = scheme.states_needed().max(scheme.fvals_needed());
    if let Some(hist) = hists.iter().find(|hist| hist.filled() < need) {
        return Err(LmmError::Config(format!("{scheme} needs {need} history entries, have {}", hist.filled())));
    }
    let problems: Vec<NewtonProblem> = hists.iter().map(|hist| NewtonProblem::new(scheme, hist, t, h)).collect();
    let guesses = hists.iter().map(|hist| newton_guess(hist, h, scheme.order())).collect();
    let theta_refs: Vec<&[f64]> = thetas.iter().map(Vec::as_slice).collect();
    Ok(batched_newton(model, &theta_refs, &problems, guesses, opts))
}

struct Lane {
    hist: StepHistory,
    gamma: Vec<f64>,
}

/// Propagates every particle over `[t0, t1]` in lockstep. Explicit schemes
/// advance the stacked states directly; implicit ones go through the batched
/// Newton solve. Results equal [`super::propagate_interval_with`] per
/// particle, bitwise.
#[allow(clippy::too_many_arguments)]
pub fn propagate_interval_batched(
    model: &dyn OdeModel,
    thetas: &[Vec<f64>],
    x0s: &[Vec<f64>],
    t0: f64,
    t1: f64,
    h: f64,
    scheme: &LmmScheme,
    opts: NewtonOptions,
) -> Result<Vec<Result<PropagationResult, LmmError>>, LmmError> {
    if thetas.len() != x0s.len() {
        return Err(LmmError::Config(format!("{} parameter rows for {} states", thetas.len(), x0s.len())));
    }
    let steps = step_count(t0, t1, h)?;
    let h = (t1 - t0) / steps as f64;
    let mut lanes: Vec<Result<Lane, LmmError>> = thetas
        .par_iter()
        .zip(x0s.par_iter())
        .map(|(theta, x0)| {
            let f0 = eval_f(model, t0, x0, theta)?;
            Ok(Lane { hist: StepHistory::new(x0.clone(), f0), gamma: vec![0.0; x0.len()] })
        })
        .collect();

    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let live: Vec<usize> = (0..lanes.len()).filter(|&i| lanes[i].is_ok()).collect();
        let Some(&first) = live.first() else { break };
        // lanes advance in lockstep, so they share the ramp-up order
        let sq = ramp_scheme(scheme, &lanes[first].as_ref().expect("live lane").hist);
        let hist_of = |i: usize| &lanes[i].as_ref().expect("live lane").hist;
        let guesses: Vec<Vec<f64>> = live.par_iter().map(|&i| newton_guess(hist_of(i), h, sq.order())).collect();

        let new_states: Vec<Result<Vec<f64>, LmmError>> = if sq.is_implicit() {
            let problems: Vec<NewtonProblem> =
                live.par_iter().map(|&i| NewtonProblem::new(&sq, hist_of(i), t, h)).collect();
            let theta_refs: Vec<&[f64]> = live.iter().map(|&i| thetas[i].as_slice()).collect();
            batched_newton(model, &theta_refs, &problems, guesses.clone(), opts)
                .into_iter()
                .map(|r| r.map(|s| s.x))
                .collect()
        } else {
            guesses.iter().map(|g| ensure_finite(g.clone(), t + h)).collect()
        };

        let finished: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>), LmmError>> = live
            .par_iter()
            .zip(new_states.into_par_iter())
            .zip(guesses.par_iter())
            .map(|((&i, x_new), guess)| {
                let x_new = x_new?;
                let (f_new, err) = finish_step(model, &thetas[i], hist_of(i), &sq, t, h, guess, &x_new)?;
                Ok((x_new, f_new, err))
            })
            .collect();

        for (&i, outcome) in live.iter().zip(finished) {
            match outcome {
                Ok((x_new, f_new, err)) => {
                    let lane = lanes[i].as_mut().expect("live lane");
                    accumulate(&mut lane.gamma, &err);
                    lane.hist.push(x_new, f_new);
                }
                Err(e) => lanes[i] = Err(e),
            }
        }
    }

    Ok(lanes
        .into_iter()
        .map(|lane| {
            lane.map(|l| PropagationResult {
                state: l.hist.state(0).to_vec(),
                gamma_diag: l.gamma,
                steps_taken: steps,
                newton_failures: 0,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{self, Counter};
    use crate::lmm::{implicit_step, propagate_interval_with, scheme_coefficients, Family};
    use crate::models::{AdvDiffModel, LinearDecay, MetabolicModel};
    use crate::rng::{Purpose, RngStream};

    fn random_metabolic_instance(seed: u64) -> (Vec<Vec<f64>>, Vec<StepHistory>, LmmScheme, f64) {
        let m = MetabolicModel::default();
        let mut s = RngStream::new(seed, 0, 0, Purpose::Init);
        let n = 1 + (s.next_u32() % 16) as usize;
        let fam = if s.uniform() < 0.5 { Family::AdamsMoulton } else { Family::Bdf };
        let order = 1 + (s.next_u32() % 3) as usize;
        let scheme = scheme_coefficients(fam, order).unwrap();
        let h = 0.01 + 0.2 * s.uniform();
        let mut thetas = Vec::new();
        let mut hists = Vec::new();
        for _ in 0..n {
            let th: Vec<f64> = (0..4).map(|_| 0.2 + 3.0 * s.uniform()).collect();
            let mut hist = StepHistory::default();
            for k in 0..3 {
                let x: Vec<f64> = (0..3).map(|_| 2.0 * s.uniform()).collect();
                let f = m.eval_rhs(k as f64 * h, &x, &th).unwrap();
                hist.push(x, f);
            }
            thetas.push(th);
            hists.push(hist);
        }
        (thetas, hists, scheme, h)
    }

    #[test]
    fn batched_matches_sequential_bitwise_on_random_instances() {
        let m = MetabolicModel::default();
        for seed in 0..60 {
            let (thetas, hists, scheme, h) = random_metabolic_instance(seed);
            let opts = NewtonOptions::default();
            let batched = batched_implicit_step(&m, &thetas, &hists, 0.3, h, &scheme, opts).unwrap();
            for (i, b) in batched.iter().enumerate() {
                let s = implicit_step(&m, &thetas[i], &hists[i], 0.3, h, &scheme, opts);
                assert_eq!(b, &s, "seed {seed} particle {i}");
            }
        }
    }

    #[test]
    fn single_particle_reduces_to_implicit_step() {
        let (thetas, hists, scheme, h) = random_metabolic_instance(99);
        let m = MetabolicModel::default();
        let b =
            batched_implicit_step(&m, &thetas[..1], &hists[..1], 0.0, h, &scheme, NewtonOptions::default()).unwrap();
        let s = implicit_step(&m, &thetas[0], &hists[0], 0.0, h, &scheme, NewtonOptions::default());
        assert_eq!(b[0], s);
    }

    #[test]
    fn linear_particles_converge_in_one_iteration() {
        let m = LinearDecay::new(2);
        let thetas: Vec<Vec<f64>> = (1..=5).map(|k| vec![k as f64]).collect();
        let hists: Vec<StepHistory> =
            thetas.iter().map(|th| StepHistory::new(vec![1.0, 2.0], vec![-th[0], -2.0 * th[0]])).collect();
        let s = scheme_coefficients(Family::Bdf, 1).unwrap();
        let out = batched_implicit_step(&m, &thetas, &hists, 0.0, 0.1, &s, NewtonOptions::default()).unwrap();
        assert!(out.iter().all(|r| r.as_ref().unwrap().iterations == 1));
    }

    #[test]
    fn failing_particle_does_not_abort_batch() {
        let m = MetabolicModel::default();
        let th_ok = vec![2.0, 0.5, 1.0, 0.8];
        let th_bad = vec![2.0, -5.0, 1.0, 0.8];
        let x0 = vec![1.0, 1.0, 1.0];
        let f0 = m.eval_rhs(0.0, &x0, &th_ok).unwrap();
        let hists = vec![StepHistory::new(x0.clone(), f0.clone()), StepHistory::new(x0, f0)];
        let s = scheme_coefficients(Family::Bdf, 1).unwrap();
        let out = batched_implicit_step(&m, &[th_ok, th_bad], &hists, 0.0, 0.1, &s, NewtonOptions::default()).unwrap();
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(LmmError::ParticleInvalid(_))));
    }

    #[test]
    fn batched_propagation_equals_sequential() {
        let m = MetabolicModel::default();
        let mut s = RngStream::new(5, 0, 0, Purpose::Init);
        let thetas: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| 0.3 + 2.0 * s.uniform()).collect()).collect();
        let x0s: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| s.uniform()).collect()).collect();
        for name in ["ab1", "ab2", "ab3", "am1", "am2", "am3", "bdf1", "bdf2", "bdf3"] {
            let scheme: LmmScheme = name.parse().unwrap();
            let opts = NewtonOptions::default();
            let batched = propagate_interval_batched(&m, &thetas, &x0s, 1.0, 1.4, 0.05, &scheme, opts).unwrap();
            for i in 0..8 {
                let seq = propagate_interval_with(&m, &thetas[i], &x0s[i], 1.0, 1.4, 0.05, &scheme, opts);
                assert_eq!(batched[i], seq, "{name} particle {i}");
            }
        }
    }

    #[test]
    fn batched_propagation_on_advdiff() {
        let m = AdvDiffModel::new(6).unwrap();
        let thetas = vec![vec![0.3, 0.2, 0.1, 0.5, -0.2], vec![0.25, 0.3, -0.1, -0.4, 0.1]];
        let x0 = m.initial_condition().to_vec();
        let x0s = vec![x0.clone(), x0];
        let scheme: LmmScheme = "bdf2".parse().unwrap();
        let opts = NewtonOptions::default();
        let batched = propagate_interval_batched(&m, &thetas, &x0s, 0.0, 1.0, 0.1, &scheme, opts).unwrap();
        for i in 0..2 {
            let seq = propagate_interval_with(&m, &thetas[i], &x0s[i], 0.0, 1.0, 0.1, &scheme, opts);
            assert_eq!(batched[i], seq);
        }
    }

    #[test]
    fn explicit_batched_path_builds_no_block_matrix() {
        let m = MetabolicModel::default();
        let thetas = vec![vec![2.0, 0.5, 1.0, 0.8]; 4];
        let x0s = vec![vec![0.5, 0.5, 1.0]; 4];
        let scheme: LmmScheme = "ab2".parse().unwrap();
        instrument::reset();
        propagate_interval_batched(&m, &thetas, &x0s, 0.0, 1.0, 0.05, &scheme, NewtonOptions::default()).unwrap();
        assert_eq!(instrument::count(Counter::BlockDiagAssemble), 0);
        let scheme: LmmScheme = "bdf2".parse().unwrap();
        propagate_interval_batched(&m, &thetas, &x0s, 0.0, 1.0, 0.05, &scheme, NewtonOptions::default()).unwrap();
        assert!(instrument::count(Counter::BlockDiagAssemble) > 0);
        assert_eq!(instrument::count(Counter::ImplicitStep), 0);
    }
}
