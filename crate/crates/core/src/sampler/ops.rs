use super::{ObservationModel, SamplerError};
use crate::linalg::{chol_psd, CholeskyFactor, DenseMatrix};
use crate::rng::{Purpose, RngStream};

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Subtracts the log-sum-exp. NaN entries count as zero weight. Returns
/// `None` when every entry is `-∞`.
pub fn normalize_log_weights(v: &[f64]) -> Option<Vec<f64>> {
    let clean: Vec<f64> = v.iter().map(|x| if x.is_nan() { f64::NEG_INFINITY } else { *x }).collect();
    let lse = log_sum_exp(&clean);
    if !lse.is_finite() {
        return None;
    }
    let shifted: Vec<f64> = clean.iter().map(|x| x - lse).collect();
    // a second pass removes the rounding left by large offsets
    let residual = log_sum_exp(&shifted);
    Some(shifted.iter().map(|x| x - residual).collect())
}

pub fn effective_sample_size(logw: &[f64]) -> f64 {
    1.0 / logw.iter().map(|l| (2.0 * l).exp()).sum::<f64>()
}

pub fn weighted_mean(rows: &[Vec<f64>], logw: &[f64]) -> Vec<f64> {
    let p = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for (row, l) in rows.iter().zip(logw) {
        let w = l.exp();
        for (m, v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    mean
}

/// `a θⁿ + (1 - a) θ̄` with `θ̄` the weighted mean.
pub fn shrink(theta: &[Vec<f64>], logw: &[f64], a: f64) -> Vec<Vec<f64>> {
    let mean = weighted_mean(theta, logw);
    shrink_towards(theta, &mean, a)
}

pub(crate) fn shrink_towards(theta: &[Vec<f64>], mean: &[f64], a: f64) -> Vec<Vec<f64>> {
    theta.iter().map(|row| row.iter().zip(mean).map(|(v, m)| a * v + (1.0 - a) * m).collect()).collect()
}

/// Gaussian log-density of `y` given the observed components of `x`.
pub fn log_likelihood(y: &[f64], x: &[f64], obs: &ObservationModel) -> f64 {
    const LOG_2PI: f64 = 1.837_877_066_409_345_3;
    let mut ll = 0.0;
    for ((yi, &idx), s) in y.iter().zip(obs.indices()).zip(obs.sigma()) {
        let r = (yi - x[idx]) / s;
        ll -= 0.5 * LOG_2PI + s.ln() + 0.5 * r * r;
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Normalised fitness weights `g ∝ w π(y | x̄)` on the linear scale.
pub fn fitness_weights(logw: &[f64], loglik: &[f64], step: usize) -> Result<Vec<f64>, SamplerError> {
    let sum: Vec<f64> = logw.iter().zip(loglik).map(|(a, b)| a + b).collect();
    let norm = normalize_log_weights(&sum).ok_or(SamplerError::TotalDegeneracy { step })?;
    let g: Vec<f64> = norm.iter().map(|l| l.exp()).collect();
    let total: f64 = g.iter().sum();
    Ok(g.iter().map(|v| v / total).collect())
}

/// Multinomial resampling. Particle `n`'s draw uses stream
/// `(time, n, resample)`, so the result does not depend on execution order.
pub fn resample_multinomial(g: &[f64], seed: u64, time: u64) -> Vec<usize> {
    let mut cum = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for w in g {
        acc += w;
        cum.push(acc);
    }
    let last_positive = g.iter().rposition(|w| *w > 0.0).unwrap_or(0);
    (0..g.len())
        .map(|n| {
            let u = RngStream::new(seed, time, n as u64, Purpose::Resample).uniform() * acc;
            cum.partition_point(|c| *c <= u).min(last_positive)
        })
        .collect()
}

/// `θ̄ + s L z` for one particle, with `z` from stream `(time, n, proliferate)`.
pub fn proliferate_one(theta_bar: &[f64], chol: &CholeskyFactor, s: f64, seed: u64, time: u64, n: usize) -> Vec<f64> {
    let z = RngStream::new(seed, time, n as u64, Purpose::Proliferate).normals(theta_bar.len());
    let step = chol.apply(&z);
    theta_bar.iter().zip(&step).map(|(t, d)| t + s * d).collect()
}

/// Draws `θⁿ ~ N(θ̄ⁿ, (1 - a²) C)` for every particle.
pub fn proliferate(
    theta_bar: &[Vec<f64>],
    cov: &DenseMatrix,
    a: f64,
    seed: u64,
    time: u64,
) -> Result<Vec<Vec<f64>>, SamplerError> {
    let chol = chol_psd(cov)?;
    let s = (1.0 - a * a).sqrt();
    Ok(theta_bar.iter().enumerate().map(|(n, t)| proliferate_one(t, &chol, s, seed, time, n)).collect())
}

/// `x + sqrt(Γ) ⊙ z` with `z` from stream `(time, n, innovate)`.
pub fn innovate(x: &[f64], gamma_diag: &[f64], seed: u64, time: u64, n: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed, time, n as u64, Purpose::Innovate);
    x.iter().zip(gamma_diag).map(|(xi, g)| xi + g.max(0.0).sqrt() * rng.standard_normal()).collect()
}

/// Normalised log-weights `∝ π(y | x, θ) / π(y | x̄, θ̄)`.
pub fn update_weights(loglik_new: &[f64], loglik_old: &[f64], step: usize) -> Result<Vec<f64>, SamplerError> {
    let diff: Vec<f64> = loglik_new
        .iter()
        .zip(loglik_old)
        .map(|(n, o)| if *n == f64::NEG_INFINITY || !o.is_finite() { f64::NEG_INFINITY } else { n - o })
        .collect();
    normalize_log_weights(&diff).ok_or(SamplerError::TotalDegeneracy { step })
}
