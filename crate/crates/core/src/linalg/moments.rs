use super::{DenseMatrix, LinalgError, Result};

/// Diagonal jitter multipliers tried by [`chol_psd`], in units of `trace(C)/p`.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weighted mean `Σ wₙ θₙ` and covariance `Σ wₙ (θₙ - θ̄)(θₙ - θ̄)ᵀ`
/// (no small-sample correction).
///
/// `params` is an N×p row-major matrix.
pub fn weighted_mean_cov(params: &[f64], p: usize, weights: &[f64]) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = weights.len();
    if params.len() != n * p {
        return Err(LinalgError::DimensionMismatch { expected: n * p, got: params.len() });
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
        return Err(LinalgError::InvalidWeights { sum });
    }
    let mut mean = vec![0.0; p];
    for (row, &w) in params.chunks_exact(p.max(1)).zip(weights) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += w * v;
        }
    }
    let mut cov = DenseMatrix::zeros(p, p);
    let mut dev = vec![0.0; p];
    for (row, &w) in params.chunks_exact(p.max(1)).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for k in 0..p {
            dev[k] = row[k] - mean[k];
        }
        for a in 0..p {
            let wa = w * dev[a];
            for b in a..p {
                cov[(a, b)] += wa * dev[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    Ok((mean, cov))
}

/// Lower-triangular factor of `C + εI` together with the jitter used.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub lower: DenseMatrix,
    pub jitter: f64,
}

impl CholeskyFactor {
    /// `L z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let p = self.lower.nrows();
        (0..p).map(|i| (0..=i).map(|k| self.lower[(i, k)] * z[k]).sum()).collect()
    }
}

/// Cholesky factorization of a symmetric positive semidefinite matrix,
/// escalating a diagonal jitter along [`JITTER_LADDER`] until it succeeds.
pub fn chol_psd(c: &DenseMatrix) -> Result<CholeskyFactor> {
    if !c.is_square() {
        return Err(LinalgError::InvalidDimension(format!("{}x{} is not square", c.nrows(), c.ncols())));
    }
    let p = c.nrows();
    let scale = c.values().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0_f64;
    for i in 0..p {
        for j in 0..i {
            asym = asym.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * scale {
        return Err(LinalgError::NotSymmetric(asym));
    }
    if p == 0 {
        return Ok(CholeskyFactor { lower: DenseMatrix::zeros(0, 0), jitter: 0.0 });
    }
    let trace: f64 = (0..p).map(|i| c[(i, i)]).sum();
    if trace == 0.0 && c.values().iter().all(|&v| v == 0.0) {
        return Ok(CholeskyFactor { lower: DenseMatrix::zeros(p, p), jitter: 0.0 });
    }
    if !(trace > 0.0) {
        return Err(LinalgError::DegenerateCovariance);
    }
    let unit = trace / p as f64;
    for &mult in &JITTER_LADDER {
        let eps = mult * unit;
        if let Some(lower) = cholesky(c, eps) {
            return Ok(CholeskyFactor { lower, jitter: eps });
        }
    }
    Err(LinalgError::DegenerateCovariance)
}

fn cholesky(c: &DenseMatrix, eps: f64) -> Option<DenseMatrix> {
    let p = c.nrows();
    let mut l = DenseMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = c[(j, j)] + eps;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..p {
            let mut s = 0.5 * (c[(i, j)] + c[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}
