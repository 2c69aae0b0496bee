use super::{check_dims, Jacobian, ModelError, OdeModel, ParamSpec, Transform};
use crate::linalg::{kron, periodic_diff_matrix_scaled, CsrMatrix};

/// Standard deviations of the six initial plumes.
pub const PLUME_WIDTHS: [f64; 6] = [0.04, 0.08, 0.07, 0.10, 0.05, 0.06];
pub const PLUME_CENTERS_X: [f64; 6] = [0.20, 0.30, 0.40, 0.50, 0.50, 0.70];
pub const PLUME_CENTERS_Y: [f64; 6] = [0.80, 0.40, 0.40, 0.50, 0.60, 0.50];

/// Diffusion tensor entries from the Cholesky factor `K = [k1 k3; 0 k2]`,
/// `D = KᵀK`: returns `(d11, d12, d22)`.
pub fn cholesky_to_diffusion(k1: f64, k2: f64, k3: f64) -> Result<(f64, f64, f64), ModelError> {
    if !(k1 > 0.0) || !(k2 > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "Cholesky diagonal must be positive, got k1 = {k1}, k2 = {k2}"
        )));
    }
    Ok((k1 * k1, k1 * k3, k2 * k2 + k3 * k3))
}

/// Sum of six Gaussian plumes sampled on the periodic `ñ × ñ` grid
/// (`ñ = n - 1`, spacing `1/ñ`), stacked with x varying fastest.
pub fn gaussian_plume_ic(n: usize) -> Result<Vec<f64>, ModelError> {
    if n < 3 {
        return Err(ModelError::InvalidParameter(format!("grid parameter n must be >= 3, got {n}")));
    }
    let m = n - 1;
    let h = 1.0 / m as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut u = Vec::with_capacity(m * m);
    for iy in 0..m {
        let y = iy as f64 * h;
        for ix in 0..m {
            let x = ix as f64 * h;
            let v: f64 = (0..6)
                .map(|i| {
                    let g = PLUME_WIDTHS[i];
                    let r2 = (x - PLUME_CENTERS_X[i]).powi(2) + (y - PLUME_CENTERS_Y[i]).powi(2);
                    (-r2 / (2.0 * g * g)).exp() / (g * norm)
                })
                .sum();
            u.push(v);
        }
    }
    Ok(u)
}

/// Periodic 2-D advection-diffusion, semi-discretised as `U' = L(θ) U` with
///
/// ```text
/// L = -(k1² B1ᵀB1 + k1k3 (B1ᵀB2 + B2ᵀB1) + (k2²+k3²) B2ᵀB2) + c1 B1 + c2 B2
/// ```
///
/// where `B1 = I ⊗ ℓ` and `B2 = ℓ ⊗ I`. The difference operators and their
/// Gram matrices are built once; assembling `L` for a parameter vector is a
/// linear combination of cached values on a shared sparsity pattern.
#[derive(Debug, Clone)]
pub struct AdvDiffModel {
    n: usize,
    m: usize,
    stencil_scale: f64,
    b1: CsrMatrix,
    b2: CsrMatrix,
    g11: CsrMatrix,
    g22: CsrMatrix,
    g12: CsrMatrix,
    pattern: CsrMatrix,
    // cached matrices re-expressed on `pattern`: g11, g12, g22, b1, b2
    aligned: [Vec<f64>; 5],
    params: [ParamSpec; 5],
}

impl AdvDiffModel {
    pub fn new(n: usize) -> Result<Self, ModelError> {
        Self::with_stencil_scale(n, 1.0)
    }

    /// `stencil_scale` multiplies the periodic difference matrix ℓ
    /// (1 reproduces the unscaled stencil).
    pub fn with_stencil_scale(n: usize, stencil_scale: f64) -> Result<Self, ModelError> {
        if n < 3 {
            return Err(ModelError::InvalidParameter(format!("grid parameter n must be >= 3, got {n}")));
        }
        let m = n - 1;
        let ell = periodic_diff_matrix_scaled(m, stencil_scale)?;
        let id = CsrMatrix::identity(m);
        let b1 = kron(&id, &ell)?;
        let b2 = kron(&ell, &id)?;
        let (b1t, b2t) = (b1.transpose(), b2.transpose());
        let g11 = b1t.matmul(&b1)?;
        let g22 = b2t.matmul(&b2)?;
        let g12 = CsrMatrix::linear_combination(&[(1.0, &b1t.matmul(&b2)?), (1.0, &b2t.matmul(&b1)?)])?;
        let pattern = CsrMatrix::linear_combination(&[(1.0, &g11), (1.0, &g12), (1.0, &g22), (1.0, &b1), (1.0, &b2)])?;
        let aligned = [
            g11.values_on_pattern(&pattern)?,
            g12.values_on_pattern(&pattern)?,
            g22.values_on_pattern(&pattern)?,
            b1.values_on_pattern(&pattern)?,
            b2.values_on_pattern(&pattern)?,
        ];
        let params = [
            ParamSpec { name: "k1", transform: Transform::Log },
            ParamSpec { name: "k2", transform: Transform::Log },
            ParamSpec { name: "k3", transform: Transform::Identity },
            ParamSpec { name: "c1", transform: Transform::Identity },
            ParamSpec { name: "c2", transform: Transform::Identity },
        ];
        Ok(Self { n, m, stencil_scale, b1, b2, g11, g22, g12, pattern, aligned, params })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid points per direction, `ñ = n - 1`.
    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn stencil_scale(&self) -> f64 {
        self.stencil_scale
    }

    pub fn b1(&self) -> &CsrMatrix {
        &self.b1
    }

    pub fn b2(&self) -> &CsrMatrix {
        &self.b2
    }

    pub fn g11(&self) -> &CsrMatrix {
        &self.g11
    }

    pub fn g12(&self) -> &CsrMatrix {
        &self.g12
    }

    pub fn g22(&self) -> &CsrMatrix {
        &self.g22
    }

    pub fn initial_condition(&self) -> Vec<f64> {
        gaussian_plume_ic(self.n).expect("n validated at construction")
    }

    #[inline]
    fn coefficients(theta: &[f64]) -> [f64; 5] {
        let (k1, k2, k3, c1, c2) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        [k1 * k1, k1 * k3, k2 * k2 + k3 * k3, c1, c2]
    }

    #[inline]
    fn entry(&self, w: &[f64; 5], k: usize) -> f64 {
        let a = &self.aligned;
        -(w[0] * a[0][k] + w[1] * a[1][k] + w[2] * a[2][k]) + w[3] * a[3][k] + w[4] * a[4][k]
    }

    /// The operator matrix `L(θ)` for `θ = (k1, k2, k3, c1, c2)`.
    pub fn assemble_operator(&self, theta: &[f64]) -> Result<CsrMatrix, ModelError> {
        if theta.len() != 5 {
            return Err(ModelError::Dimension { what: "parameters", expected: 5, got: theta.len() });
        }
        let w = Self::coefficients(theta);
        let values = (0..self.pattern.nnz()).map(|k| self.entry(&w, k)).collect();
        Ok(self.pattern.with_values(values)?)
    }
}

impl OdeModel for AdvDiffModel {
    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        check_dims(self, x, theta)?;
        let w = Self::coefficients(theta);
        let (offsets, cols) = (self.pattern.row_offsets(), self.pattern.col_indices());
        for (i, o) in out.iter_mut().enumerate() {
            *o = (offsets[i]..offsets[i + 1]).map(|k| self.entry(&w, k) * x[cols[k]]).sum();
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, x: &[f64], theta: &[f64]) -> Result<Jacobian, ModelError> {
        check_dims(self, x, theta)?;
        Ok(Jacobian::Sparse(self.assemble_operator(theta)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::{self, Counter};
    use crate::linalg::{spmv, DenseMatrix};
    use crate::models::fd;
    use proptest::prelude::*;

    const TRUTH: [f64; 5] = [9.0, 4.0, 6.0, 2.5, -1.5];

    #[test]
    fn diffusion_from_reference_factor() {
        assert_eq!(cholesky_to_diffusion(9.0, 4.0, 6.0).unwrap(), (81.0, 54.0, 52.0));
        assert_eq!(cholesky_to_diffusion(1.0, 1.0, 0.0).unwrap(), (1.0, 0.0, 1.0));
        assert!(cholesky_to_diffusion(0.0, 1.0, 0.0).is_err());
        assert!(cholesky_to_diffusion(1.0, -1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn diffusion_determinant_positive(k1 in 0.01f64..10.0, k2 in 0.01f64..10.0, k3 in -10.0f64..10.0) {
            let (d11, d12, d22) = cholesky_to_diffusion(k1, k2, k3).unwrap();
            let det = d11 * d22 - d12 * d12;
            let expect = k1 * k1 * k2 * k2;
            prop_assert!(det > 0.0);
            prop_assert!((det - expect).abs() <= 1e-9 * (d11 * d22));
        }

        #[test]
        fn advection_enters_linearly(k in prop::collection::vec(-16i32..16, 3), c in prop::collection::vec(-16i32..16, 2)) {
            // quarter-integer parameters keep every product exact
            let model = AdvDiffModel::new(5).unwrap();
            let q = |v: i32| v as f64 / 4.0;
            let plus = model.assemble_operator(&[q(k[0]), q(k[1]), q(k[2]), q(c[0]), q(c[1])]).unwrap();
            let minus = model.assemble_operator(&[q(k[0]), q(k[1]), q(k[2]), -q(c[0]), -q(c[1])]).unwrap();
            let zero = model.assemble_operator(&[q(k[0]), q(k[1]), q(k[2]), 0.0, 0.0]).unwrap();
            for ((a, b), z) in plus.values().iter().zip(minus.values()).zip(zero.values()) {
                prop_assert_eq!(a + b, 2.0 * z);
            }
        }

        #[test]
        fn advection_linear_random(k in prop::collection::vec(-5.0f64..5.0, 3), c in prop::collection::vec(-5.0f64..5.0, 2)) {
            let model = AdvDiffModel::new(4).unwrap();
            let plus = model.assemble_operator(&[k[0], k[1], k[2], c[0], c[1]]).unwrap();
            let minus = model.assemble_operator(&[k[0], k[1], k[2], -c[0], -c[1]]).unwrap();
            let zero = model.assemble_operator(&[k[0], k[1], k[2], 0.0, 0.0]).unwrap();
            for ((a, b), z) in plus.values().iter().zip(minus.values()).zip(zero.values()) {
                prop_assert!((a + b - 2.0 * z).abs() <= 1e-12 * (1.0 + z.abs()));
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_operator() {
        let model = AdvDiffModel::new(6).unwrap();
        let l = model.assemble_operator(&[0.0; 5]).unwrap();
        assert!(l.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_x_advection_is_b1() {
        let model = AdvDiffModel::new(6).unwrap();
        let l = model.assemble_operator(&[0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(l.to_dense(), model.b1().to_dense());
    }

    #[test]
    fn operator_annihilates_constants() {
        let model = AdvDiffModel::new(5).unwrap();
        let l = model.assemble_operator(&TRUTH).unwrap();
        let ones = vec![1.0; model.dim()];
        assert!(spmv(&l, &ones).unwrap().iter().all(|v| v.abs() <= 1e-10));
        assert!(l.column_sums().iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn operator_matches_dense_formula() {
        let model = AdvDiffModel::new(4).unwrap();
        let l = model.assemble_operator(&TRUTH).unwrap().to_dense();
        let (b1, b2) = (model.b1().to_dense(), model.b2().to_dense());
        let tt = |a: &DenseMatrix, b: &DenseMatrix| a.transpose().matmul(b).unwrap();
        let [k1, k2, k3, c1, c2] = TRUTH;
        let n = model.dim();
        let (g11, g22, g12a, g12b) = (tt(&b1, &b1), tt(&b2, &b2), tt(&b1, &b2), tt(&b2, &b1));
        for i in 0..n {
            for j in 0..n {
                let e = -(k1 * k1 * g11[(i, j)]
                    + k1 * k3 * (g12a[(i, j)] + g12b[(i, j)])
                    + (k2 * k2 + k3 * k3) * g22[(i, j)])
                    + c1 * b1[(i, j)]
                    + c2 * b2[(i, j)];
                assert!((l[(i, j)] - e).abs() <= 1e-12 * (1.0 + e.abs()));
            }
        }
    }

    #[test]
    fn b_matrices_follow_kronecker_order() {
        let model = AdvDiffModel::new(4).unwrap();
        let m = model.grid_size();
        // B1 differences along x (fast index), B2 along y (stride m)
        assert_eq!(model.b1().get(1, 0), -1.0);
        assert_eq!(model.b1().get(0, m - 1), -1.0);
        assert_eq!(model.b2().get(m, 0), -1.0);
        assert_eq!(model.b2().get(0, m * (m - 1)), -1.0);
    }

    #[test]
    fn rhs_equals_assembled_spmv_and_jacobian_is_operator() {
        let model = AdvDiffModel::new(6).unwrap();
        let x = model.initial_condition();
        let l = model.assemble_operator(&TRUTH).unwrap();
        assert_eq!(model.eval_rhs(0.0, &x, &TRUTH).unwrap(), spmv(&l, &x).unwrap());
        let fdj = fd::jacobian(&model, 0.0, &x, &TRUTH);
        let jd = model.jacobian(0.0, &x, &TRUTH).unwrap().to_dense();
        for i in 0..model.dim() {
            for j in 0..model.dim() {
                assert!((jd[(i, j)] - fdj[i][j]).abs() <= 1e-5 * jd[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn assembly_reuses_cached_matrices() {
        let model = AdvDiffModel::new(20).unwrap();
        instrument::reset();
        let start = std::time::Instant::now();
        for i in 0..1000 {
            let th = [9.0 + i as f64 * 1e-3, 4.0, 6.0, 2.5, -1.5];
            std::hint::black_box(model.assemble_operator(&th).unwrap());
        }
        assert_eq!(instrument::count(Counter::Kron), 0);
        assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
    }

    #[test]
    fn plume_values() {
        let u = gaussian_plume_ic(11).unwrap();
        assert_eq!(u.len(), 100);
        assert!(u.iter().all(|&v| v > 0.0));
        // (0.2, 0.8) sits on the grid for ñ = 10: ix = 2, iy = 8
        let peak = 1.0 / (0.04 * (2.0 * std::f64::consts::PI).sqrt());
        assert!(u[2 + 10 * 8] >= peak);
        assert!(u[0] < 0.2);
        assert!(gaussian_plume_ic(2).is_err());
    }

    #[test]
    fn small_grid_rejected() {
        assert!(AdvDiffModel::new(2).is_err());
    }
}
