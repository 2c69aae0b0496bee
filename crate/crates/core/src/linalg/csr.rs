use super::{DenseMatrix, LinalgError, Result};
use crate::instrument::{self, Counter};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and there are no
/// duplicate entries. Explicit zeros are allowed (they arise when several
/// matrices are combined on a shared pattern).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(LinalgError::MalformedCsr(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(LinalgError::MalformedCsr("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[nrows] != values.len() {
            return Err(LinalgError::MalformedCsr("last row offset, col_indices and values lengths disagree".into()));
        }
        for i in 0..nrows {
            let (a, b) = (row_offsets[i], row_offsets[i + 1]);
            if a > b {
                return Err(LinalgError::MalformedCsr(format!("row_offsets decreases at row {i}")));
            }
            let cols = &col_indices[a..b];
            if cols.iter().any(|&c| c >= ncols) {
                return Err(LinalgError::MalformedCsr(format!("column index out of range in row {i}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::MalformedCsr(format!("columns not strictly increasing in row {i}")));
            }
        }
        Ok(Self { nrows, ncols, row_offsets, col_indices, values })
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= nrows || j >= ncols {
                return Err(LinalgError::MalformedCsr(format!("triplet ({i}, {j}) out of range")));
            }
        }
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut row_offsets = vec![0; nrows + 1];
        let mut col_indices: Vec<usize> = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self { nrows, ncols, row_offsets, col_indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, row_offsets: (0..=n).collect(), col_indices: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_offsets: vec![0; nrows + 1], col_indices: Vec::new(), values: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let k = next[j];
                col_indices[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_offsets, col_indices, values }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != other.nrows {
            return Err(LinalgError::DimensionMismatch { expected: self.ncols, got: other.nrows });
        }
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![false; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { nrows: self.nrows, ncols: other.ncols, row_offsets, col_indices, values })
    }

    /// `sum_k coeffs[k] * mats[k]` on the union sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let Some((_, first)) = terms.first() else {
            return Err(LinalgError::InvalidDimension("empty linear combination".into()));
        };
        let (nrows, ncols) = (first.nrows, first.ncols);
        for (_, m) in terms {
            if m.nrows != nrows || m.ncols != ncols {
                return Err(LinalgError::DimensionMismatch { expected: nrows * ncols, got: m.nrows * m.ncols });
            }
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; ncols];
        let mut seen = vec![false; ncols];
        let mut touched = Vec::new();
        for i in 0..nrows {
            for (c, m) in terms {
                for (j, v) in m.row(i) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += c * v;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_indices.push(j);
                values.push(acc[j]);
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { nrows, ncols, row_offsets, col_indices, values })
    }

    /// Re-expresses this matrix on a (super-)pattern, returning values aligned
    /// with `pattern`'s entries. Fails if an entry of `self` is missing there.
    pub fn values_on_pattern(&self, pattern: &CsrMatrix) -> Result<Vec<f64>> {
        if self.nrows != pattern.nrows || self.ncols != pattern.ncols {
            return Err(LinalgError::DimensionMismatch { expected: pattern.nrows, got: self.nrows });
        }
        let mut out = vec![0.0; pattern.nnz()];
        for i in 0..self.nrows {
            let r = pattern.row_offsets[i]..pattern.row_offsets[i + 1];
            let cols = &pattern.col_indices[r.clone()];
            for (j, v) in self.row(i) {
                let k = cols
                    .binary_search(&j)
                    .map_err(|_| LinalgError::MalformedCsr(format!("entry ({i}, {j}) not in pattern")))?;
                out[r.start + k] = v;
            }
        }
        Ok(out)
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<CsrMatrix> {
        if values.len() != self.nnz() {
            return Err(LinalgError::DimensionMismatch { expected: self.nnz(), got: values.len() });
        }
        Ok(CsrMatrix { values, ..self.clone_pattern() })
    }

    fn clone_pattern(&self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: Vec::new(),
        }
    }

    /// `I - c * self` for a square matrix.
    pub fn identity_minus_scaled(&self, c: f64) -> Result<CsrMatrix> {
        if self.nrows != self.ncols {
            return Err(LinalgError::InvalidDimension(format!("{}x{} is not square", self.nrows, self.ncols)));
        }
        let n = self.nrows;
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        for i in 0..n {
            let mut diag_done = false;
            for (j, v) in self.row(i) {
                if !diag_done && j > i {
                    col_indices.push(i);
                    values.push(1.0);
                    diag_done = true;
                }
                if j == i {
                    col_indices.push(j);
                    values.push(1.0 - c * v);
                    diag_done = true;
                } else {
                    col_indices.push(j);
                    values.push(-(c * v));
                }
            }
            if !diag_done {
                col_indices.push(i);
                values.push(1.0);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(CsrMatrix { nrows: n, ncols: n, row_offsets, col_indices, values })
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch { expected: self.ncols, got: x.len() });
        }
        if y.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch { expected: self.nrows, got: y.len() });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_offsets[i]..self.row_offsets[i + 1];
            *yi = self.col_indices[r.clone()].iter().zip(&self.values[r]).map(|(&j, &v)| v * x[j]).sum();
        }
        Ok(())
    }

    /// `1ᵀ A` as a vector of column sums.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.ncols];
        for (j, v) in self.col_indices.iter().zip(&self.values) {
            s[*j] += v;
        }
        s
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    pub fn from_dense(d: &DenseMatrix) -> CsrMatrix {
        let mut row_offsets = Vec::with_capacity(d.nrows() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix { nrows: d.nrows(), ncols: d.ncols(), row_offsets, col_indices, values }
    }
}

/// Periodic first-difference matrix: 1 on the diagonal, -1 on the
/// subdiagonal and -1 in the top-right corner.
pub fn periodic_diff_matrix(n: usize) -> Result<CsrMatrix> {
    periodic_diff_matrix_scaled(n, 1.0)
}

/// [`periodic_diff_matrix`] with every entry multiplied by `scale`
/// (e.g. a 1/Δx grid-spacing factor).
pub fn periodic_diff_matrix_scaled(n: usize, scale: f64) -> Result<CsrMatrix> {
    if n < 2 {
        return Err(LinalgError::InvalidDimension(format!("periodic stencil needs n >= 2, got {n}")));
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(2 * n);
    let mut values = Vec::with_capacity(2 * n);
    row_offsets.push(0);
    // row 0: diagonal then wrap-around corner
    col_indices.extend([0, n - 1]);
    values.extend([scale, -scale]);
    row_offsets.push(2);
    for i in 1..n {
        col_indices.extend([i - 1, i]);
        values.extend([-scale, scale]);
        row_offsets.push(col_indices.len());
    }
    Ok(CsrMatrix { nrows: n, ncols: n, row_offsets, col_indices, values })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> Result<CsrMatrix> {
    instrument::bump(Counter::Kron);
    let nnz = a.nnz().checked_mul(b.nnz()).ok_or(LinalgError::Allocation(usize::MAX))?;
    let nrows = a.nrows * b.nrows;
    let mut col_indices: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut row_offsets: Vec<usize> = Vec::new();
    col_indices.try_reserve_exact(nnz).map_err(|_| LinalgError::Allocation(nnz))?;
    values.try_reserve_exact(nnz).map_err(|_| LinalgError::Allocation(nnz))?;
    row_offsets.try_reserve_exact(nrows + 1).map_err(|_| LinalgError::Allocation(nrows + 1))?;
    row_offsets.push(0);
    for ia in 0..a.nrows {
        for ib in 0..b.nrows {
            // columns of a's row ascend, and within each block b's columns ascend
            for (ja, va) in a.row(ia) {
                for (jb, vb) in b.row(ib) {
                    col_indices.push(ja * b.ncols + jb);
                    values.push(va * vb);
                }
            }
            row_offsets.push(col_indices.len());
        }
    }
    Ok(CsrMatrix { nrows, ncols: a.ncols * b.ncols, row_offsets, col_indices, values })
}

pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; a.nrows];
    a.spmv_into(x, &mut y)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_rows(m: &CsrMatrix) -> Vec<Vec<f64>> {
        let d = m.to_dense();
        (0..d.nrows()).map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect()).collect()
    }

    #[test]
    fn periodic_two_by_two() {
        let l = periodic_diff_matrix(2).unwrap();
        assert_eq!(dense_rows(&l), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn periodic_three_by_three() {
        let l = periodic_diff_matrix(3).unwrap();
        assert_eq!(dense_rows(&l), vec![vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0], vec![0.0, -1.0, 1.0]]);
    }

    #[test]
    fn periodic_rejects_tiny() {
        assert!(matches!(periodic_diff_matrix(1), Err(LinalgError::InvalidDimension(_))));
        assert!(periodic_diff_matrix(0).is_err());
    }

    #[test]
    fn periodic_two_nonzeros_per_row_and_column() {
        for n in 2..12 {
            let l = periodic_diff_matrix(n).unwrap();
            assert_eq!(l.nnz(), 2 * n);
            let t = l.transpose();
            for i in 0..n {
                assert_eq!(l.row(i).count(), 2);
                assert_eq!(t.row(i).count(), 2);
            }
            assert!(spmv(&l, &vec![1.0; n]).unwrap().iter().all(|&v| v == 0.0));
            assert!(l.column_sums().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kron_identity_left_is_block_diagonal() {
        let l = periodic_diff_matrix(2).unwrap();
        let k = kron(&CsrMatrix::identity(2), &l).unwrap();
        assert_eq!(
            dense_rows(&k),
            vec![
                vec![1.0, -1.0, 0.0, 0.0],
                vec![-1.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, -1.0],
                vec![0.0, 0.0, -1.0, 1.0],
            ]
        );
    }

    #[test]
    fn kron_identity_right_strides() {
        // hand expansion of [[1,-1],[-1,1]] ⊗ I2
        let l = periodic_diff_matrix(2).unwrap();
        let k = kron(&l, &CsrMatrix::identity(2)).unwrap();
        assert_eq!(
            dense_rows(&k),
            vec![
                vec![1.0, 0.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.0, -1.0],
                vec![-1.0, 0.0, 1.0, 0.0],
                vec![0.0, -1.0, 0.0, 1.0],
            ]
        );
    }

    #[test]
    fn kron_with_scalar_identity() {
        let l = periodic_diff_matrix(5).unwrap();
        let k = kron(&l, &CsrMatrix::identity(1)).unwrap();
        assert_eq!(k, l);
        assert_eq!(kron(&l, &l).unwrap().nnz(), l.nnz() * l.nnz());
    }

    #[test]
    fn spmv_examples() {
        let l3 = periodic_diff_matrix(3).unwrap();
        assert_eq!(spmv(&l3, &[1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let id = CsrMatrix::identity(4);
        assert_eq!(spmv(&id, &[1.0, -2.0, 3.5, 0.25]).unwrap(), vec![1.0, -2.0, 3.5, 0.25]);
        let l2 = periodic_diff_matrix(2).unwrap();
        assert_eq!(spmv(&l2, &[2.0, 5.0]).unwrap(), vec![-3.0, 3.0]);
        assert!(matches!(spmv(&l2, &[1.0]), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn validation_rejects_bad_structure() {
        assert!(CsrMatrix::new(2, 2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_ok());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 2], vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![1, 1, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn identity_minus_scaled_inserts_missing_diagonal() {
        let l = periodic_diff_matrix(3).unwrap();
        let off = CsrMatrix::linear_combination(&[(1.0, &l), (-1.0, &CsrMatrix::identity(3))]).unwrap();
        let m = off.identity_minus_scaled(2.0).unwrap();
        let expected = {
            let mut d = DenseMatrix::identity(3);
            let o = off.to_dense();
            for i in 0..3 {
                for j in 0..3 {
                    d[(i, j)] -= 2.0 * o[(i, j)];
                }
            }
            d
        };
        assert_eq!(m.to_dense(), expected);
    }

    fn small_csr() -> impl Strategy<Value = CsrMatrix> {
        (1usize..4, 1usize..4).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::option::weighted(0.6, -3.0f64..3.0), r * c).prop_map(move |cells| {
                let trip: Vec<_> = cells.iter().enumerate().filter_map(|(k, v)| v.map(|v| (k / c, k % c, v))).collect();
                CsrMatrix::from_triplets(r, c, &trip).unwrap()
            })
        })
    }

    fn kron_vec(x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
    }

    proptest! {
        #[test]
        fn kron_mixed_product(a in small_csr(), b in small_csr(), seed in prop::collection::vec(-2.0f64..2.0, 8)) {
            let x: Vec<f64> = (0..a.ncols()).map(|i| seed[i]).collect();
            let y: Vec<f64> = (0..b.ncols()).map(|i| seed[4 + i]).collect();
            let k = kron(&a, &b).unwrap();
            prop_assert_eq!(k.nnz(), a.nnz() * b.nnz());
            let lhs = spmv(&k, &kron_vec(&x, &y)).unwrap();
            let rhs = kron_vec(&spmv(&a, &x).unwrap(), &spmv(&b, &y).unwrap());
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
            // structure stays valid
            prop_assert!(CsrMatrix::new(k.nrows(), k.ncols(), k.row_offsets().to_vec(),
                k.col_indices().to_vec(), k.values().to_vec()).is_ok());
        }

        #[test]
        fn transpose_matmul_agree_with_dense(a in small_csr(), b in small_csr()) {
            let at = a.transpose();
            prop_assert_eq!(at.transpose(), a.clone());
            if a.ncols() == b.nrows() {
                let p = a.matmul(&b).unwrap().to_dense();
                let (ad, bd) = (a.to_dense(), b.to_dense());
                for i in 0..a.nrows() {
                    for j in 0..b.ncols() {
                        let s: f64 = (0..a.ncols()).map(|k| ad[(i, k)] * bd[(k, j)]).sum();
                        prop_assert!((p[(i, j)] - s).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
