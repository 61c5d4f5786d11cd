use nalgebra::DMatrix;

/// Dense Jacobian, one row per scalar output.
///
/// For projections the rows are ordered per point, `u` then `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlock(pub DMatrix<f64>);

impl JacobianBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        JacobianBlock(DMatrix::zeros(rows, cols))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Columns `cols` of the block, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        self.0.select_columns(cols)
    }

    /// Ratio of the smallest to the largest singular value of the given
    /// columns after scaling each column to unit norm.
    ///
    /// Returns 0 when any selected column is identically zero.
    pub fn column_condition_ratio(&self, cols: &[usize]) -> f64 {
        condition_ratio(&self.select_columns(cols))
    }
}

impl std::ops::Index<(usize, usize)> for JacobianBlock {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// `sigma_min / sigma_max` of `m` with unit-normalised columns.
pub fn condition_ratio(m: &DMatrix<f64>) -> f64 {
    let mut scaled = m.clone();
    for mut col in scaled.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 || !n.is_finite() {
            return 0.0;
        }
        col /= n;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0.0;
    }
    sv.min() / max
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_columns_are_perfectly_conditioned() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 5.0, 0.0, 0.0]);
        assert!((condition_ratio(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_columns_have_zero_ratio() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        assert!(condition_ratio(&m) < 1e-12);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 0.0]);
        assert_eq!(condition_ratio(&z), 0.0);
    }
}
