//! Dense linear-algebra helpers shared by the certification pipeline:
//! SVD null spaces, orthonormal ranges and complements, sorted symmetric
//! eigendecompositions and principal angles between subspaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Orthonormal basis (as columns) of the null space of `a`.
///
/// A singular value counts as zero when it is at most `tol_rel * σ_max`, or at
/// most `tol_abs` when every singular value is below `tol_abs`.
pub fn null_space(a: &DMatrix<f64>, tol_rel: f64, tol_abs: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s_max = svd.singular_values.max();
    let threshold = if s_max > tol_abs { tol_rel * s_max } else { tol_abs };
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= threshold)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    columns(n, &cols)
}

/// Orthonormal basis of the column span of `a` with the same thresholding as
/// [`null_space`].
pub fn range_basis(a: &DMatrix<f64>, tol_rel: f64, tol_abs: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let cols = a.ncols().max(n);
    let mut padded = DMatrix::zeros(n, cols);
    padded.view_mut((0, 0), (n, a.ncols())).copy_from(a);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    if s_max <= tol_abs {
        return DMatrix::zeros(n, 0);
    }
    let threshold = tol_rel * s_max;
    let kept: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > threshold)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    columns(n, &kept)
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `basis` in `R^n`.
pub fn orthogonal_complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    null_space(&basis.transpose(), 1e-10, 1e-14)
}

/// Assemble column vectors of length `n` into a matrix (`n × 0` when empty).
pub fn columns(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<DVector<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    (values, columns(n, &vecs))
}

/// Largest principal angle (radians) between the spans of two orthonormal
/// bases. Subspaces of different dimension are at angle `π/2`.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    // sin θ_max = ‖(I − A Aᵀ) B‖₂, which stays accurate for tiny angles.
    let residual = b - a * (a.transpose() * b);
    let sin = residual.svd(false, false).singular_values.max().min(1.0);
    sin.asin()
}

/// Largest distance of the orthonormal columns of `b` from the span of the
/// orthonormal columns of `a`.
pub fn subspace_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    }
    let residual = b - a * (a.transpose() * b);
    residual.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Minimal-norm least-squares solution of `a x = b` via the SVD, with
/// singular values below `tol_rel * σ_max` treated as zero. Returns the
/// solution and the dimension of the numerical null space of `a`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, tol_rel: f64) -> (DVector<f64>, usize) {
    let n = a.ncols();
    if n == 0 {
        return (DVector::zeros(0), 0);
    }
    if a.nrows() == 0 {
        return (DVector::zeros(n), n);
    }
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let threshold = (tol_rel * s_max).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > threshold).count();
    let x = svd.solve(b, threshold).unwrap_or_else(|_| DVector::zeros(n));
    (x, n - rank)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn null_space_of_wide_matrix_is_complete() {
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]);
        let k = null_space(&a, 1e-8, 1e-14);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-14);
        assert_relative_eq!((k.transpose() * &k), DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn null_space_of_zero_rows_is_everything() {
        let a = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(null_space(&a, 1e-8, 1e-14).ncols(), 4);
        let z = DMatrix::<f64>::zeros(2, 3);
        assert_eq!(null_space(&z, 1e-8, 1e-14).ncols(), 3);
    }

    #[test]
    fn range_and_complement_split_space() {
        let a = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let r = range_basis(&a, 1e-10, 1e-14);
        assert_eq!(r.ncols(), 1);
        let c = orthogonal_complement(&r, 3);
        assert_eq!(c.ncols(), 2);
        assert!((r.transpose() * c).norm() < 1e-14);
    }

    #[test]
    fn principal_angle_between_lines() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let t: f64 = 0.3;
        let b = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        assert_relative_eq!(largest_principal_angle(&a, &b), t, epsilon = 1e-14);
        let tiny: f64 = 1e-9;
        let c = DMatrix::from_column_slice(2, 1, &[tiny.cos(), tiny.sin()]);
        assert_relative_eq!(largest_principal_angle(&a, &c), tiny, max_relative = 1e-6);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, vecs) = sorted_symmetric_eigen(&m);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert_relative_eq!(vecs.column(0).abs(), DVector::from_vec(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn min_norm_solve_reports_null_dim() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, null) = min_norm_solve(&a, &DVector::from_vec(vec![2.0]), 1e-12);
        assert_eq!(null, 1);
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
    }
}
