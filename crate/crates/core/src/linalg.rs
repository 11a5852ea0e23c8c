//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::DMatrix;

/// Orthonormal basis of a numerical null space.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Columns span the null space.
    pub basis: DMatrix<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Absolute cutoff used: `rel_tol * sigma_max`.
    pub cutoff: f64,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// The singular values on either side of the cutoff: the smallest one kept
    /// in the range and the largest one declared null.
    pub fn borderline(&self) -> (Option<f64>, Option<f64>) {
        let rank = self.singular_values.len() - self.dim().min(self.singular_values.len());
        let kept = rank.checked_sub(1).map(|i| self.singular_values[i]);
        let dropped = self.singular_values.get(rank).copied();
        (kept, dropped)
    }
}

/// Null space of `a` (as a map on column vectors) by SVD. Singular values
/// below `rel_tol * sigma_max` count as zero. Wide matrices are padded with
/// zero rows so every right singular vector is available.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> NullSpace {
    let (m, n) = a.shape();
    if n == 0 {
        return NullSpace {
            basis: DMatrix::zeros(0, 0),
            singular_values: Vec::new(),
            cutoff: 0.0,
        };
    }
    let padded;
    let work = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        padded = p;
        &padded
    } else {
        a
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * smax;
    let null_rows: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    let mut basis = DMatrix::zeros(n, null_rows.len());
    for (c, &r) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(r).transpose());
    }
    NullSpace {
        basis,
        singular_values,
        cutoff,
    }
}

/// Orthonormal basis for the column span of `a` (rank by relative cutoff).
pub fn column_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(m, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax)
        .collect();
    let mut out = DMatrix::zeros(m, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Spectral-norm distance `||U U^T - V V^T||_2` between the subspaces spanned
/// by the orthonormal columns of `u` and `v`. Equals 1 when dimensions differ.
pub fn subspace_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let pu = u * u.transpose();
    let pv = v * v.transpose();
    spectral_norm(&(pu - pv))
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Solves a symmetric positive definite tridiagonal system in place
/// (Thomas algorithm). `diag` has length `n`, `off` length `n - 1`.
pub fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    rhs[0] /= d;
    for i in 1..n {
        c[i - 1] = off[i - 1] / d;
        d = diag[i] - off[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Number of eigenvalues below `shift` of the symmetric tridiagonal pencil
/// `(K, M)`, by Sylvester inertia of `K - shift M`.
pub fn tridiagonal_pencil_count_below(
    k_diag: &[f64],
    k_off: &[f64],
    m_diag: &[f64],
    m_off: &[f64],
    shift: f64,
) -> usize {
    let n = k_diag.len();
    let mut count = 0;
    let mut d_prev = 0.0;
    for i in 0..n {
        let a = k_diag[i] - shift * m_diag[i];
        let d = if i == 0 {
            a
        } else {
            let b = k_off[i - 1] - shift * m_off[i - 1];
            let prev = if d_prev == 0.0 { f64::MIN_POSITIVE } else { d_prev };
            a - b * b / prev
        };
        if d < 0.0 {
            count += 1;
        }
        d_prev = d;
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.dim(), 1);
        let v = ns.basis.column(0);
        assert!((v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_null_space() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.dim(), 2);
        assert!((&a * &ns.basis).norm() < 1e-14);
    }

    #[test]
    fn thomas_matches_dense() {
        let diag = [4.0, 5.0, 6.0, 3.0];
        let off = [1.0, -2.0, 0.5];
        let mut x = [1.0, 2.0, 3.0, 4.0];
        solve_spd_tridiagonal(&diag, &off, &mut x);
        let mut a = DMatrix::zeros(4, 4);
        for i in 0..4 {
            a[(i, i)] = diag[i];
        }
        for i in 0..3 {
            a[(i, i + 1)] = off[i];
            a[(i + 1, i)] = off[i];
        }
        let r = a * DVector::from_column_slice(&x) - DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn inertia_counts_eigenvalues() {
        // K = diag(1,2,3), M = I
        let k = [1.0, 2.0, 3.0];
        let m = [1.0, 1.0, 1.0];
        assert_eq!(tridiagonal_pencil_count_below(&k, &[0.0, 0.0], &m, &[0.0, 0.0], 2.5), 2);
        assert_eq!(tridiagonal_pencil_count_below(&k, &[0.0, 0.0], &m, &[0.0, 0.0], 0.5), 0);
    }

    #[test]
    fn subspace_distance_basics() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(subspace_distance(&e1, &e1) < 1e-15);
        assert!((subspace_distance(&e1, &e2) - 1.0).abs() < 1e-14);
    }
}
