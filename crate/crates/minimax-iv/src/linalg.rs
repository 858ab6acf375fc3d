//! Small dense linear-algebra helpers shared by the operator and geometry
//! modules. Everything here works on nalgebra types; the weighted-space
//! semantics live in the callers.

use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the corresponding
/// eigenvectors, sign-canonicalized so the entry of largest magnitude is
/// positive.
pub fn sym_eig_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).clone_owned();
        canonicalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Flips the vector so its entry of largest magnitude is positive. Makes
/// eigenvector output reproducible across factorization details.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        *v *= -1.0;
    }
}

/// Thin SVD of a rectangular matrix: `m = u * diag(sigma) * v'` with
/// `sigma` sorted in descending order and `u`, `v` holding `min(nrows,
/// ncols)` orthonormal columns each. Signs are canonicalized pairwise (the
/// largest-magnitude entry of each `v` column is positive, and the matching
/// `u` column is flipped with it) so the factorization is reproducible.
pub fn svd_desc(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u_raw = svd.u.expect("u was requested");
    let v_raw = svd.v_t.expect("v_t was requested").transpose();
    let k = svd.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("singular values are finite")
    });

    let mut sigma = Vec::with_capacity(k);
    let mut u = DMatrix::zeros(u_raw.nrows(), k);
    let mut v = DMatrix::zeros(v_raw.nrows(), k);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(svd.singular_values[src]);
        let mut vc = v_raw.column(src).clone_owned();
        let mut uc = u_raw.column(src).clone_owned();
        let mut best = 0usize;
        for i in 1..vc.len() {
            if vc[i].abs() > vc[best].abs() {
                best = i;
            }
        }
        if vc.len() > 0 && vc[best] < 0.0 {
            vc *= -1.0;
            uc *= -1.0;
        }
        v.set_column(dst, &vc);
        u.set_column(dst, &uc);
    }
    (u, sigma, v)
}

/// Completes the orthonormal columns of `u` to a full orthonormal basis,
/// returning the missing `nrows - ncols` columns. They are the dominant
/// eigenvectors of the complement projector `I - u u'`, whose unit
/// eigenvalues are separated from zero by a gap of one, so the result is
/// deterministic and orthogonal to `u` at machine precision.
pub fn complete_orthonormal(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let k = u.ncols();
    assert!(k <= n, "cannot complete {k} columns in dimension {n}");
    let proj = DMatrix::identity(n, n) - u * u.transpose();
    let (_, q) = sym_eig_desc(&proj);
    q.columns(0, n - k).clone_owned()
}

/// Solves the symmetric system `a x = b` through an eigenvalue
/// pseudoinverse. Eigenvalues below `rel_cutoff` times the largest magnitude
/// are treated as zero, so the result is the least-norm solution of the
/// consistent part of the system.
pub fn sym_pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_cutoff: f64) -> DVector<f64> {
    let (values, vectors) = sym_eig_desc(a);
    let max_mag = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = rel_cutoff * max_mag;
    let mut x = DVector::zeros(b.len());
    for (i, &lambda) in values.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let col = vectors.column(i);
        let coef = col.dot(b) / lambda;
        x.axpy(coef, &col.clone_owned(), 1.0);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eig_sorted_and_orthonormal() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let (values, vectors) = sym_eig_desc(&m);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
        let should_be_eye = vectors.transpose() * &vectors;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(should_be_eye[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn svd_reconstructs_and_is_orthonormal() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 0.25, 0.75]);
        let (u, sigma, v) = svd_desc(&m);
        assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
        let back = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma.clone())) * v.transpose();
        for i in 0..3 {
            for j in 0..2 {
                assert_abs_diff_eq!(back[(i, j)], m[(i, j)], epsilon = 1e-12);
            }
        }
        let utu = u.transpose() * &u;
        let vtv = v.transpose() * &v;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(utu[(i, j)], want, epsilon = 1e-12);
                assert_abs_diff_eq!(vtv[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn completion_spans_the_complement() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 0.2, 1.0, -0.5, 0.1, 0.0, 0.7]);
        let (u, _, _) = svd_desc(&m);
        let extra = complete_orthonormal(&u);
        assert_eq!(extra.ncols(), 2);
        let full = DMatrix::from_columns(&[
            u.column(0),
            u.column(1),
            extra.column(0),
            extra.column(1),
        ]);
        let gram = full.transpose() * &full;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pinv_solve_recovers_exact_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        let x = sym_pinv_solve(&a, &b, 1e-10);
        let back = &a * &x;
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(back[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pinv_solve_drops_null_directions() {
        // Rank-one matrix: the solve must return the least-norm solution of
        // the consistent part and ignore the null direction.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_row_slice(&[2.0, 2.0]);
        let x = sym_pinv_solve(&a, &b, 1e-10);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
    }
}
