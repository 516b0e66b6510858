//! Small dense linear-algebra helpers shared by the pipeline stages.
//!
//! Everything here wraps [`nalgebra`] with the conventions the rest of the
//! crate relies on: singular values sorted descending, orthonormal bases as
//! column matrices, and a deterministic sign rule for basis vectors.

use nalgebra::{DMatrix, DVector};

/// Singular value decomposition with factors sorted by descending singular
/// value. `u` is `m x r`, `vt` is `r x n` with `r = min(m, n)`.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub vt: DMatrix<f64>,
}

/// Computes a thin SVD and sorts it by descending singular value.
pub fn sorted_svd(m: &DMatrix<f64>) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let u_sorted = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let vt_sorted = DMatrix::from_rows(&order.iter().map(|&i| vt.row(i)).collect::<Vec<_>>());
    let s_sorted = DVector::from_iterator(s.len(), order.iter().map(|&i| s[i]));
    SortedSvd {
        u: u_sorted,
        singular_values: s_sorted,
        vt: vt_sorted,
    }
}

/// Symmetric eigendecomposition sorted by ascending eigenvalue. Column
/// `i` of `vectors` pairs with `values[i]`.
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of a symmetric matrix with ascending eigenvalues.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let vectors = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>(),
    );
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    SortedEigen { values, vectors }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(singular_values: &DVector<f64>, rel_tol: f64) -> usize {
    let max = singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (as columns) for the column span of `m` at the given
/// relative rank tolerance.
pub fn column_span_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(m);
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    svd.u.columns(0, rank).into_owned()
}

/// Orthonormal basis for the orthogonal complement of the (orthonormal)
/// columns of `basis` inside the ambient space of its row dimension.
///
/// Returned matrix is `dim x (dim - r)`; empty when the basis already spans
/// the space. Uses twice-applied modified Gram-Schmidt against the identity
/// for stability.
pub fn complement_basis(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = basis.nrows();
    let r = basis.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(dim - r);
    for i in 0..dim {
        if cols.len() == dim - r {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        for _ in 0..2 {
            for b in basis.column_iter() {
                let dot = b.dot(&v);
                v.axpy(-dot, &b.into_owned(), 1.0);
            }
            for c in &cols {
                let dot = c.dot(&v);
                v.axpy(-dot, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    assert_eq!(cols.len(), dim - r, "complement basis must fill the space");
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Projects `v` onto the orthogonal complement of the orthonormal columns
/// of `basis` (in place arithmetic, result returned).
pub fn project_off(v: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    let mut out = v.clone();
    for b in basis.column_iter() {
        let dot = b.dot(&out);
        out.axpy(-dot, &b.into_owned(), 1.0);
    }
    out
}

/// Flips the sign of `v` so its largest-magnitude entry (first such entry
/// on ties) is positive. Fixes the sign ambiguity of singular vectors.
pub fn sign_normalize(mut v: DVector<f64>) -> DVector<f64> {
    let mut idx = 0;
    let mut best = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Least-squares solve `B c = x` for every column of `x` via the SVD
/// pseudoinverse of `b` (columns of `b` are expected independent).
pub fn pinv_solve(b: &DMatrix<f64>, x: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = sorted_svd(b);
    let rank = numerical_rank(&svd.singular_values, rel_tol);
    let ut_x = svd.u.columns(0, rank).transpose() * x;
    let mut scaled = ut_x;
    for i in 0..rank {
        let s = svd.singular_values[i];
        for j in 0..scaled.ncols() {
            scaled[(i, j)] /= s;
        }
    }
    svd.vt.rows(0, rank).transpose() * scaled
}

/// Median of a slice (averages the middle pair for even lengths).
/// Returns 0 for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Absolute cosine between two vectors; 0 when either is zero.
pub fn abs_cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).abs()
}
