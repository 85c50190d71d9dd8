//! Sparse symmetric systems: triplet accumulation, CSC finalization, a
//! direct Cholesky solver with a conjugate-gradient fallback, and dense
//! conversions for small-problem oracles.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("conjugate gradients did not converge: residual {residual:.3e} after {iters} iterations")]
    CgDidNotConverge { iters: usize, residual: f64 },
    #[error("dimension mismatch: matrix is {n}x{n}, right-hand side has length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Unordered (row, col, value) accumulator; duplicates sum on finalization.
#[derive(Debug, Clone)]
pub struct TripletList {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl TripletList {
    pub fn new(n_rows: usize, n_cols: usize) -> TripletList {
        TripletList {
            n_rows,
            n_cols,
            rows: Vec::new(),
            cols: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.values.push(value);
    }

    /// Appends all entries of `other` (same dimensions required).
    pub fn merge(&mut self, other: &TripletList) {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.rows.extend_from_slice(&other.rows);
        self.cols.extend_from_slice(&other.cols);
        self.values.extend_from_slice(&other.values);
    }

    /// Entries with rows and columns exchanged.
    pub fn transposed(&self) -> TripletList {
        TripletList {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            values: self.values.clone(),
        }
    }

    /// Appends `scale * other` entry-wise.
    /// Entries in insertion order (duplicates not yet summed).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Copies the entries into a smaller index window, shifting indices by
    /// the offsets. Every entry must land inside the window.
    pub fn restricted(
        &self,
        row_offset: usize,
        col_offset: usize,
        n_rows: usize,
        n_cols: usize,
    ) -> TripletList {
        let mut out = TripletList::new(n_rows, n_cols);
        for (r, c, v) in self.iter() {
            assert!(
                r >= row_offset && r - row_offset < n_rows,
                "row {r} outside window [{row_offset}, {})",
                row_offset + n_rows
            );
            assert!(
                c >= col_offset && c - col_offset < n_cols,
                "col {c} outside window [{col_offset}, {})",
                col_offset + n_cols
            );
            out.push(r - row_offset, c - col_offset, v);
        }
        out
    }

    pub fn merge_scaled(&mut self, other: &TripletList, scale: f64) {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        self.rows.extend_from_slice(&other.rows);
        self.cols.extend_from_slice(&other.cols);
        self.values.extend(other.values.iter().map(|v| scale * v));
    }

    /// Finalizes to compressed sparse column form, summing duplicates.
    pub fn to_csc(&self) -> CscMatrix<f64> {
        let coo = CooMatrix::try_from_triplets(
            self.n_rows,
            self.n_cols,
            self.rows.clone(),
            self.cols.clone(),
            self.values.clone(),
        )
        .expect("triplet indices validated on push");
        CscMatrix::from(&coo)
    }

    /// Dense copy for small-problem oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            m[(r, c)] += v;
        }
        m
    }

    /// y = A x without finalizing.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            y[r] += v * x[c];
        }
        y
    }
}

/// y = A x for a finalized matrix.
pub fn csc_matvec(a: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), a.ncols());
    let mut y = vec![0.0; a.nrows()];
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj != 0.0 {
            for (&i, &v) in col.row_indices().iter().zip(col.values()) {
                y[i] += v * xj;
            }
        }
    }
    y
}

/// y = Aᵀ x for a finalized matrix (no transpose is materialized).
pub fn csc_matvec_transpose(a: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), a.nrows());
    let mut y = vec![0.0; a.ncols()];
    for (j, col) in a.col_iter().enumerate() {
        let mut acc = 0.0;
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            acc += v * x[i];
        }
        y[j] = acc;
    }
    y
}

/// max |A − Aᵀ| relative to max |A| (0 for an empty matrix).
pub fn symmetry_error(a: &CscMatrix<f64>) -> f64 {
    let at = a.transpose();
    let mut max_abs = 0.0f64;
    for (_, _, v) in a.triplet_iter() {
        max_abs = max_abs.max(v.abs());
    }
    if max_abs == 0.0 {
        return 0.0;
    }
    // A and Aᵀ generally have different sparsity patterns; compare through
    // the difference matrix.
    let mut diff = CooMatrix::new(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        diff.push(i, j, *v);
    }
    for (i, j, v) in at.triplet_iter() {
        diff.push(i, j, -*v);
    }
    let diff = CscMatrix::from(&diff);
    let mut max_diff = 0.0f64;
    for (_, _, v) in diff.triplet_iter() {
        max_diff = max_diff.max(v.abs());
    }
    max_diff / max_abs
}

pub fn csc_to_dense(a: &CscMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        m[(i, j)] += *v;
    }
    m
}

enum SolverKind {
    Direct(CscCholesky<f64>),
    ConjugateGradient,
}

/// Solver for symmetric positive definite systems: sparse Cholesky when the
/// factorization succeeds, Jacobi-preconditioned conjugate gradients as the
/// fallback.
pub struct SymmetricSolver {
    matrix: CscMatrix<f64>,
    kind: SolverKind,
    cg_tol: f64,
}

impl SymmetricSolver {
    pub fn new(matrix: CscMatrix<f64>) -> Result<SymmetricSolver, SolveError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(SolveError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let kind = match CscCholesky::factor(&matrix) {
            Ok(chol) => SolverKind::Direct(chol),
            Err(_) => SolverKind::ConjugateGradient,
        };
        Ok(SymmetricSolver {
            matrix,
            kind,
            cg_tol: 1e-12,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CscMatrix<f64> {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.kind, SolverKind::Direct(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.n();
        if rhs.len() != n {
            return Err(SolveError::DimensionMismatch { n, len: rhs.len() });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        match &self.kind {
            SolverKind::Direct(chol) => {
                let b = DMatrix::from_column_slice(n, 1, rhs);
                let x = chol.solve(&b);
                Ok(x.column(0).iter().copied().collect())
            }
            SolverKind::ConjugateGradient => self.solve_cg(rhs),
        }
    }

    fn solve_cg(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.n();
        let a = &self.matrix;
        let mut diag = vec![0.0f64; n];
        for (i, j, v) in a.triplet_iter() {
            if i == j {
                diag[i] += *v;
            }
        }
        let precond: Vec<f64> = diag
            .iter()
            .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
            .collect();

        let b = DVector::from_column_slice(rhs);
        let b_norm = b.norm();
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = DVector::zeros(n);
        let mut r = b.clone();
        let mut z = DVector::from_iterator(n, r.iter().zip(&precond).map(|(ri, pi)| ri * pi));
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        let maxiter = 20 * n + 100;
        for it in 0..maxiter {
            let ap = DVector::from_vec(csc_matvec(a, p.as_slice()));
            let pap = p.dot(&ap);
            if pap <= 0.0 {
                return Err(SolveError::CgDidNotConverge {
                    iters: it,
                    residual: r.norm() / b_norm,
                });
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            if r.norm() <= self.cg_tol * b_norm {
                return Ok(x.as_slice().to_vec());
            }
            z = DVector::from_iterator(n, r.iter().zip(&precond).map(|(ri, pi)| ri * pi));
            let rz_new = r.dot(&z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + beta * &p;
        }
        Err(SolveError::CgDidNotConverge {
            iters: maxiter,
            residual: r.norm() / b_norm,
        })
    }

    /// Relative algebraic residual ‖Ax − b‖ / ‖b‖ (‖Ax‖ for b = 0).
    pub fn residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = csc_matvec(&self.matrix, x);
        let mut num = 0.0;
        let mut den = 0.0;
        for (axi, bi) in ax.iter().zip(rhs) {
            num += (axi - bi) * (axi - bi);
            den += bi * bi;
        }
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}
