//! Sparse assembly and factorization helpers.
//!
//! Symmetric positive definite systems are factored with the sparse Cholesky
//! from `nalgebra-sparse`; small dense kernels use `nalgebra` directly.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct Triplets {
    coo: CooMatrix<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            coo: CooMatrix::new(nrows, ncols),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.coo.push(i, j, v);
    }

    pub fn to_csc(&self) -> CscMatrix<f64> {
        CscMatrix::from(&self.coo)
    }
}

/// `y = A x` for a CSC matrix.
pub fn spmv(a: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![0.0; a.nrows()];
    for (j, col) in a.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
    y
}

/// Quadratic form `x^T A y`.
pub fn bilinear(a: &CscMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &spmv(a, y))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest absolute entry of a sparse matrix.
pub fn csc_norm_max(a: &CscMatrix<f64>) -> f64 {
    a.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Diagonal entries of a square sparse matrix.
pub fn diagonal(a: &CscMatrix<f64>) -> Vec<f64> {
    a.col_iter()
        .enumerate()
        .map(|(j, col)| {
            col.row_indices()
                .iter()
                .zip(col.values())
                .filter(|(&i, _)| i == j)
                .map(|(_, &v)| v)
                .sum()
        })
        .collect()
}

/// Extracts the block `A[rows, cols]`. `row_map[i]` gives the block row of
/// global row `i`, if it belongs to the block.
pub fn extract_block(
    a: &CscMatrix<f64>,
    row_map: &[Option<usize>],
    col_map: &[Option<usize>],
    nrows: usize,
    ncols: usize,
) -> CscMatrix<f64> {
    let mut t = Triplets::new(nrows, ncols);
    for (j, col) in a.col_iter().enumerate() {
        let Some(bj) = col_map[j] else { continue };
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            if let Some(bi) = row_map[i] {
                t.push(bi, bj, v);
            }
        }
    }
    t.to_csc()
}

/// Builds the `Option` index map used by [`extract_block`].
pub fn index_map(n: usize, indices: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; n];
    for (k, &i) in indices.iter().enumerate() {
        map[i] = Some(k);
    }
    map
}

/// Sparse Cholesky factorization of an SPD matrix.
pub struct SparseCholesky {
    n: usize,
    factor: Option<CscCholesky<f64>>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky")
            .field("n", &self.n)
            .finish()
    }
}

/// Pivots smaller than this fraction of the original diagonal are treated as
/// numerically singular.
const PIVOT_RATIO: f64 = 1e-14;

impl SparseCholesky {
    pub fn factor(a: &CscMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Factorization(format!(
                "matrix is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if n == 0 {
            return Ok(Self { n, factor: None });
        }
        let factor = CscCholesky::factor(a)
            .map_err(|e| Error::Factorization(format!("{e:?} (matrix not positive definite)")))?;
        let l = factor.l();
        for (k, col) in l.col_iter().enumerate() {
            // the diagonal is the first stored entry of each column of L
            let lkk = col.values().first().copied().unwrap_or(0.0);
            let akk = a.get_entry(k, k).map(|e| e.into_value()).unwrap_or(0.0);
            if !(lkk * lkk > PIVOT_RATIO * akk.abs()) {
                return Err(Error::Factorization(format!(
                    "numerically singular pivot at row {k} ({:e} vs diagonal {:e})",
                    lkk * lkk,
                    akk
                )));
            }
        }
        Ok(Self {
            n,
            factor: Some(factor),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        match &self.factor {
            None => Vec::new(),
            Some(f) => {
                let rhs = DMatrix::from_column_slice(self.n, 1, b);
                f.solve(&rhs).as_slice().to_vec()
            }
        }
    }

    /// Solves for several right-hand sides stored as columns.
    pub fn solve_columns(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n);
        match &self.factor {
            None => DMatrix::zeros(0, b.ncols()),
            Some(f) => f.solve(b),
        }
    }
}

/// Dense Cholesky solve for small SPD systems.
pub fn dense_spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("dense matrix not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    svd.pseudo_inverse(tol).expect("svd computed with u and v")
}

/// Numerical rank from singular values.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (a.nrows().max(a.ncols()) as f64);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}
