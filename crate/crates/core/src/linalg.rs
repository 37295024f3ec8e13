//! Thin wrappers around faer's sparse factorizations.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct SparseBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl SparseBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseBuilder {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        if value != 0.0 {
            self.entries.push(Triplet::new(row, col, value));
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn build(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &self.entries)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))
    }
}

/// Solves `A X = B` for a symmetric positive definite `A` given by its full
/// pattern. Falls back to LU when Cholesky breaks down.
pub fn solve_spd(a: &SparseBuilder, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.rows;
    let mat = a.build()?;
    let b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
    let x = match mat.sp_cholesky(Side::Lower) {
        Ok(llt) => llt.solve(&b),
        Err(_) => {
            let lu = mat
                .sp_lu()
                .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
            lu.solve(&b)
        }
    };
    collect(&x, n, rhs.len())
}

/// Solves a general square sparse system by LU.
pub fn solve_general(a: &SparseBuilder, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.rows;
    let mat = a.build()?;
    let b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
    let x = lu.solve(&b);
    collect(&x, n, rhs.len())
}

fn collect(x: &Mat<f64>, n: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    let out: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..n).map(|i| x[(i, j)]).collect())
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite solution".into()));
    }
    Ok(out)
}
