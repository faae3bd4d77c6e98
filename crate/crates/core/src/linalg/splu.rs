//! Sparse LU factorization (faer backend), complex and real.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::traits::ComplexField;
use faer::MatMut;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub struct SparseLuT<T: ComplexField> {
    n: usize,
    lu: Lu<usize, T>,
}

pub type SparseLu = SparseLuT<C64>;
pub type SparseLuReal = SparseLuT<f64>;

impl<T: ComplexField + Copy> SparseLuT<T> {
    /// Factors the n×n matrix given by triplets; duplicates are summed.
    pub fn factor(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let t: Vec<Triplet<usize, usize, T>> = triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, T>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mat = MatMut::from_column_major_slice_mut(b, n, 1);
        self.lu.solve_in_place(mat);
    }
}
