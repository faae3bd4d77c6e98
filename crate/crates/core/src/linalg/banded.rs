//! Cholesky factorization of symmetric positive-definite banded matrices.

use crate::error::{Error, Result};

/// Lower band of an SPD matrix, overwritten in place by its Cholesky factor.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    // row i holds columns i−bw ..= i
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)], factored: false }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry (i, j) of the lower triangle, j ≤ i.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i && i - j <= self.bw, "entry ({i}, {j}) outside the band");
        let k = self.at(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// y = A x for the unfactored matrix.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert!(!self.factored);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                let a = self.data[self.at(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
    }

    pub fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = self.data[self.at(i, j)];
                for k in k0..j {
                    sum -= self.data[self.at(i, k)] * self.data[self.at(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Factorization(format!(
                            "banded Cholesky: non-positive pivot {sum:e} at row {i}"
                        )));
                    }
                    let idx = self.at(i, i);
                    self.data[idx] = sum.sqrt();
                } else {
                    let idx = self.at(i, j);
                    self.data[idx] = sum / self.data[self.at(j, j)];
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A x = b in place using the factor.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored);
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[self.at(i, k)] * b[k];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.data[self.at(k, i)] * b[k];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
    }
}
