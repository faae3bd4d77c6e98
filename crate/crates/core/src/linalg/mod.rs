//! Numerical kernels: dense eigensolvers (via faer), a banded SPD Cholesky,
//! Lanczos and Arnoldi iterations, and a sparse LU wrapper.

pub mod arnoldi;
pub mod banded;
pub mod dense;
pub mod lanczos;
pub mod splu;

/// Deterministic pseudo-random start vector in [−1, 1).
pub(crate) fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut x = 0x9E37_79B9_7F4A_7C15u64 ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}
