//! Deterministic random matrix generation.
//!
//! All randomness flows through ChaCha8 seeded from a `u64`, with normals
//! produced by the Box-Muller transform. Both pieces are fixed algorithms, so
//! a seed reproduces the same matrix on any platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Distribution of [`rand_matrix`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RandKind {
    /// I.i.d. standard normal entries.
    Gaussian,
    /// Square orthogonal matrix (`Q^T Q = I`).
    Orthogonal,
    /// Singular values log-spaced between 1 and `1/kappa`.
    Conditioned { kappa: f64 },
}

/// Splitmix64, used to derive independent sub-seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically combines two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Streams standard normals from a ChaCha8 generator.
pub(crate) struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform_open(&mut self) -> f64 {
        // 53-bit uniform in (0, 1]; strictly positive so ln() is finite.
        (((self.rng.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Seeded random matrix of the requested kind.
pub fn rand_matrix<T: Scalar>(
    rows: usize,
    cols: usize,
    seed: u64,
    kind: RandKind,
) -> Result<Matrix<T>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter(format!(
            "rand_matrix dimensions must be >= 1, got {rows}x{cols}"
        )));
    }
    match kind {
        RandKind::Gaussian => Ok(gaussian(rows, cols, seed)),
        RandKind::Orthogonal => {
            if rows != cols {
                return Err(Error::Parameter(format!(
                    "orthogonal kind requires a square shape, got {rows}x{cols}"
                )));
            }
            Ok(orthogonal(rows, seed))
        }
        RandKind::Conditioned { kappa } => {
            if kappa < 1.0 {
                return Err(Error::Parameter(format!(
                    "conditioned kind requires kappa >= 1, got {kappa}"
                )));
            }
            Ok(conditioned(rows, cols, seed, kappa))
        }
    }
}

fn gaussian<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    let mut src = NormalSource::new(seed);
    let data = (0..rows * cols)
        .map(|_| T::from_f64(src.next_normal()))
        .collect();
    Matrix::from_raw(rows, cols, data)
}

/// Orthogonalizes a square Gaussian draw with two modified Gram-Schmidt
/// passes; columns keep the sign of their original direction.
fn orthogonal<T: Scalar>(n: usize, seed: u64) -> Matrix<T> {
    let a: Matrix<T> = gaussian(n, n, seed);
    let mut q = a.clone();
    for _pass in 0..2 {
        for j in 0..n {
            for i in 0..j {
                let mut d = T::zero();
                for k in 0..n {
                    d += q[(k, i)] * q[(k, j)];
                }
                for k in 0..n {
                    q[(k, j)] = q[(k, j)] - d * q[(k, i)];
                }
            }
            let mut norm = T::zero();
            for k in 0..n {
                norm += q[(k, j)] * q[(k, j)];
            }
            let norm = norm.sqrt();
            for k in 0..n {
                q[(k, j)] /= norm;
            }
        }
    }
    // Fix signs: keep each column aligned with the raw draw.
    for j in 0..n {
        let mut d = T::zero();
        for k in 0..n {
            d += q[(k, j)] * a[(k, j)];
        }
        if d < T::zero() {
            for k in 0..n {
                q[(k, j)] = -q[(k, j)];
            }
        }
    }
    q
}

fn conditioned<T: Scalar>(rows: usize, cols: usize, seed: u64, kappa: f64) -> Matrix<T> {
    let k = rows.min(cols);
    let q1: Matrix<T> = orthogonal(rows, mix_seed(seed, 1));
    let q2: Matrix<T> = orthogonal(cols, mix_seed(seed, 2));
    let sigma = log_spaced_singular_values::<T>(k, kappa);
    q1.first_cols(k)
        .scale_cols(&sigma)
        .matmul(&q2.first_cols(k).transpose())
}

/// `k` values log-spaced from 1 down to `1/kappa`.
pub(crate) fn log_spaced_singular_values<T: Scalar>(k: usize, kappa: f64) -> Vec<T> {
    (0..k)
        .map(|i| {
            let frac = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
            T::from_f64(kappa.powf(-frac))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd;

    #[test]
    fn orthogonal_kind_is_orthogonal() {
        let q: Matrix<f64> = rand_matrix(4, 4, 7, RandKind::Orthogonal).unwrap();
        let defect = q.gram_cols().max_abs_diff(&Matrix::identity(4));
        assert!(defect < 1e-12, "orthogonality defect {defect}");
    }

    #[test]
    fn conditioned_kind_hits_requested_condition_number() {
        let a: Matrix<f64> =
            rand_matrix(6, 4, 1, RandKind::Conditioned { kappa: 100.0 }).unwrap();
        let d = svd(&a).unwrap();
        let cond = d.singular_values[0] / d.singular_values[3];
        assert!((cond - 100.0).abs() / 100.0 < 1e-6, "condition number {cond}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a: Matrix<f64> = rand_matrix(5, 3, 42, RandKind::Gaussian).unwrap();
        let b: Matrix<f64> = rand_matrix(5, 3, 42, RandKind::Gaussian).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(rand_matrix::<f64>(3, 4, 0, RandKind::Orthogonal).is_err());
        assert!(rand_matrix::<f64>(3, 3, 0, RandKind::Conditioned { kappa: 0.5 }).is_err());
        assert!(rand_matrix::<f64>(0, 3, 0, RandKind::Gaussian).is_err());
    }
}
