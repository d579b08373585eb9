//! Jacobi-based symmetric eigendecomposition and thin SVD.

use crate::error::{Error, Result};
use crate::linalg::{EigDecomp, Matrix, SvdDecomp};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition via cyclic Jacobi rotations.
///
/// The input is symmetrized as `(a + a^T) / 2` before decomposition, per the
/// operation's contract. Eigenvalues come back descending; eigenvector signs
/// are fixed by making the largest-magnitude entry of each column non-negative.
pub fn sym_eig<T: Scalar>(a: &Matrix<T>) -> Result<EigDecomp<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eig requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("sym_eig input has non-finite entries".into()));
    }
    let n = a.rows();
    let mut w = a.symmetrized();
    let mut v = Matrix::identity(n);

    let norm = w.frobenius_norm();
    if norm == T::zero() {
        // Zero matrix: eigenbasis is the identity.
        return Ok(EigDecomp {
            vectors: v,
            values: vec![T::zero(); n],
        });
    }
    let tol = norm * T::epsilon();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                jacobi_rotate(&mut w, &mut v, p, q);
            }
        }
    }
    if !converged {
        // One more residual check: Jacobi converges quadratically, so hitting
        // the sweep cap with a large residual signals corrupted input.
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() > tol * T::from_f64(1e3) {
            return Err(Error::Numeric(
                "sym_eig failed to converge within the sweep limit".into(),
            ));
        }
    }

    let mut values: Vec<T> = (0..n).map(|i| w[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());

    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        // Sign convention: largest-magnitude entry non-negative.
        let mut best = 0usize;
        let mut best_abs = T::zero();
        for i in 0..n {
            let x = v[(i, old_j)].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        let flip = v[(best, old_j)] < T::zero();
        for i in 0..n {
            let x = v[(i, old_j)];
            vectors[(i, new_j)] = if flip { -x } else { x };
        }
    }
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());

    Ok(EigDecomp { vectors, values })
}

/// One Jacobi rotation zeroing `w[(p, q)]`, accumulated into `v`.
fn jacobi_rotate<T: Scalar>(w: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let n = w.rows();
    let apq = w[(p, q)];
    if apq == T::zero() {
        return;
    }
    let app = w[(p, p)];
    let aqq = w[(q, q)];
    let theta = (aqq - app) / (T::from_f64(2.0) * apq);
    // tan of the rotation angle; use the asymptotic form when theta overflows.
    let t = if theta.abs() > T::one() / T::epsilon() {
        (T::from_f64(2.0) * theta).recip()
    } else {
        let sign = if theta >= T::zero() { T::one() } else { -T::one() };
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = (t * t + T::one()).sqrt().recip();
    let s = t * c;

    for k in 0..n {
        let wkp = w[(k, p)];
        let wkq = w[(k, q)];
        w[(k, p)] = c * wkp - s * wkq;
        w[(k, q)] = s * wkp + c * wkq;
    }
    for k in 0..n {
        let wpk = w[(p, k)];
        let wqk = w[(q, k)];
        w[(p, k)] = c * wpk - s * wqk;
        w[(q, k)] = s * wpk + c * wqk;
    }
    // Pin the rotated pair to its algebraic values.
    w[(p, q)] = T::zero();
    w[(q, p)] = T::zero();
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Thin SVD through the eigendecomposition of the smaller Gram matrix.
///
/// Left singular vectors are re-orthonormalized with two modified
/// Gram-Schmidt passes; directions whose singular value is negligible get
/// deterministic basis-completion columns so `u` stays orthonormal even for
/// rank-deficient input.
pub fn svd<T: Scalar>(a: &Matrix<T>) -> Result<SvdDecomp<T>> {
    if !a.is_finite() {
        return Err(Error::Numeric("svd input has non-finite entries".into()));
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let d = svd_tall(&a.transpose())?;
        Ok(SvdDecomp {
            u: d.v,
            singular_values: d.singular_values,
            v: d.u,
        })
    }
}

fn svd_tall<T: Scalar>(a: &Matrix<T>) -> Result<SvdDecomp<T>> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let eig = sym_eig(&a.gram_cols())?;
    let v = eig.vectors;
    let singular_values: Vec<T> = eig
        .values
        .iter()
        .map(|&l| l.max(T::zero()).sqrt())
        .collect();

    let sigma_max = singular_values.first().copied().unwrap_or(T::zero());
    let cutoff = sigma_max * T::epsilon() * T::from_usize(m.max(n));

    let mut u = Matrix::zeros(m, n);
    let mut degenerate: Vec<usize> = Vec::new();
    for j in 0..n {
        if singular_values[j] > cutoff {
            for i in 0..m {
                let mut s = T::zero();
                for k in 0..n {
                    s += a[(i, k)] * v[(k, j)];
                }
                u[(i, j)] = s / singular_values[j];
            }
        } else {
            degenerate.push(j);
        }
    }

    // Two MGS passes clean up the O(eps * kappa^2) cross-talk the Gram route
    // leaves between columns with widely separated singular values.
    for _pass in 0..2 {
        for j in 0..n {
            if degenerate.contains(&j) {
                continue;
            }
            for i in 0..j {
                if degenerate.contains(&i) {
                    continue;
                }
                project_out(&mut u, i, j);
            }
            normalize_col(&mut u, j);
        }
    }

    // Fill null directions with orthonormal completion columns.
    for &j in &degenerate {
        let mut placed = false;
        for cand in 0..m {
            for i in 0..m {
                u[(i, j)] = if i == cand { T::one() } else { T::zero() };
            }
            for _pass in 0..2 {
                for i in 0..n {
                    if i != j {
                        project_out(&mut u, i, j);
                    }
                }
            }
            let norm = col_norm(&u, j);
            if norm > T::from_f64(0.1) {
                for i in 0..m {
                    u[(i, j)] /= norm;
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Numeric("svd basis completion failed".into()));
        }
    }

    Ok(SvdDecomp {
        u,
        singular_values,
        v,
    })
}

fn col_norm<T: Scalar>(u: &Matrix<T>, j: usize) -> T {
    (0..u.rows())
        .map(|i| u[(i, j)] * u[(i, j)])
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

fn normalize_col<T: Scalar>(u: &mut Matrix<T>, j: usize) {
    let norm = col_norm(u, j);
    if norm > T::zero() {
        for i in 0..u.rows() {
            u[(i, j)] /= norm;
        }
    }
}

/// Subtracts from column `j` its projection onto column `i`.
fn project_out<T: Scalar>(u: &mut Matrix<T>, i: usize, j: usize) {
    let mut d = T::zero();
    for k in 0..u.rows() {
        d += u[(k, i)] * u[(k, j)];
    }
    for k in 0..u.rows() {
        u[(k, j)] = u[(k, j)] - d * u[(k, i)];
    }
}
