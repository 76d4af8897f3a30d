//! Dense linear algebra kernels: storage, symmetric eigendecomposition,
//! generalized spectral radius, and the two condition-number measures used in
//! the conditioning studies.

pub mod dense;
pub mod eig;

pub use dense::{dot, norm2, Cholesky, Mat};
pub use eig::{lanczos_max, sym_eig, EigResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("Jacobi iteration did not converge")]
    NoConvergence,
    #[error("empty system")]
    EmptySystem,
    #[error("mass matrix is not positive definite (eigenvalue {value:.3e} at index {index})")]
    NonpositiveMass { index: usize, value: f64 },
}

/// Eigenvalues below this magnitude are treated as an exact kernel when
/// forming condition numbers; `cond_inv` returns infinity instead of a
/// meaningless 1e300-scale ratio.
pub const KERNEL_FLOOR: f64 = 1e-300;

/// Largest generalized eigenvalue of `K x = λ M x` for symmetric `K` and
/// symmetric positive definite `M`, via the congruent standard problem
/// `M^{-1/2} K M^{-1/2}`.
///
/// Fails with [`LinalgError::NonpositiveMass`] if `M` has a non-positive
/// eigenvalue: the generalized spectrum is then no longer real and a critical
/// time step does not exist.
pub fn spectral_radius_generalized(k: &Mat, m: &Mat) -> Result<f64, LinalgError> {
    let em = sym_eig(m)?;
    for (i, &v) in em.values.iter().enumerate() {
        if v <= 0.0 {
            return Err(LinalgError::NonpositiveMass { index: i, value: v });
        }
    }
    let n = m.rows();
    // S = V diag(1/sqrt(λ)) V^T
    let mut vs = em.vectors.clone();
    for j in 0..n {
        let f = 1.0 / em.values[j].sqrt();
        for i in 0..n {
            vs.set(i, j, vs.get(i, j) * f);
        }
    }
    let s = vs.matmul(&em.vectors.transpose());
    let b = s.matmul(k).matmul(&s);
    Ok(sym_eig(&b)?.lambda_max())
}

/// Same as [`spectral_radius_generalized`] for a diagonal mass matrix.
pub fn spectral_radius_generalized_diag(k: &Mat, m_diag: &[f64]) -> Result<f64, LinalgError> {
    for (i, &v) in m_diag.iter().enumerate() {
        if v <= 0.0 {
            return Err(LinalgError::NonpositiveMass { index: i, value: v });
        }
    }
    let n = m_diag.len();
    assert_eq!(k.rows(), n);
    let inv_sqrt: Vec<f64> = m_diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut b = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b.set(i, j, inv_sqrt[i] * k.get(i, j) * inv_sqrt[j]);
        }
    }
    Ok(sym_eig(&b)?.lambda_max())
}

/// Spectral (2-norm) condition number of a symmetric matrix:
/// `max|λ| / min|λ|`. Returns `+∞` when the smallest magnitude is below
/// [`KERNEL_FLOOR`] (exact kernel).
pub fn cond_inv(a: &Mat) -> Result<f64, LinalgError> {
    let e = sym_eig(a)?;
    if e.is_empty() {
        return Err(LinalgError::EmptySystem);
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &v in &e.values {
        let m = v.abs();
        lo = lo.min(m);
        hi = hi.max(m);
    }
    if lo < KERNEL_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Matrix-vector-product condition measure `‖A‖₂ ‖x‖ / ‖A x‖` for a
/// symmetric `A` and a given representative vector. Unlike [`cond_inv`] this
/// only measures amplification loss for the actual operand, which is the
/// quantity that governs round-off in an explicit update.
pub fn cond_mvp(a: &Mat, x: &[f64]) -> Result<f64, LinalgError> {
    let e = sym_eig(a)?;
    if e.is_empty() {
        return Err(LinalgError::EmptySystem);
    }
    let norm_a = e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let ax = a.matvec(x);
    let nax = norm2(&ax);
    if nax < KERNEL_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(norm_a * norm2(x) / nax)
}
