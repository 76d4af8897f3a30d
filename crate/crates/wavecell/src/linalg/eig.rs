//! Symmetric eigenvalue decomposition by cyclic Jacobi rotations.
//!
//! Every downstream consumer (mode selection, stabilization, critical time
//! step, condition numbers) relies on the contracts enforced here: ascending
//! eigenvalues, orthonormal eigenvectors with a deterministic sign, and a
//! small reconstruction residual. Jacobi is unconditionally reliable for the
//! symmetric matrices this engine produces (up to a few hundred rows) and has
//! no trouble with the enormous dynamic range of badly cut elements.

use super::dense::Mat;
use super::LinalgError;

/// Eigendecomposition `A = V diag(values) V^T` of a symmetric matrix.
///
/// Invariants (checked in tests, relied on everywhere):
/// - `values` ascending,
/// - columns of `vectors` are unit length and mutually orthogonal,
/// - each column's largest-magnitude component is positive (deterministic
///   sign, so repeated runs are bitwise identical),
/// - `‖A v_i − λ_i v_i‖ ≤ 1e-9 ‖A‖_F` for every pair.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, same order as `values`.
    pub vectors: Mat,
}

impl EigResult {
    /// Eigenvector `i` as an owned vector.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|r| self.vectors.get(r, i)).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest eigenvalue (the last one).
    pub fn lambda_max(&self) -> f64 {
        *self.values.last().expect("empty decomposition")
    }
}

/// Off-diagonal Frobenius norm, the Jacobi convergence measure.
fn off_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            s += 2.0 * v * v;
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi.
///
/// The input is symmetrized as `(A + A^T)/2` first, so tiny asymmetries from
/// accumulated quadrature round-off are harmless. Fails on non-finite input
/// and (practically unreachable) non-convergence.
pub fn sym_eig(a: &Mat) -> Result<EigResult, LinalgError> {
    if a.rows() != a.cols() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    if n == 0 {
        return Ok(EigResult {
            values: vec![],
            vectors: Mat::zeros(0, 0),
        });
    }

    let mut m = a.symmetrized();
    let mut v = Mat::identity(n);
    let norm = m.norm_frobenius().max(f64::MIN_POSITIVE);
    // Quadratic convergence: ~10 sweeps suffice even at n=200; 50 is margin.
    const MAX_SWEEPS: usize = 50;
    const TOL: f64 = 1e-15;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_norm(&m) <= TOL * norm {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= TOL * norm * 1e-2 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // t = sign(theta) / (|theta| + sqrt(theta^2 + 1)), the smaller root.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for j in 0..n {
                    if j != p && j != q {
                        let ajp = m.get(j, p);
                        let ajq = m.get(j, q);
                        m.set(j, p, ajp - s * (ajq + tau * ajp));
                        m.set(p, j, m.get(j, p));
                        m.set(j, q, ajq + s * (ajp - tau * ajq));
                        m.set(q, j, m.get(j, q));
                    }
                }
                for j in 0..n {
                    let vjp = v.get(j, p);
                    let vjq = v.get(j, q);
                    v.set(j, p, vjp - s * (vjq + tau * vjp));
                    v.set(j, q, vjq + s * (vjp - tau * vjq));
                }
            }
        }
    }
    if !converged && off_norm(&m) > TOL * norm * 10.0 {
        return Err(LinalgError::NoConvergence);
    }

    // Sort ascending, carry eigenvectors along, fix signs.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).partial_cmp(&m.get(j, j)).expect("finite"));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        values.push(m.get(src, src));
        // Deterministic sign: largest-magnitude component positive.
        let mut best = 0;
        let mut best_abs = 0.0;
        for r in 0..n {
            let a = v.get(r, src).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        let flip = if v.get(best, src) < 0.0 { -1.0 } else { 1.0 };
        // Normalize: rotations keep columns orthonormal to machine precision,
        // this just polishes round-off.
        let mut nrm = 0.0;
        for r in 0..n {
            nrm += v.get(r, src) * v.get(r, src);
        }
        let nrm = nrm.sqrt();
        for r in 0..n {
            vectors.set(r, col, flip * v.get(r, src) / nrm);
        }
    }
    Ok(EigResult { values, vectors })
}

/// Largest eigenvalue of symmetric `A` through `matvec`, by Lanczos iteration
/// with full reorthogonalization. Used where the matrix is too large for
/// dense Jacobi (global critical-time-step estimates).
///
/// `tol` is the relative change of the Ritz estimate between restarts.
pub fn lanczos_max<F>(n: usize, mut matvec: F, tol: f64, max_iter: usize) -> Result<f64, LinalgError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if n == 0 {
        return Err(LinalgError::EmptySystem);
    }
    // Deterministic start vector; no RNG so results are reproducible.
    let mut q: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 * 0.7391).sin()))
        .collect();
    let nrm = super::dense::norm2(&q);
    for v in &mut q {
        *v /= nrm;
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_ritz = f64::NEG_INFINITY;

    for k in 0..max_iter {
        basis.push(q.clone());
        matvec(&q, &mut w);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let a = super::dense::dot(&q, &w);
        alpha.push(a);
        // w -= alpha q + beta q_prev, then full reorthogonalization.
        for b in &basis {
            let c = super::dense::dot(b, &w);
            for (wi, bi) in w.iter_mut().zip(b.iter()) {
                *wi -= c * bi;
            }
        }
        let b = super::dense::norm2(&w);
        // Ritz value from the tridiagonal section every few steps.
        if k >= 1 && (k % 4 == 0 || b <= 1e-300 || k + 1 == max_iter) {
            let m = alpha.len();
            let mut t = Mat::zeros(m, m);
            for i in 0..m {
                t.set(i, i, alpha[i]);
                if i + 1 < m {
                    t.set(i, i + 1, beta[i]);
                    t.set(i + 1, i, beta[i]);
                }
            }
            let ritz = sym_eig(&t)?.lambda_max();
            let denom = ritz.abs().max(1e-300);
            if (ritz - prev_ritz).abs() <= tol * denom {
                return Ok(ritz);
            }
            prev_ritz = ritz;
        }
        if b <= 1e-300 {
            // Invariant subspace found; the Ritz value is exact.
            break;
        }
        beta.push(b);
        for (qi, wi) in q.iter_mut().zip(w.iter()) {
            *qi = wi / b;
        }
    }
    let m = alpha.len();
    let mut t = Mat::zeros(m, m);
    for i in 0..m {
        t.set(i, i, alpha[i]);
        if i + 1 < m && i < beta.len() {
            t.set(i, i + 1, beta[i]);
            t.set(i + 1, i, beta[i]);
        }
    }
    Ok(sym_eig(&t)?.lambda_max())
}
