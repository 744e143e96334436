use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
/// Column `i` of `vectors` is the unit eigenvector for `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// `V · diag(λ) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let v = &self.vectors;
        let scaled = Matrix::from_fn(n, n, |i, j| v[(i, j)] * self.values[j]);
        scaled.matmul_transpose(v).expect("square factors")
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps over the strict upper triangle in row order, annihilating each
/// off-diagonal entry with a plane rotation, until the off-diagonal
/// Frobenius mass falls to `1e-12 · ‖M‖_F` (at most 100 sweeps). Ties in
/// the final ascending sort keep the diagonal order the sweeps produced,
/// so the result is a deterministic function of the input.
pub fn symmetric_eigendecomposition(m: &Matrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::dim(alloc::format!("eigendecomposition needs a square matrix, got {:?}", m.shape())));
    }
    m.check_finite("eigensolver input")?;
    let asym = m.max_asymmetry()?;
    if asym > SYMMETRY_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    let n = m.rows();
    let mut a = m.symmetrized()?;
    let mut v = Matrix::identity(n);
    let threshold = OFF_DIAGONAL_TOL * m.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + libm::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + libm::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    libm::sqrt(s)
}

/// `A ← Jᵀ A J`, `V ← V J` for the rotation `J` acting on plane `(p, q)`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    {
        let (lo, hi) = a.as_mut_slice().split_at_mut(q * n);
        let row_p = &mut lo[p * n..(p + 1) * n];
        let row_q = &mut hi[..n];
        for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
            let (apk, aqk) = (*x, *y);
            *x = c * apk - s * aqk;
            *y = s * apk + c * aqk;
        }
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
