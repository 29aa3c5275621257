//! Dense real linear algebra: matrices, a symmetric eigensolver and an LU
//! determinant, sized for problems up to roughly a thousand rows.
//!
//! The eigensolver is a cyclic Jacobi iteration. Jacobi is slower than
//! tridiagonalization-based methods but delivers high relative accuracy on
//! positive definite input, which matters here because logarithms of
//! eigenvalues near zero have to be resolved tightly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max |a_ij - a_ji| = {max_dev:e}, allowed {allowed:e})")]
    NotSymmetric { max_dev: f64, allowed: f64 },
    #[error(
        "Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal norm {residual:e})"
    )]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Row-major dense matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        if self.cols == 0 {
            return vec![0.0; self.rows];
        }
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute deviation from symmetry, max |a_ij - a_ji|.
    pub fn symmetry_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                dev = dev.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        dev
    }
}

/// Result of a symmetric eigendecomposition A = V diag(λ) Vᵀ.
///
/// Eigenvalues are sorted in non-increasing order; column `i` of
/// `eigenvectors` pairs with `eigenvalues[i]` and the columns are
/// orthonormal.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input must be square and symmetric to within 1e-10 relative to its
/// largest entry. Iteration stops once the off-diagonal Frobenius norm drops
/// below 1e-12 times the Frobenius norm of the input, with a hard cap of 100
/// sweeps.
pub fn sym_eig(a: &DenseMatrix) -> Result<EigenDecomposition, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![],
            eigenvectors: DenseMatrix::zeros(0, 0),
        });
    }
    let allowed = 1e-10 * a.max_abs().max(f64::MIN_POSITIVE);
    let dev = a.symmetry_deviation();
    if dev > allowed {
        return Err(LinalgError::NotSymmetric {
            max_dev: dev,
            allowed,
        });
    }

    // Work on the symmetrized copy so the iteration sees an exactly
    // symmetric matrix.
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let threshold = 1e-12 * m.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut off = off_diagonal_norm(&m);
    let mut sweeps = 0;
    while off > threshold {
        if sweeps >= MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    m.set(k, p, np);
                    m.set(p, k, np);
                    m.set(k, q, nq);
                    m.set(q, k, nq);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&m);
    }

    // Sort eigenpairs by non-increasing eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            eigenvectors.set(row, col, v.get(row, src));
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = m.get(i, j);
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

/// Determinant by LU factorization with partial pivoting.
///
/// Serves as the independent cross-check for the product of eigenvalues; a
/// pivot of exactly zero yields determinant zero.
pub fn lu_det(a: &DenseMatrix) -> Result<f64, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut det = 1.0;
    for k in 0..n {
        let mut pivot = k;
        let mut best = m.get(k, k).abs();
        for i in (k + 1)..n {
            let v = m.get(i, k).abs();
            if v > best {
                best = v;
                pivot = i;
            }
        }
        if best == 0.0 {
            return Ok(0.0);
        }
        if pivot != k {
            for j in 0..n {
                let tmp = m.get(k, j);
                m.set(k, j, m.get(pivot, j));
                m.set(pivot, j, tmp);
            }
            det = -det;
        }
        let d = m.get(k, k);
        det *= d;
        for i in (k + 1)..n {
            let factor = m.get(i, k) / d;
            if factor == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                let v = m.get(i, j) - factor * m.get(k, j);
                m.set(i, j, v);
            }
            m.set(i, k, 0.0);
        }
    }
    Ok(det)
}
