use crate::matrix::DenseMatrix;
use crate::{LinalgError, Result};

/// Relative ridge added to `B` before the Cholesky factorization:
/// `eps = DEFAULT_RIDGE * trace(B) / dim`.
pub const DEFAULT_RIDGE: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenpairs in ascending eigenvalue order; `vectors` holds one eigenvector
/// per column.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl Eigen {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }

    fn truncate(mut self, k: usize) -> Self {
        let k = k.min(self.values.len());
        self.values.truncate(k);
        self.vectors = self.vectors.block(0, 0, self.vectors.rows(), k);
        self
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch {
            op: "symmetric eigensolver",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric { asymmetry: asym });
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("symmetric eigensolver input"));
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &DenseMatrix) -> Result<Eigen> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = m.frobenius_norm();
    let mut converged = n <= 1 || scale == 0.0;
    let mut sweeps = 0;

    while !converged && sweeps < MAX_SWEEPS {
        if off_diagonal_norm(&m) <= 1e-15 * scale {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Negligible relative to both diagonal entries after a few sweeps.
                if sweeps > 3
                    && apq.abs() * 1e18 < app.abs()
                    && apq.abs() * 1e18 < aqq.abs()
                {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > 1e-12 * scale {
            return Err(LinalgError::NoConvergence {
                routine: "jacobi eigensolver",
                sweeps,
                residual: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    (2.0 * s).sqrt()
}

/// Applies the rotation that annihilates `m[p][q]`, accumulating it into `v`.
fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let n = m.rows();
    let apq = m[(p, q)];
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// The `k` smallest eigenpairs of `A v = lambda B v` with the default ridge.
pub fn sym_eig_smallest(a: &DenseMatrix, b: &DenseMatrix, k: usize) -> Result<Eigen> {
    generalized_eig_smallest(a, b, k, DEFAULT_RIDGE)
}

/// The `k` smallest eigenpairs of the symmetric-definite pencil `(A, B)`.
///
/// `B` is regularized as `B + ridge * trace(B)/dim * I`, Cholesky factored,
/// and the problem is whitened into a standard symmetric one. Returned
/// vectors are orthonormal in the regularized `B` inner product.
pub fn generalized_eig_smallest(
    a: &DenseMatrix,
    b: &DenseMatrix,
    k: usize,
    ridge: f64,
) -> Result<Eigen> {
    check_symmetric(a)?;
    check_symmetric(b)?;
    if a.shape() != b.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "generalized eigensolver",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let n = a.rows();
    let mut breg = b.clone();
    breg.symmetrize();
    let eps = if n > 0 { ridge * b.trace().abs() / n as f64 } else { 0.0 };
    for i in 0..n {
        breg[(i, i)] += eps;
    }
    let l = cholesky(&breg).map_err(|condition_estimate| LinalgError::NotPositiveDefinite {
        ridge: eps,
        condition_estimate,
    })?;

    // C = L^-1 A L^-T, built as L^-1 (L^-1 A)^T using symmetry of A.
    let mut sym_a = a.clone();
    sym_a.symmetrize();
    let left = forward_solve_columns(&l, &sym_a);
    let mut c = forward_solve_columns(&l, &left.transpose());
    c.symmetrize();

    let eig = sym_eig(&c)?.truncate(k);
    let kk = eig.values.len();
    let mut vectors = DenseMatrix::zeros(n, kk);
    for j in 0..kk {
        let u = eig.vectors.column(j);
        vectors.set_column(j, &back_solve_transpose(&l, &u));
    }
    Ok(Eigen {
        values: eig.values,
        vectors,
    })
}

/// Lower Cholesky factor, or a condition estimate (ratio of extreme squared
/// pivots) when a non-positive pivot shows up.
fn cholesky(a: &DenseMatrix) -> std::result::Result<DenseMatrix, f64> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    let mut max_pivot = 0.0f64;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        max_pivot = max_pivot.max(d.abs());
        if !(d > 0.0) || !d.is_finite() {
            let cond = if d.abs() > 0.0 { max_pivot / d.abs() } else { f64::INFINITY };
            return Err(cond);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` column by column for lower-triangular `L`.
fn forward_solve_columns(l: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let mut x = b.clone();
    for i in 0..n {
        let lii = l[(i, i)];
        for k in 0..i {
            let lik = l[(i, k)];
            if lik == 0.0 {
                continue;
            }
            let (head, tail) = x.as_mut_slice().split_at_mut(i * b.cols());
            let src = &head[k * b.cols()..(k + 1) * b.cols()];
            for (dst, &s) in tail[..b.cols()].iter_mut().zip(src) {
                *dst -= lik * s;
            }
        }
        for v in x.row_mut(i) {
            *v /= lii;
        }
    }
    x
}

/// Solves `L^T x = u`.
fn back_solve_transpose(l: &DenseMatrix, u: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = u.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}
