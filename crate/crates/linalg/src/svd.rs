use crate::matrix::{dot, DenseMatrix};
use crate::{LinalgError, Result};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(sigma) V^T`.
///
/// For an `m x n` input with `r = min(m, n)`, `u` is `m x r`, `v` is `n x r`
/// and `sigma` is non-negative and descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul_transpose(&self.v).expect("svd factor shapes agree")
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite("svd input"));
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Rows of `work` are the columns of A being orthogonalized.
    let mut work = a.transpose();
    let mut vt = DenseMatrix::identity(n);
    let tol = 1e-15;
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(work.row(p), work.row(p));
                let beta = dot(work.row(q), work.row(q));
                let gamma = dot(work.row(p), work.row(q));
                if gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut work, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
        sweeps += 1;
        if sweeps >= MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                routine: "one-sided jacobi svd",
                sweeps,
                residual: worst,
            });
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(work.row(j), work.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let sigma_max = order.first().map_or(0.0, |&i| norms[i]);
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        v.set_column(slot, vt.row(j));
        let s = norms[j];
        if s > cutoff && s > 0.0 {
            sigma.push(s);
            u_cols.push(work.row(j).iter().map(|x| x / s).collect());
        } else {
            sigma.push(if s > 0.0 { s } else { 0.0 });
            u_cols.push(Vec::new());
            pending.push(slot);
        }
    }
    complete_basis(&mut u_cols, &pending, m);
    Ok(Svd {
        u: DenseMatrix::from_columns(&u_cols),
        sigma,
        v,
    })
}

fn rotate_rows(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the `pending` columns with unit vectors orthogonal to all others.
fn complete_basis(cols: &mut [Vec<f64>], pending: &[usize], m: usize) {
    let mut candidate = 0usize;
    for &slot in pending {
        loop {
            assert!(candidate < m, "cannot complete orthonormal basis");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // Two passes of Gram-Schmidt for stability.
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                cols[slot] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

/// Moore-Penrose pseudo-inverse; singular values below `tol * sigma_max`
/// are treated as zero.
pub fn pinv(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(DenseMatrix::zeros(n, m));
    }
    let dec = svd(a)?;
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let mut vs = dec.v.clone();
    for (j, &s) in dec.sigma.iter().enumerate() {
        let inv = if s > tol * smax && s > 0.0 { 1.0 / s } else { 0.0 };
        for i in 0..vs.rows() {
            vs[(i, j)] *= inv;
        }
    }
    vs.matmul_transpose(&dec.u)
}
