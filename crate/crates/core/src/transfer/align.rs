//! Manifold alignment of two state spaces.

use serde::{Deserialize, Serialize};
use shopfloor_linalg::{generalized_eig_smallest, pinv, DenseMatrix, DEFAULT_RIDGE};

use crate::error::{Error, Result};

/// Projected sample variance below which an eigenvector is discarded.
pub const TRIVIAL_VARIANCE: f64 = 1e-10;
const PINV_TOL: f64 = 1e-10;
const MAX_NEIGHBORS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Weight of the cross-space term.
    pub mu: f64,
    /// Neighbours per local geometry, `2..=6`.
    pub k: usize,
    pub d_share: usize,
    pub source_samples: usize,
    pub target_samples: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            k: 4,
            d_share: 32,
            source_samples: 2000,
            target_samples: 2000,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        if !(2..=MAX_NEIGHBORS).contains(&self.k) {
            return Err(Error::config(format!("k must be in 2..={MAX_NEIGHBORS}, got {}", self.k)));
        }
        if self.d_share == 0 {
            return Err(Error::config("d_share must be at least 1"));
        }
        let need = self.k + 1;
        if self.source_samples < need || self.target_samples < need {
            return Err(Error::config(format!("need at least {need} samples per space")));
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Symmetric matrix of Euclidean distances between all states.
pub fn pairwise_distances(states: &[Vec<f64>]) -> DenseMatrix {
    let n = states.len();
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = euclidean(&states[i], &states[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Indices of the `k` nearest other states of `i`, nearest first; ties by index.
fn nearest(distances: &DenseMatrix, i: usize, k: usize) -> Vec<usize> {
    let row = distances.row(i);
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn geometry_from(distances: &DenseMatrix, i: usize, k: usize) -> DenseMatrix {
    let mut z = vec![i];
    z.extend(nearest(distances, i, k));
    DenseMatrix::from_fn(k + 1, k + 1, |a, b| distances[(z[a], z[b])])
}

/// Distances among state `i` and its `k` nearest neighbours, `i` first.
pub fn local_geometry(states: &[Vec<f64>], i: usize, k: usize) -> Result<DenseMatrix> {
    if states.len() < k + 1 {
        return Err(Error::usage(format!(
            "local geometry with k={k} needs {} states, got {}",
            k + 1,
            states.len()
        )));
    }
    if i >= states.len() {
        return Err(Error::usage(format!("state index {i} out of range")));
    }
    let d: Vec<f64> = states.iter().map(|s| euclidean(&states[i], s)).collect();
    let mut idx: Vec<usize> = (0..states.len()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let mut z = vec![i];
    z.extend(idx.into_iter().take(k));
    Ok(DenseMatrix::from_fn(k + 1, k + 1, |a, b| euclidean(&states[z[a]], &states[z[b]])))
}

/// Every permutation of `0..n`, in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

/// Neighbour permutations with the centre fixed at index 0.
fn centred_permutations(k: usize) -> Vec<Vec<usize>> {
    permutations(k)
        .into_iter()
        .map(|p| std::iter::once(0).chain(p.into_iter().map(|v| v + 1)).collect())
        .collect()
}

fn scaled_gap(target: &[f64], base: &[f64], cross: f64, base_norm2: f64) -> f64 {
    let w = if base_norm2 > 0.0 { cross / base_norm2 } else { 0.0 };
    target
        .iter()
        .zip(base)
        .map(|(t, b)| (t - w * b) * (t - w * b))
        .sum::<f64>()
        .sqrt()
}

fn distance_with(rx: &DenseMatrix, ry: &DenseMatrix, perms: &[Vec<usize>]) -> f64 {
    let n = rx.rows();
    let x = rx.as_slice();
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let mut best = f64::INFINITY;
    let mut yh = vec![0.0; n * n];
    for h in perms {
        for a in 0..n {
            for b in 0..n {
                yh[a * n + b] = ry[(h[a], h[b])];
            }
        }
        let xy: f64 = x.iter().zip(&yh).map(|(a, b)| a * b).sum();
        let yy: f64 = yh.iter().map(|v| v * v).sum();
        let d1 = scaled_gap(&yh, x, xy, xx);
        let d2 = scaled_gap(x, &yh, xy, yy);
        best = best.min(d1.min(d2));
    }
    best
}

/// Distance between two local geometries, minimised over neighbour
/// permutations of `ry` and over optimal scalings in both directions.
pub fn geometry_distance(rx: &DenseMatrix, ry: &DenseMatrix, k: usize) -> Result<f64> {
    let n = k + 1;
    if rx.shape() != (n, n) || ry.shape() != (n, n) {
        return Err(Error::usage(format!(
            "geometry matrices must be {n}x{n}, got {:?} and {:?}",
            rx.shape(),
            ry.shape()
        )));
    }
    if k > MAX_NEIGHBORS {
        return Err(Error::usage(format!("k={k} exceeds {MAX_NEIGHBORS}")));
    }
    Ok(distance_with(rx, ry, &centred_permutations(k)))
}

/// Within-space and cross-space affinities.
#[derive(Clone, Debug)]
pub struct Weights {
    /// Source x target, `exp(-geometry distance)`.
    pub cross: DenseMatrix,
    pub source: DenseMatrix,
    pub target: DenseMatrix,
}

fn kernel(distances: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(distances.rows(), distances.cols(), |i, j| (-distances[(i, j)]).exp())
}

pub fn build_weights(xs: &[Vec<f64>], ys: &[Vec<f64>], k: usize) -> Result<Weights> {
    if xs.len() < k + 1 || ys.len() < k + 1 {
        return Err(Error::usage(format!("weights with k={k} need at least {} samples per space", k + 1)));
    }
    if k > MAX_NEIGHBORS {
        return Err(Error::usage(format!("k={k} exceeds {MAX_NEIGHBORS}")));
    }
    let dx = pairwise_distances(xs);
    let dy = pairwise_distances(ys);
    let rx: Vec<DenseMatrix> = (0..xs.len()).map(|i| geometry_from(&dx, i, k)).collect();
    let ry: Vec<DenseMatrix> = (0..ys.len()).map(|j| geometry_from(&dy, j, k)).collect();
    let perms = centred_permutations(k);
    let cross = DenseMatrix::from_fn(xs.len(), ys.len(), |i, j| (-distance_with(&rx[i], &ry[j], &perms)).exp());
    Ok(Weights {
        cross,
        source: kernel(&dx),
        target: kernel(&dy),
    })
}

/// `D - W` for a symmetric affinity matrix.
pub fn laplacian(w: &DenseMatrix) -> DenseMatrix {
    let mut l = w.scale(-1.0);
    for i in 0..w.rows() {
        l[(i, i)] += w.row(i).iter().sum::<f64>();
    }
    l
}

fn check_samples(samples: &[Vec<f64>], what: &str) -> Result<usize> {
    let Some(first) = samples.first() else {
        return Err(Error::usage(format!("no {what} samples")));
    };
    let dim = first.len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::usage(format!("{what} samples must share one nonzero dimension")));
    }
    Ok(dim)
}

/// `M diag(v) M^T`.
fn weighted_gram(m: &DenseMatrix, v: &[f64]) -> DenseMatrix {
    let scaled = DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] * v[j]);
    scaled.matmul_transpose(m).expect("shapes agree")
}

/// Linear maps of both spaces into a shared space and the induced
/// target-from-source map `chi = pinv(beta^T) alpha^T`.
#[derive(Clone, Debug)]
pub struct AlignmentModel {
    /// Source dim x d_share.
    pub alpha: DenseMatrix,
    /// Target dim x d_share.
    pub beta: DenseMatrix,
    /// Target dim x source dim.
    pub chi: DenseMatrix,
    pub config: AlignmentConfig,
    /// Alignment cost summed over the shared directions.
    pub cost: f64,
    pub eigenvalues: Vec<f64>,
}

impl AlignmentModel {
    pub fn from_projections(
        alpha: DenseMatrix,
        beta: DenseMatrix,
        config: AlignmentConfig,
        cost: f64,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        if alpha.cols() != beta.cols() {
            return Err(Error::usage(format!(
                "alpha has {} shared columns, beta {}",
                alpha.cols(),
                beta.cols()
            )));
        }
        let chi = pinv(&beta.transpose(), PINV_TOL)?.matmul(&alpha.transpose())?;
        Ok(Self {
            alpha,
            beta,
            chi,
            config,
            cost,
            eigenvalues,
        })
    }

    /// The map `s -> s` on a `dim`-dimensional space.
    pub fn identity(dim: usize) -> Self {
        let id = DenseMatrix::identity(dim);
        Self {
            alpha: id.clone(),
            beta: id.clone(),
            chi: id,
            config: AlignmentConfig {
                d_share: dim,
                ..AlignmentConfig::default()
            },
            cost: 0.0,
            eigenvalues: Vec::new(),
        }
    }

    pub fn source_dim(&self) -> usize {
        self.alpha.rows()
    }

    pub fn target_dim(&self) -> usize {
        self.beta.rows()
    }

    pub fn d_share(&self) -> usize {
        self.alpha.cols()
    }

    pub fn to_checkpoint(&self) -> AlignmentCheckpoint {
        AlignmentCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            source_dim: self.source_dim(),
            target_dim: self.target_dim(),
            d_share: self.d_share(),
            alpha: self.alpha.as_slice().to_vec(),
            beta: self.beta.as_slice().to_vec(),
            config: self.config.clone(),
            cost: self.cost,
            eigenvalues: self.eigenvalues.clone(),
        }
    }

    pub fn from_checkpoint(c: AlignmentCheckpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != 1 {
            return Err(Error::usage(format!("unsupported alignment checkpoint {} v{}", c.format, c.version)));
        }
        let alpha = DenseMatrix::from_vec(c.source_dim, c.d_share, c.alpha)?;
        let beta = DenseMatrix::from_vec(c.target_dim, c.d_share, c.beta)?;
        Self::from_projections(alpha, beta, c.config, c.cost, c.eigenvalues)
    }

    /// `chi s`, optionally rounded to the nearest of -1, 0, 1.
    pub fn map_state(&self, s: &[f64], quantize: bool) -> Result<Vec<f64>> {
        if s.len() != self.source_dim() {
            return Err(Error::usage(format!(
                "state has dimension {}, model expects {}",
                s.len(),
                self.source_dim()
            )));
        }
        let mut y = self.chi.matvec(s)?;
        if quantize {
            for v in &mut y {
                *v = v.round().clamp(-1.0, 1.0);
            }
        }
        Ok(y)
    }
}

const CHECKPOINT_FORMAT: &str = "shopfloor-alignment";

/// Serialized [`AlignmentModel`]; `alpha` and `beta` are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCheckpoint {
    pub format: String,
    pub version: u32,
    pub source_dim: usize,
    pub target_dim: usize,
    pub d_share: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub config: AlignmentConfig,
    pub cost: f64,
    pub eigenvalues: Vec<f64>,
}

/// The alignment eigenproblem `A phi = lambda B phi`, with `A = Z L Z^T`
/// and `B = Z D Z^T`.
#[derive(Clone, Debug)]
pub struct AlignmentProblem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub source_dim: usize,
    pub target_dim: usize,
}

impl AlignmentProblem {
    pub fn build(xs: &[Vec<f64>], ys: &[Vec<f64>], weights: &Weights, mu: f64) -> Result<Self> {
        let dx = check_samples(xs, "source")?;
        let dy = check_samples(ys, "target")?;
        let (nx, ny) = (xs.len(), ys.len());
        if weights.cross.shape() != (nx, ny) || weights.source.shape() != (nx, nx) || weights.target.shape() != (ny, ny) {
            return Err(Error::usage("weight matrices do not match the sample counts"));
        }
        let x = DenseMatrix::from_columns(xs);
        let y = DenseMatrix::from_columns(ys);
        let omega1: Vec<f64> = (0..nx).map(|i| weights.cross.row(i).iter().sum()).collect();
        let omega4: Vec<f64> = (0..ny).map(|j| weights.cross.column(j).iter().sum()).collect();
        let deg_x: Vec<f64> = (0..nx).map(|i| weights.source.row(i).iter().sum()).collect();
        let deg_y: Vec<f64> = (0..ny).map(|i| weights.target.row(i).iter().sum()).collect();

        // X (Lx + mu Omega1) X^T = X (Dx + mu Omega1) X^T - X Wx X^T
        let bx: Vec<f64> = deg_x.iter().zip(&omega1).map(|(d, o)| d + mu * o).collect();
        let by: Vec<f64> = deg_y.iter().zip(&omega4).map(|(d, o)| d + mu * o).collect();
        let b11 = weighted_gram(&x, &bx);
        let b22 = weighted_gram(&y, &by);
        let a11 = b11.sub(&x.matmul(&weights.source)?.matmul_transpose(&x)?)?;
        let a22 = b22.sub(&y.matmul(&weights.target)?.matmul_transpose(&y)?)?;
        let a12 = x.matmul(&weights.cross)?.matmul_transpose(&y)?.scale(-mu);

        let n = dx + dy;
        let mut a = DenseMatrix::zeros(n, n);
        a.set_block(0, 0, &a11);
        a.set_block(0, dx, &a12);
        a.set_block(dx, 0, &a12.transpose());
        a.set_block(dx, dx, &a22);
        a.symmetrize();
        let mut b = DenseMatrix::zeros(n, n);
        b.set_block(0, 0, &b11);
        b.set_block(dx, dx, &b22);
        b.symmetrize();
        Ok(Self {
            a,
            b,
            source_dim: dx,
            target_dim: dy,
        })
    }

    /// `phi^T A phi`.
    pub fn quadratic_form(&self, phi: &[f64]) -> Result<f64> {
        let ap = self.a.matvec(phi)?;
        Ok(ap.iter().zip(phi).map(|(u, v)| u * v).sum())
    }
}

/// Variance of `[X^T alpha; Y^T beta]` over all samples.
fn projected_variance(xs: &[Vec<f64>], ys: &[Vec<f64>], phi: &[f64], dx: usize) -> f64 {
    let dot = |s: &Vec<f64>, w: &[f64]| s.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let proj: Vec<f64> = xs
        .iter()
        .map(|s| dot(s, &phi[..dx]))
        .chain(ys.iter().map(|s| dot(s, &phi[dx..])))
        .collect();
    let mean = proj.iter().sum::<f64>() / proj.len() as f64;
    proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / proj.len() as f64
}

/// Fits projections of `xs` (source) and `ys` (target) into a shared space.
pub fn align(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &AlignmentConfig) -> Result<AlignmentModel> {
    cfg.validate()?;
    let weights = build_weights(xs, ys, cfg.k)?;
    align_with_weights(xs, ys, &weights, cfg)
}

pub fn align_with_weights(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    weights: &Weights,
    cfg: &AlignmentConfig,
) -> Result<AlignmentModel> {
    let problem = AlignmentProblem::build(xs, ys, weights, cfg.mu)?;
    let (dx, dy) = (problem.source_dim, problem.target_dim);
    let eig = generalized_eig_smallest(&problem.a, &problem.b, dx + dy, DEFAULT_RIDGE)?;
    let mut chosen = Vec::new();
    let mut values = Vec::new();
    for (j, &lambda) in eig.values.iter().enumerate() {
        let phi = eig.vector(j);
        if projected_variance(xs, ys, &phi, dx) < TRIVIAL_VARIANCE {
            continue;
        }
        chosen.push(phi);
        values.push(lambda);
        if chosen.len() == cfg.d_share {
            break;
        }
    }
    if chosen.is_empty() {
        return Err(Error::usage("alignment found no non-trivial shared direction"));
    }
    let d = chosen.len();
    let alpha = DenseMatrix::from_fn(dx, d, |i, j| chosen[j][i]);
    let beta = DenseMatrix::from_fn(dy, d, |i, j| chosen[j][dx + i]);
    let mut cost = 0.0;
    for phi in &chosen {
        cost += problem.quadratic_form(phi)?;
    }
    AlignmentModel::from_projections(alpha, beta, cfg.clone(), cost, values)
}
