//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use shopfloor::heuristics::{HeuristicDispatcher, HeuristicKind};
use shopfloor::sim::{run_selection, JobId};
use shopfloor::{Objective, Shop, ShopConfig};
use shopfloor_linalg::DenseMatrix;

/// `R_t = sum_{k >= t} gamma^(k-t) r_k`, evaluated term by term.
pub fn direct_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut total = 0.0;
            let mut discount = 1.0;
            for r in &rewards[t..] {
                total += discount * r;
                discount *= gamma;
            }
            total
        })
        .collect()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / ||b||`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let mut a = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.symmetrize();
    a
}

pub fn random_spd(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut b = g.matmul_transpose(&g).unwrap();
    for i in 0..n {
        b[(i, i)] += n as f64 * 0.1;
    }
    b
}

/// Eigenvalues of the pencil `(A, B)` below `sigma`: the negative inertia of
/// `A - sigma B` from an unpivoted LDL^T.
pub fn count_below(a: &DenseMatrix, b: &DenseMatrix, sigma: f64) -> usize {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] - sigma * b[(i, j)]).collect())
        .collect();
    let mut negatives = 0;
    for k in 0..n {
        let d = m[k][k];
        if d < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let f = m[i][k] / d;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    negatives
}

/// All eigenvalues of `(A, B)`, ascending, by bisection on the inertia.
pub fn bisection_eigenvalues(a: &DenseMatrix, b: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut bound = 1.0;
    while count_below(a, b, -bound) > 0 || count_below(a, b, bound) < n {
        bound *= 2.0;
    }
    (0..n)
        .map(|i| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, b, mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Largest violation of the four Penrose conditions.
pub fn penrose_violation(a: &DenseMatrix, p: &DenseMatrix) -> f64 {
    let ap = a.matmul(p).unwrap();
    let pa = p.matmul(a).unwrap();
    [
        ap.matmul(a).unwrap().sub(a).unwrap().max_abs(),
        pa.matmul(p).unwrap().sub(p).unwrap().max_abs(),
        ap.sub(&ap.transpose()).unwrap().max_abs(),
        pa.sub(&pa.transpose()).unwrap().max_abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn heap_permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permutations(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Exhaustive search over neighbour orderings of `ry`, centre fixed, taking
/// the better of both optimal scalings.
pub fn brute_geometry_distance(rx: &DenseMatrix, ry: &DenseMatrix) -> f64 {
    let n = rx.rows();
    let mut neighbours: Vec<usize> = (1..n).collect();
    let mut perms = Vec::new();
    let len = neighbours.len();
    heap_permutations(&mut neighbours, len, &mut perms);
    let frob = |m: &DenseMatrix| m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = f64::INFINITY;
    for p in perms {
        let order: Vec<usize> = std::iter::once(0).chain(p).collect();
        let yh = DenseMatrix::from_fn(n, n, |a, b| ry[(order[a], order[b])]);
        let cross = rx.transpose().matmul(&yh).unwrap().trace();
        let xx = rx.transpose().matmul(rx).unwrap().trace();
        let yy = yh.transpose().matmul(&yh).unwrap().trace();
        let w1 = if xx > 0.0 { cross / xx } else { 0.0 };
        let w2 = if yy > 0.0 { cross / yy } else { 0.0 };
        let d1 = frob(&yh.sub(&rx.scale(w1)).unwrap());
        let d2 = frob(&rx.sub(&yh.scale(w2)).unwrap());
        best = best.min(d1).min(d2);
    }
    best
}

/// Random symmetric zero-diagonal distance matrix of a point cloud.
pub fn random_geometry(k: usize, dim: usize, rng: &mut impl Rng) -> DenseMatrix {
    let pts: Vec<Vec<f64>> = (0..=k).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    DenseMatrix::from_fn(k + 1, k + 1, |a, b| {
        pts[a].iter().zip(&pts[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    })
}

/// The alignment objective for one shared direction, summed pair by pair:
/// `mu sum (f_i - g_j)^2 W_ij + 1/2 sum (f_i - f_i')^2 Wx + 1/2 sum (g_j - g_j')^2 Wy`
/// with `f = X^T alpha`, `g = Y^T beta`.
pub fn pairwise_cost(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cross: &DenseMatrix,
    wx: &DenseMatrix,
    wy: &DenseMatrix,
    mu: f64,
    alpha: &[f64],
    beta: &[f64],
) -> f64 {
    let dot = |s: &Vec<f64>, w: &[f64]| s.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let f: Vec<f64> = xs.iter().map(|s| dot(s, alpha)).collect();
    let g: Vec<f64> = ys.iter().map(|s| dot(s, beta)).collect();
    let mut total = 0.0;
    for i in 0..f.len() {
        for j in 0..g.len() {
            total += mu * (f[i] - g[j]).powi(2) * cross[(i, j)];
        }
    }
    for i in 0..f.len() {
        for j in 0..f.len() {
            total += 0.5 * (f[i] - f[j]).powi(2) * wx[(i, j)];
        }
    }
    for i in 0..g.len() {
        for j in 0..g.len() {
            total += 0.5 * (g[i] - g[j]).powi(2) * wy[(i, j)];
        }
    }
    total
}

/// Runs random-rule episodes until `jobs` jobs completed and returns, per
/// completed job, the summed per-step reward and the penalty it should
/// telescope to.
pub fn telescoping_pairs(config: &ShopConfig, jobs: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut episode = 0u64;
    while out.len() < jobs {
        let mut shop = Shop::new(config.clone(), seed + episode).unwrap();
        let mut rule = HeuristicDispatcher::new(HeuristicKind::Random, seed + episode);
        let mut sums: HashMap<JobId, f64> = HashMap::new();
        for _ in 0..config.traj_len {
            run_selection(&mut shop, &mut rule).unwrap();
            let step = shop.advance_time();
            if let Some((id, r)) = step.processing {
                *sums.entry(id).or_default() += r;
            }
            if let Some(done) = step.completed {
                let penalty = match config.objective {
                    Objective::Lateness => done.lateness(),
                    Objective::Tardiness => done.tardiness(),
                };
                out.push((sums[&done.id], -(penalty as f64)));
            }
        }
        episode += 1;
    }
    out
}
