//! Independent oracles for the eigensolvers, SVD and pseudo-inverse.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shopfloor_linalg::{generalized_eig_smallest, pinv, svd, sym_eig, DenseMatrix};

fn random_symmetric(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let mut a = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.symmetrize();
    a
}

fn random_spd(n: usize, rng: &mut impl Rng) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut b = g.matmul_transpose(&g).unwrap();
    for i in 0..n {
        b[(i, i)] += n as f64 * 0.1;
    }
    b
}

/// Number of eigenvalues of the pencil (A, B) below `lambda`, from the
/// inertia of `A - lambda B` (Sylvester's law, B positive definite).
fn count_below(a: &DenseMatrix, b: &DenseMatrix, lambda: f64) -> usize {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] - lambda * b[(i, j)]).collect())
        .collect();
    let mut negatives = 0;
    // Symmetric LDL^T without pivoting; generic random inputs avoid zero pivots.
    for k in 0..n {
        let d = m[k][k];
        if d < 0.0 {
            negatives += 1;
        }
        for i in (k + 1)..n {
            let f = m[i][k] / d;
            for j in (k + 1)..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    negatives
}

fn bisection_eigenvalues(a: &DenseMatrix, b: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let bound = 1e4;
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

#[test]
fn generalized_eigenvalues_match_inertia_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2usize, 3, 6, 10, 20] {
        for _ in 0..3 {
            let a = random_symmetric(n, &mut rng);
            let b = random_spd(n, &mut rng);
            let eig = generalized_eig_smallest(&a, &b, n, 0.0).unwrap();
            let oracle = bisection_eigenvalues(&a, &b);
            for (got, want) in eig.values.iter().zip(&oracle) {
                assert!((got - want).abs() <= 1e-8, "n={n}: {got} vs {want}");
            }
            for j in 0..n {
                let v = eig.vector(j);
                let av = a.matvec(&v).unwrap();
                let bv = b.matvec(&v).unwrap();
                let res: f64 = av
                    .iter()
                    .zip(&bv)
                    .map(|(x, y)| (x - eig.values[j] * y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-8, "residual {res}");
            }
        }
    }
}

#[test]
fn penrose_conditions_on_random_rectangular() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a = DenseMatrix::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
        let p = pinv(&a, 1e-12).unwrap();
        assert_penrose(&a, &p, 1e-8);
    }
}

#[test]
fn penrose_conditions_on_rank_deficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = DenseMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
    let v = DenseMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
    let a = u.matmul_transpose(&v).unwrap();
    let p = pinv(&a, 1e-10).unwrap();
    assert_penrose(&a, &p, 1e-8);
}

fn assert_penrose(a: &DenseMatrix, p: &DenseMatrix, tol: f64) {
    let apa = a.matmul(p).unwrap().matmul(a).unwrap();
    assert!(apa.sub(a).unwrap().max_abs() <= tol);
    let pap = p.matmul(a).unwrap().matmul(p).unwrap();
    assert!(pap.sub(p).unwrap().max_abs() <= tol);
    let ap = a.matmul(p).unwrap();
    assert!(ap.sub(&ap.transpose()).unwrap().max_abs() <= tol);
    let pa = p.matmul(a).unwrap();
    assert!(pa.sub(&pa.transpose()).unwrap().max_abs() <= tol);
}

#[test]
fn svd_matches_gram_matrix_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = DenseMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0));
    let dec = svd(&a).unwrap();
    assert!(dec.reconstruct().sub(&a).unwrap().max_abs() <= 1e-8);
    // Eigenvalues of A A^T (4x4) are the squared singular values.
    let gram = a.matmul_transpose(&a).unwrap();
    let mut ev = sym_eig(&gram).unwrap().values;
    ev.reverse();
    for (s, e) in dec.sigma.iter().zip(&ev) {
        assert!((s * s - e).abs() <= 1e-10);
    }
    assert!(dec.sigma.windows(2).all(|w| w[0] >= w[1]));
    let utu = dec.u.transpose().matmul(&dec.u).unwrap();
    assert!(utu.sub(&DenseMatrix::identity(4)).unwrap().max_abs() <= 1e-10);
    let vtv = dec.v.transpose().matmul(&dec.v).unwrap();
    assert!(vtv.sub(&DenseMatrix::identity(4)).unwrap().max_abs() <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generalized_residual_and_b_orthonormality(n in 1usize..=50, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let k = n.min(5);
        let eig = generalized_eig_smallest(&a, &b, k, 0.0).unwrap();
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..k {
            let vi = eig.vector(i);
            let av = a.matvec(&vi).unwrap();
            let bv = b.matvec(&vi).unwrap();
            let res = av.iter().zip(&bv).map(|(x, y)| (x - eig.values[i] * y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-8, "residual {}", res);
            for j in 0..k {
                let vj = eig.vector(j);
                let bvj = b.matvec(&vj).unwrap();
                let ip: f64 = vi.iter().zip(&bvj).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn pinv_is_an_involution_on_full_rank(m in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..m.min(n) {
            a[(i, i)] += 3.0;
        }
        let back = pinv(&pinv(&a, 1e-12).unwrap(), 1e-12).unwrap();
        prop_assert!(back.sub(&a).unwrap().max_abs() <= 1e-7);
    }

    #[test]
    fn routines_are_deterministic(n in 1usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(n, &mut rng);
        let e1 = sym_eig(&a).unwrap();
        let e2 = sym_eig(&a).unwrap();
        prop_assert_eq!(e1.values, e2.values);
        prop_assert_eq!(e1.vectors, e2.vectors);
    }
}
