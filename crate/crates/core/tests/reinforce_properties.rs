mod common;

use proptest::prelude::*;
use shopfloor::codec::{Geometry, StateVariant};
use shopfloor::policy::layer_dims;
use shopfloor::reinforce::{
    collect_trajectories, compute_baselines, discounted_returns, policy_gradient, Batch, Optimizer, OptimizerKind,
};
use shopfloor::{PolicyParams, ShopConfig};

fn small_config() -> ShopConfig {
    ShopConfig { traj_len: 15, ..ShopConfig::reduced() }
}

fn small_policy(seed: u64) -> PolicyParams {
    PolicyParams::init(&layer_dims(Geometry::of(&small_config()), &[12]), seed).unwrap()
}

proptest! {
    #[test]
    fn returns_match_direct_sum(
        rewards in prop::collection::vec(-20.0f64..5.0, 0..200),
        gamma in 0.0f64..=1.0,
    ) {
        let got = discounted_returns(&rewards, gamma);
        let want = common::direct_returns(&rewards, gamma);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
        }
    }

    #[test]
    fn baselines_average_the_trajectories_alive_at_each_step(
        returns in prop::collection::vec(prop::collection::vec(-50.0f64..0.0, 1..30), 1..8),
    ) {
        let b = compute_baselines(&returns).unwrap();
        let horizon = returns.iter().map(Vec::len).max().unwrap();
        prop_assert_eq!(b.len(), horizon);
        for (t, bt) in b.iter().enumerate() {
            let alive: Vec<f64> = returns.iter().filter_map(|r| r.get(t).copied()).collect();
            let mean = alive.iter().sum::<f64>() / alive.len() as f64;
            prop_assert!((bt - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_ignores_trajectory_order(seed in any::<u64>(), rotate in 1usize..4) {
        let cfg = small_config();
        let params = small_policy(seed);
        let batch = collect_trajectories(&cfg, &params, StateVariant::ProcSlack, &[1, 2, 3, 4], seed).unwrap();
        let mut shuffled = batch.trajectories.clone();
        shuffled.rotate_left(rotate);
        shuffled.swap(0, 1);
        let other = Batch::new(shuffled, &params, batch.gamma);
        let a = policy_gradient(&params, &batch).unwrap();
        let b = policy_gradient(&params, &other).unwrap();
        prop_assert!(common::relative_error(&a.gradient, &b.gradient) <= 1e-12 || common::norm(&a.gradient) == 0.0);
        prop_assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss.abs().max(1.0));
    }

    #[test]
    fn identical_trajectories_give_zero_gradient(seed in any::<u64>()) {
        let cfg = small_config();
        let params = small_policy(seed);
        let one = collect_trajectories(&cfg, &params, StateVariant::ProcSlack, &[9], seed).unwrap();
        let twice = Batch::new(vec![one.trajectories[0].clone(); 3], &params, cfg.gamma);
        let g = policy_gradient(&params, &twice).unwrap();
        // Advantages vanish up to the rounding of the batch mean.
        prop_assert!(common::norm(&g.gradient) <= 1e-12);
    }
}

#[test]
fn small_ascent_step_raises_the_surrogate() {
    let cfg = small_config();
    let params = small_policy(5);
    let batch = collect_trajectories(&cfg, &params, StateVariant::ProcSlack, &[0, 1, 2, 3, 4, 5], 6).unwrap();
    let before = policy_gradient(&params, &batch).unwrap();
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let mut next = params.clone();
        let mut descent: Vec<f64> = before.gradient.iter().map(|g| -g).collect();
        Optimizer::new(kind, next.len()).step(&mut next, &mut descent, 1e-4, None);
        // Re-score the same decisions under the new parameters.
        let mut rescored = batch.trajectories.clone();
        for rec in rescored.iter_mut().flat_map(|t| t.records.iter_mut()) {
            rec.log_prob = next.log_prob(&rec.state, rec.action).unwrap();
        }
        let after = policy_gradient(&next, &Batch::new(rescored, &next, batch.gamma)).unwrap();
        assert!(after.loss < before.loss, "{kind:?}: {} -> {}", before.loss, after.loss);
    }
}

#[test]
fn stale_batches_are_rejected() {
    let cfg = small_config();
    let params = small_policy(1);
    let batch = collect_trajectories(&cfg, &params, StateVariant::ProcSlack, &[0, 1], 0).unwrap();
    let mut moved = params.clone();
    moved.values_mut()[0] += 1e-3;
    assert!(policy_gradient(&moved, &batch).is_err());
}
