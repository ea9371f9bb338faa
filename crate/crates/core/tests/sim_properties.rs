mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shopfloor::sim::{lateness_tardiness, slack_of, DispatchOutcome, StepOutcome};
use shopfloor::{Action, JobSpec, Objective, Shop, ShopConfig, ShopState};

fn config_for(lambda: f64, objective: Objective, reduced: bool) -> ShopConfig {
    let base = if reduced { ShopConfig::reduced() } else { ShopConfig::default() };
    ShopConfig { arrival_prob: lambda, objective, ..base }
}

/// Steps a shop with uniformly random actions, calling `check` after every
/// action and every clock tick.
fn random_walk(
    config: &ShopConfig,
    seed: u64,
    steps: usize,
    mut check: impl FnMut(&ShopState, Option<&StepOutcome>),
) -> (Vec<f64>, Vec<Action>) {
    let mut shop = Shop::new(config.clone(), seed).unwrap();
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut rewards = Vec::new();
    let mut actions = Vec::new();
    for _ in 0..steps {
        loop {
            let a = Action::from_index(pick.gen_range(0..=config.slots));
            actions.push(a);
            let outcome = shop.apply_action(a).unwrap();
            check(shop.state(), None);
            if outcome.ends_selection() {
                break;
            }
        }
        let step = shop.advance_time();
        check(shop.state(), Some(&step));
        rewards.push(step.reward);
    }
    (rewards, actions)
}

fn conserved(state: &ShopState) -> bool {
    let in_slots = state.slots.iter().flatten().count() as u64;
    let total = in_slots
        + state.backlog.len() as u64
        + state.scheduled.len() as u64
        + state.completed.len() as u64
        + state.dropped;
    total == state.arrived
}

fn blocks_consistent(state: &ShopState) -> bool {
    state.scheduled.iter().all(|(id, sj)| {
        let cells: Vec<usize> = (0..state.schedule.len()).filter(|&i| state.schedule[i] == Some(*id)).collect();
        let contiguous = cells.windows(2).all(|w| w[1] == w[0] + 1);
        let end_matches = cells.last().map(|&e| (e + 1) as i64) == Some(sj.completion - state.clock);
        !cells.is_empty() && contiguous && end_matches
    }) && state.schedule.iter().flatten().all(|id| state.scheduled.contains_key(id))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jobs_are_conserved_and_blocks_stay_contiguous(
        seed in any::<u64>(),
        lambda in 0.05f64..0.95,
        reduced in any::<bool>(),
    ) {
        let cfg = config_for(lambda, Objective::Lateness, reduced);
        let mut ok = true;
        let mut shrinking = true;
        let mut prev: Option<ShopState> = None;
        random_walk(&cfg, seed, 120, |s, step| {
            ok &= conserved(s) && blocks_consistent(s) && s.backlog.len() <= cfg.backlog;
            if let (Some(p), Some(_)) = (&prev, step) {
                // A job in cell 0 before the tick loses exactly one cell.
                if let Some(id) = p.schedule[0] {
                    let before = p.schedule.iter().filter(|c| **c == Some(id)).count();
                    let after = s.schedule.iter().filter(|c| **c == Some(id)).count();
                    shrinking &= after + 1 == before;
                }
            }
            prev = Some(s.clone());
        });
        prop_assert!(ok);
        prop_assert!(shrinking);
    }

    #[test]
    fn per_step_rewards_telescope_to_job_penalty(seed in 0u64..10_000, tardiness in any::<bool>()) {
        let objective = if tardiness { Objective::Tardiness } else { Objective::Lateness };
        let cfg = config_for(0.6, objective, false);
        for (sum, want) in common::telescoping_pairs(&cfg, 20, seed) {
            prop_assert!((sum - want).abs() < 1e-9, "{sum} vs {want}");
        }
    }

    #[test]
    fn same_seed_and_actions_reproduce_the_episode(seed in any::<u64>(), lambda in 0.1f64..0.9) {
        let cfg = config_for(lambda, Objective::Tardiness, true);
        let mut states_a = Vec::new();
        let mut states_b = Vec::new();
        let a = random_walk(&cfg, seed, 60, |s, _| states_a.push(s.clone()));
        let b = random_walk(&cfg, seed, 60, |s, _| states_b.push(s.clone()));
        prop_assert_eq!(a, b);
        prop_assert_eq!(states_a, states_b);
    }

    #[test]
    fn tardiness_never_exceeds_lateness(c in -1000i64..1000, d in -1000i64..1000) {
        let (l, ta) = lateness_tardiness(c, d);
        prop_assert!(ta >= 0 && l >= 0 && ta <= l);
        prop_assert_eq!(l, (c - d).abs());
    }

    #[test]
    fn void_and_invalid_leave_the_state_unchanged(seed in any::<u64>(), slot in 1usize..=5) {
        let cfg = ShopConfig::reduced();
        let mut shop = Shop::new(cfg, seed).unwrap();
        for _ in 0..15 {
            shop.advance_time();
        }
        let before = shop.state().clone();
        prop_assert_eq!(shop.apply_action(Action::Void).unwrap(), DispatchOutcome::Void);
        prop_assert_eq!(shop.state(), &before);
        let outcome = shop.apply_action(Action::Slot(slot)).unwrap();
        if outcome == DispatchOutcome::Invalid {
            prop_assert_eq!(shop.state(), &before);
        } else {
            prop_assert!(before.slots[slot - 1].is_some());
        }
    }
}

#[test]
fn arrival_rate_matches_lambda() {
    let cfg = ShopConfig { arrival_prob: 0.9, ..ShopConfig::default() };
    let mut shop = Shop::new(cfg, 3).unwrap();
    let steps = 10_000;
    let arrivals = (0..steps).filter(|_| shop.advance_time().arrived.is_some()).count();
    let rate = arrivals as f64 / steps as f64;
    assert!((rate - 0.9).abs() <= 0.02, "rate {rate}");
}

#[test]
fn fresh_shop_is_empty() {
    let shop = Shop::new(ShopConfig::default(), 7).unwrap();
    let s = shop.state();
    assert_eq!(s.schedule.len(), 15);
    assert!(s.schedule.iter().all(Option::is_none));
    assert_eq!(s.slots.len(), 10);
    assert!(s.slots.iter().all(Option::is_none));
    assert!(s.backlog.is_empty());
    assert_eq!(s.clock, 0);
}

#[test]
fn figure_schedule_rejects_a_two_step_job() {
    let cfg = ShopConfig { horizon: 5, slack_len: 3, slots: 4, long_range: shopfloor::IntRange(3, 5), ..ShopConfig::default() };
    let mut shop = Shop::new(cfg, 0).unwrap();
    let busy = JobSpec { id: 90, arrival_time: 0, proc_time: 4, due_time: 6 };
    shop.state_mut().slots[0] = Some(busy);
    assert!(matches!(shop.apply_action(Action::Slot(1)).unwrap(), DispatchOutcome::Scheduled { completion: 4 }));
    shop.state_mut().slots[1] = Some(JobSpec { id: 91, arrival_time: 0, proc_time: 2, due_time: 9 });
    assert_eq!(shop.apply_action(Action::Slot(2)).unwrap(), DispatchOutcome::Invalid);
}

#[test]
fn slack_examples() {
    let job = |p, d| JobSpec { id: 0, arrival_time: 0, proc_time: p, due_time: d };
    assert_eq!(slack_of(&job(3, 10), 5), 2);
    assert_eq!(slack_of(&job(2, 4), 3), -1);
}

#[test]
fn full_shop_drops_with_penalty() {
    let cfg = ShopConfig { arrival_prob: 0.999_999, slots: 1, backlog: 1, ..ShopConfig::reduced() };
    let mut shop = Shop::new(cfg, 1).unwrap();
    let mut dropped = None;
    for _ in 0..10 {
        let step = shop.advance_time();
        if step.dropped {
            dropped = Some(step.reward);
            break;
        }
    }
    assert_eq!(dropped, Some(-10.0));
}
