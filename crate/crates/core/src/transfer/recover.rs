//! Inferring actions from consecutive states and fitting a policy to them.

use crate::codec::{remove_job_columns, Geometry, StateMatrix};
use crate::error::{Error, Result};
use crate::policy::{layer_dims, train_supervised, PolicyParams, SupervisedOptions, SupervisedReport};
use crate::rng;
use crate::sim::Action;

fn distance2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The action whose simulated effect on `prev` lands nearest to `next`.
///
/// Candidates are `prev` itself (for `Void`) and `prev` with each non-empty
/// slot column removed. Ties go to `Void`, then to the lowest slot.
pub fn recover_action(prev: &[f64], next: &[f64], geometry: Geometry) -> Result<Action> {
    if prev.len() != geometry.dim() || next.len() != geometry.dim() {
        return Err(Error::usage(format!(
            "states of dimension {} and {} do not match geometry dimension {}",
            prev.len(),
            next.len(),
            geometry.dim()
        )));
    }
    let s = StateMatrix::from_flat(geometry, prev.to_vec())?;
    let mut best = (distance2(prev, next), Action::Void);
    for slot in 1..=geometry.slots {
        if s.column(slot).iter().all(|&v| v == 0.0) {
            continue;
        }
        let cand = remove_job_columns(&s, slot)?;
        let d = distance2(cand.as_flat(), next);
        if d < best.0 {
            best = (d, Action::Slot(slot));
        }
    }
    Ok(best.1)
}

/// `(state, recovered action)` for every consecutive pair in each trajectory.
pub fn recover_labels(trajectories: &[Vec<Vec<f64>>], geometry: Geometry) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut out = Vec::new();
    for traj in trajectories {
        for w in traj.windows(2) {
            let a = recover_action(&w[0], &w[1], geometry)?;
            out.push((w[0].clone(), a.index()));
        }
    }
    Ok(out)
}

/// Fits a fresh policy to actions recovered from target-space trajectories.
pub fn recover_policy(
    trajectories: &[Vec<Vec<f64>>],
    geometry: Geometry,
    hidden: &[usize],
    opts: &SupervisedOptions,
    seed: u64,
) -> Result<(PolicyParams, SupervisedReport)> {
    let data = recover_labels(trajectories, geometry)?;
    if data.is_empty() {
        return Err(Error::usage("no consecutive state pairs to recover actions from"));
    }
    let init = PolicyParams::init(&layer_dims(geometry, hidden), rng::derive_seed(seed, &[0x2ec0]))?;
    train_supervised(&init, &data, opts)
}
