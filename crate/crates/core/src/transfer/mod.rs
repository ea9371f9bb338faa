//! Policy transfer between shop configurations.
//!
//! States sampled from both shops are aligned into a shared space, giving a
//! linear map `chi` from source to target states. Trajectories of the source
//! policy are mapped through `chi`, actions are recovered from consecutive
//! mapped states, and a target policy is fitted to them and fine-tuned.

mod align;
mod recover;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use align::{
    align, align_with_weights, build_weights, geometry_distance, laplacian, local_geometry, pairwise_distances,
    AlignmentCheckpoint, AlignmentConfig, AlignmentModel, AlignmentProblem, Weights, TRIVIAL_VARIANCE,
};
pub use recover::{recover_action, recover_labels, recover_policy};

use crate::codec::{encode_state, Geometry, StateVariant};
use crate::config::ShopConfig;
use crate::error::{Error, Result};
use crate::policy::{PolicyDispatcher, PolicyParams, SelectMode, SupervisedOptions, SupervisedReport};
use crate::reinforce::{train_reinforce, train_reinforce_from, ReinforceOptions, TrainReport};
use crate::rng;
use crate::sim::{Action, Dispatcher, Shop};

/// Encoded decision states of uniformly random rollouts.
pub fn sample_states(config: &ShopConfig, count: usize, seed: u64, variant: StateVariant) -> Result<Vec<Vec<f64>>> {
    let actions = Geometry::of(config).actions();
    let mut out = Vec::with_capacity(count);
    let mut episode = 0u64;
    while out.len() < count {
        let mut shop = Shop::new(config.clone(), rng::derive_seed(seed, &[episode, 0x5a]))?;
        let mut pick = rng::stream(rng::derive_seed(seed, &[episode, 0x5b]), "random-states");
        'episode: for _ in 0..config.traj_len {
            loop {
                out.push(encode_state(shop.state(), config)?.masked(variant).into_flat());
                if out.len() >= count {
                    break 'episode;
                }
                let a = Action::from_index(pick.gen_range(0..actions));
                if shop.apply_action(a)?.ends_selection() {
                    break;
                }
            }
            shop.advance_time();
        }
        episode += 1;
    }
    Ok(out)
}

/// Decision-state sequences of `episodes` rollouts of `dispatcher_for(i)`.
pub fn state_trajectories<D: Dispatcher>(
    config: &ShopConfig,
    episodes: usize,
    seed: u64,
    variant: StateVariant,
    mut dispatcher_for: impl FnMut(usize) -> D,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut shop = Shop::new(config.clone(), rng::derive_seed(seed, &[e as u64, 0x7a]))?;
        let mut d = dispatcher_for(e);
        let mut states = Vec::new();
        for _ in 0..config.traj_len {
            loop {
                states.push(encode_state(shop.state(), config)?.masked(variant).into_flat());
                let a = d.decide(&shop);
                if shop.apply_action(a)?.ends_selection() {
                    break;
                }
            }
            shop.advance_time();
        }
        out.push(states);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferOptions {
    pub align: AlignmentConfig,
    /// Source-policy rollouts mapped into the target space.
    pub demo_trajectories: usize,
    /// Round mapped states to -1, 0, 1.
    pub quantize: bool,
    pub imitation: SupervisedOptions,
    pub fine_tune: ReinforceOptions,
    /// Also train a from-scratch target policy with the same seeds.
    pub compare_scratch: bool,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            align: AlignmentConfig::default(),
            demo_trajectories: 10,
            quantize: false,
            imitation: SupervisedOptions {
                epochs: 60,
                lr: 0.05,
                ..SupervisedOptions::default()
            },
            fine_tune: ReinforceOptions::default(),
            compare_scratch: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferOutcome {
    pub model: AlignmentModel,
    /// Policy fitted to the recovered actions, before fine-tuning.
    pub recovered: PolicyParams,
    pub recovery: SupervisedReport,
    pub params: PolicyParams,
    pub transfer_curve: TrainReport,
    pub scratch_curve: Option<TrainReport>,
}

/// Aligns random states of both shops, then transfers through the fitted map.
pub fn transfer_pipeline(
    source_params: &PolicyParams,
    source_cfg: &ShopConfig,
    target_cfg: &ShopConfig,
    opts: &TransferOptions,
    seed: u64,
) -> Result<TransferOutcome> {
    opts.align.validate()?;
    let variant = opts.fine_tune.variant;
    let xs = sample_states(source_cfg, opts.align.source_samples, rng::derive_seed(seed, &[1]), variant)?;
    let ys = sample_states(target_cfg, opts.align.target_samples, rng::derive_seed(seed, &[2]), variant)?;
    let model = align(&xs, &ys, &opts.align)?;
    transfer_with_model(source_params, source_cfg, target_cfg, model, opts, seed)
}

/// Transfer steps after alignment: map source rollouts, recover a target
/// policy, fine-tune it and optionally train a scratch baseline.
pub fn transfer_with_model(
    source_params: &PolicyParams,
    source_cfg: &ShopConfig,
    target_cfg: &ShopConfig,
    model: AlignmentModel,
    opts: &TransferOptions,
    seed: u64,
) -> Result<TransferOutcome> {
    let variant = opts.fine_tune.variant;
    let sg = Geometry::of(source_cfg);
    let tg = Geometry::of(target_cfg);
    if model.source_dim() != sg.dim() || model.target_dim() != tg.dim() {
        return Err(Error::usage(format!(
            "alignment maps {} -> {}, shops need {} -> {}",
            model.source_dim(),
            model.target_dim(),
            sg.dim(),
            tg.dim()
        )));
    }
    let demos = state_trajectories(source_cfg, opts.demo_trajectories, rng::derive_seed(seed, &[3]), variant, |_| {
        PolicyDispatcher::new(source_params.clone(), SelectMode::Greedy, variant, 0)
    })?;
    let mapped = demos
        .iter()
        .map(|traj| traj.iter().map(|s| model.map_state(s, opts.quantize)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let (recovered, recovery) = recover_policy(&mapped, tg, &opts.fine_tune.hidden, &opts.imitation, seed)?;
    let (params, transfer_curve) =
        train_reinforce_from(target_cfg, recovered.clone(), &opts.fine_tune, seed, |_, _| Ok(()))?;
    let scratch_curve = if opts.compare_scratch {
        Some(train_reinforce(target_cfg, &opts.fine_tune, seed)?.1)
    } else {
        None
    };
    Ok(TransferOutcome {
        model,
        recovered,
        recovery,
        params,
        transfer_curve,
        scratch_curve,
    })
}

/// First iteration at which `curve` reaches `level`.
pub fn iterations_to_reach(curve: &[f64], level: f64) -> Option<usize> {
    curve.iter().position(|&v| v >= level)
}
