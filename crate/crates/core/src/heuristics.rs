//! Rule-based dispatchers and the neural hyper-heuristic that imitates them.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_state, Geometry, StateVariant};
use crate::config::ShopConfig;
use crate::error::{Error, Result};
use crate::policy::{layer_dims, train_supervised, PolicyParams, SupervisedOptions, SupervisedReport, DEFAULT_HIDDEN};
use crate::rng;
use crate::sim::{slack_of, Action, Dispatcher, Shop, ShopState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicKind {
    /// Earliest due date first.
    Edf,
    /// Least slack time first.
    Lst,
    Random,
}

impl fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicKind::Edf => "edf",
            HeuristicKind::Lst => "lst",
            HeuristicKind::Random => "random",
        })
    }
}

impl std::str::FromStr for HeuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edf" => Ok(HeuristicKind::Edf),
            "lst" => Ok(HeuristicKind::Lst),
            "random" => Ok(HeuristicKind::Random),
            other => Err(Error::usage(format!("unknown heuristic `{other}`"))),
        }
    }
}

/// Slots (1-based) holding a job that fits some free block of the horizon.
pub fn fitting_slots(state: &ShopState) -> Vec<usize> {
    (1..=state.slots.len()).filter(|&i| state.slot_fits(i)).collect()
}

/// One decision of the rule. Only fitting jobs are considered; ties go to
/// the lowest slot; `Void` when nothing fits.
pub fn heuristic_action<R: Rng + ?Sized>(kind: HeuristicKind, state: &ShopState, rng: &mut R) -> Action {
    let candidates = fitting_slots(state);
    if candidates.is_empty() {
        return Action::Void;
    }
    let job = |i: usize| state.slots[i - 1].expect("fitting slot is occupied");
    let pick = match kind {
        HeuristicKind::Edf => *candidates
            .iter()
            .min_by_key(|&&i| (job(i).due_time, i))
            .expect("nonempty"),
        HeuristicKind::Lst => *candidates
            .iter()
            .min_by_key(|&&i| (slack_of(&job(i), state.clock), i))
            .expect("nonempty"),
        HeuristicKind::Random => candidates[rng.gen_range(0..candidates.len())],
    };
    Action::Slot(pick)
}

#[derive(Clone, Debug)]
pub struct HeuristicDispatcher {
    pub kind: HeuristicKind,
    rng: ChaCha8Rng,
}

impl HeuristicDispatcher {
    pub fn new(kind: HeuristicKind, seed: u64) -> Self {
        Self {
            kind,
            rng: rng::stream(seed, "heuristic"),
        }
    }
}

impl Dispatcher for HeuristicDispatcher {
    fn decide(&mut self, shop: &Shop) -> Action {
        heuristic_action(self.kind, shop.state(), &mut self.rng)
    }
}

/// Rolls the rule out on fresh episodes and records `(state, action)` for
/// every decision until `samples` pairs are collected.
pub fn collect_demonstrations(
    kind: HeuristicKind,
    config: &ShopConfig,
    samples: usize,
    seed: u64,
    variant: StateVariant,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut data = Vec::with_capacity(samples);
    let mut episode = 0u64;
    while data.len() < samples {
        let env_seed = rng::derive_seed(seed, &[episode, 0x1317]);
        let mut shop = Shop::new(config.clone(), env_seed)?;
        let mut rule = HeuristicDispatcher::new(kind, rng::derive_seed(seed, &[episode, 0x1318]));
        'episode: for _ in 0..config.traj_len {
            loop {
                let obs = encode_state(shop.state(), config)?.masked(variant);
                let action = rule.decide(&shop);
                data.push((obs.into_flat(), action.index()));
                if data.len() >= samples {
                    break 'episode;
                }
                if shop.apply_action(action)?.ends_selection() {
                    break;
                }
            }
            shop.advance_time();
        }
        episode += 1;
    }
    Ok(data)
}

/// Settings for training a hyper-heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImitationOptions {
    pub hidden: Vec<usize>,
    pub supervised: SupervisedOptions,
    pub variant: StateVariant,
}

impl Default for ImitationOptions {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            supervised: SupervisedOptions {
                epochs: 60,
                lr: 0.05,
                batch_size: 32,
                clip_norm: Some(5.0),
                seed: 0,
            },
            variant: StateVariant::ProcSlack,
        }
    }
}

/// Trains a policy network to reproduce `kind` from `samples` demonstrations.
pub fn train_imitation(
    kind: HeuristicKind,
    config: &ShopConfig,
    samples: usize,
    seed: u64,
    opts: &ImitationOptions,
) -> Result<(PolicyParams, SupervisedReport)> {
    if samples == 0 {
        return Err(Error::usage("imitation needs at least one sample"));
    }
    let data = collect_demonstrations(kind, config, samples, seed, opts.variant)?;
    let dims = layer_dims(Geometry::of(config), &opts.hidden);
    let init = PolicyParams::init(&dims, rng::derive_seed(seed, &[0x1319]))?;
    train_supervised(&init, &data, &opts.supervised)
}
