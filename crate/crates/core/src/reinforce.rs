//! REINFORCE with a time-indexed baseline.
//!
//! Discounting runs over environment time, not over decisions: every
//! decision made during step `t` shares the return `R_t` and the baseline
//! `b_t` (the batch mean of `R_t`). The update ascends the batch mean of
//! `grad log pi(a | s) * (R_t - b_t)` over all decision records.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{encode_state, Geometry, StateVariant};
use crate::config::ShopConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::policy::{clip_global_norm, layer_dims, log_softmax, select_action, PolicyParams, SelectMode, DEFAULT_HIDDEN};
use crate::rng;
use crate::sim::Shop;

/// One decision: observation, chosen action and its log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub env_time: usize,
    pub state: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<DecisionRecord>,
    /// Reward of each environment step.
    pub rewards: Vec<f64>,
    pub metrics: MetricsRow,
}

/// Trajectories sampled under one parameter vector.
#[derive(Clone, Debug)]
pub struct Batch {
    pub trajectories: Vec<Trajectory>,
    pub gamma: f64,
    params_fingerprint: u64,
}

impl Batch {
    /// Wraps trajectories collected under `params`.
    pub fn new(trajectories: Vec<Trajectory>, params: &PolicyParams, gamma: f64) -> Self {
        Self {
            trajectories,
            gamma,
            params_fingerprint: params.fingerprint(),
        }
    }

    pub fn metrics(&self) -> MetricsRow {
        let rows: Vec<MetricsRow> = self.trajectories.iter().map(|t| t.metrics.clone()).collect();
        MetricsRow::mean(&rows)
    }
}

/// Samples one trajectory per entry of `env_seeds` under `params`.
pub fn collect_trajectories(
    config: &ShopConfig,
    params: &PolicyParams,
    variant: StateVariant,
    env_seeds: &[u64],
    action_seed: u64,
) -> Result<Batch> {
    if env_seeds.is_empty() {
        return Err(Error::usage("batch needs at least one trajectory"));
    }
    let geometry = Geometry::of(config);
    if params.input_dim() != geometry.dim() || params.num_actions() != geometry.actions() {
        return Err(Error::usage(format!(
            "policy dims {:?} do not fit shop geometry {geometry:?}",
            params.dims()
        )));
    }
    let mut trajectories = Vec::with_capacity(env_seeds.len());
    for (j, &env_seed) in env_seeds.iter().enumerate() {
        let mut shop = Shop::new(config.clone(), env_seed)?;
        let mut action_rng = rng::stream(rng::derive_seed(action_seed, &[j as u64]), "reinforce-actions");
        let mut records = Vec::new();
        let mut rewards = Vec::with_capacity(config.traj_len);
        for t in 0..config.traj_len {
            loop {
                let obs = encode_state(shop.state(), config)?.masked(variant).into_flat();
                let logits = params.logits(&obs)?;
                let logp = log_softmax(&logits);
                let probs: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
                let action = select_action(&probs, SelectMode::Sample, &mut action_rng);
                let outcome = shop.apply_action(action)?;
                records.push(DecisionRecord {
                    env_time: t,
                    state: obs,
                    action: action.index(),
                    log_prob: logp[action.index()],
                });
                if outcome.ends_selection() {
                    break;
                }
            }
            rewards.push(shop.advance_time().reward);
        }
        let metrics = MetricsRow::from_episode(&rewards, shop.state(), config.gamma);
        trajectories.push(Trajectory {
            records,
            rewards,
            metrics,
        });
    }
    Ok(Batch::new(trajectories, params, config.gamma))
}

/// `R_t = r_t + gamma R_{t+1}` for every `t`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Per-time mean of the returns across trajectories. Shorter trajectories
/// simply do not contribute to later times.
pub fn compute_baselines(returns: &[Vec<f64>]) -> Result<Vec<f64>> {
    if returns.is_empty() {
        return Err(Error::usage("baseline of an empty batch"));
    }
    let horizon = returns.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![NeumaierSum::default(); horizon];
    let mut counts = vec![0usize; horizon];
    for r in returns {
        for (t, v) in r.iter().enumerate() {
            sums[t].add(*v);
            counts[t] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.value() / c as f64)
        .collect())
}

/// Compensated summation; makes accumulated sums insensitive to order up
/// to the last bit or so.
#[derive(Clone, Copy, Debug, Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Ascent direction and surrogate loss of one batch.
#[derive(Clone, Debug)]
pub struct PolicyGradient {
    /// Gradient of the mean surrogate `log pi * (R - b)`.
    pub gradient: Vec<f64>,
    /// Negated mean surrogate.
    pub loss: f64,
    pub records: usize,
}

/// Computes the policy gradient; fails if `params` changed since the batch
/// was collected.
pub fn policy_gradient(params: &PolicyParams, batch: &Batch) -> Result<PolicyGradient> {
    if batch.params_fingerprint != params.fingerprint() {
        return Err(Error::usage(
            "stale batch: parameters changed since the trajectories were collected",
        ));
    }
    let returns: Vec<Vec<f64>> = batch
        .trajectories
        .iter()
        .map(|t| discounted_returns(&t.rewards, batch.gamma))
        .collect();
    let baselines = compute_baselines(&returns)?;
    let records: usize = batch.trajectories.iter().map(|t| t.records.len()).sum();
    if records == 0 {
        return Err(Error::usage("batch has no decision records"));
    }
    let scale = 1.0 / records as f64;
    let mut acc = vec![NeumaierSum::default(); params.len()];
    let mut scratch = vec![0.0; params.len()];
    let mut loss = NeumaierSum::default();
    for (traj, ret) in batch.trajectories.iter().zip(&returns) {
        for rec in &traj.records {
            let advantage = ret[rec.env_time] - baselines[rec.env_time];
            if advantage == 0.0 {
                continue;
            }
            scratch.iter_mut().for_each(|g| *g = 0.0);
            let logp = params.accumulate_log_prob_grad(&rec.state, rec.action, advantage * scale, &mut scratch)?;
            for (a, g) in acc.iter_mut().zip(&scratch) {
                if *g != 0.0 {
                    a.add(*g);
                }
            }
            loss.add(-logp * advantage * scale);
        }
    }
    Ok(PolicyGradient {
        gradient: acc.iter().map(NeumaierSum::value).collect(),
        loss: loss.value(),
        records,
    })
}

/// One ascent step on the batch surrogate.
pub fn policy_gradient_update(
    params: &PolicyParams,
    batch: &Batch,
    lr: f64,
    clip_norm: Option<f64>,
) -> Result<(PolicyParams, f64)> {
    let pg = policy_gradient(params, batch)?;
    let mut next = params.clone();
    let mut descent: Vec<f64> = pg.gradient.iter().map(|g| -g).collect();
    next.descend(&mut descent, lr, clip_norm);
    Ok((next, pg.loss))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Gradient-descent state; `step` takes a descent direction (the negated
/// ascent gradient) and updates `params` in place.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, descent: &mut [f64], lr: f64, clip_norm: Option<f64>) {
        match self {
            Optimizer::Sgd => params.descend(descent, lr, clip_norm),
            Optimizer::Adam { m, v, t } => {
                if let Some(c) = clip_norm {
                    clip_global_norm(descent, c);
                }
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for (((p, g), m), v) in params.values_mut().iter_mut().zip(descent.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinforceOptions {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub optimizer: OptimizerKind,
    pub hidden: Vec<usize>,
    pub variant: StateVariant,
    /// Environment seeds of the training trajectories; `0..batch_size`
    /// when empty.
    pub train_seeds: Vec<u64>,
}

impl Default for ReinforceOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch_size: 10,
            lr: 1e-3,
            clip_norm: Some(5.0),
            optimizer: OptimizerKind::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            variant: StateVariant::ProcSlack,
            train_seeds: Vec::new(),
        }
    }
}

impl ReinforceOptions {
    pub fn env_seeds(&self) -> Vec<u64> {
        if self.train_seeds.is_empty() {
            (0..self.batch_size as u64).collect()
        } else {
            self.train_seeds.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: usize,
    pub mean_discounted_reward: f64,
    pub mean_lateness: f64,
    pub mean_tardiness: f64,
    pub loss: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Learning curve: one row per iteration, measured on the batch collected
/// before that iteration's update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<ReportRow>,
}

impl TrainReport {
    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_discounted_reward).collect()
    }

    /// CSV with columns
    /// `iteration,mean_discounted_reward,mean_lateness,mean_tardiness,loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("learning curve csv", e))
    }
}

/// Trains from a fresh initialization seeded by `seed`.
pub fn train_reinforce(
    config: &ShopConfig,
    opts: &ReinforceOptions,
    seed: u64,
) -> Result<(PolicyParams, TrainReport)> {
    let dims = layer_dims(Geometry::of(config), &opts.hidden);
    let init = PolicyParams::init(&dims, rng::derive_seed(seed, &[0x5eed]))?;
    train_reinforce_from(config, init, opts, seed, |_, _| Ok(()))
}

/// Trains starting at `params`; `on_iteration` sees the parameters after
/// every update (for checkpointing).
pub fn train_reinforce_from(
    config: &ShopConfig,
    params: PolicyParams,
    opts: &ReinforceOptions,
    seed: u64,
    mut on_iteration: impl FnMut(usize, &PolicyParams) -> Result<()>,
) -> Result<(PolicyParams, TrainReport)> {
    let env_seeds = opts.env_seeds();
    let started = Instant::now();
    let mut params = params;
    let mut optimizer = Optimizer::new(opts.optimizer, params.len());
    let mut report = TrainReport::default();
    for it in 0..opts.iterations {
        let batch = collect_trajectories(
            config,
            &params,
            opts.variant,
            &env_seeds,
            rng::derive_seed(seed, &[0xac7, it as u64]),
        )?;
        let m = batch.metrics();
        let pg = policy_gradient(&params, &batch)?;
        let mut descent: Vec<f64> = pg.gradient.iter().map(|g| -g).collect();
        optimizer.step(&mut params, &mut descent, opts.lr, opts.clip_norm);
        let loss = pg.loss;
        report.rows.push(ReportRow {
            iteration: it,
            mean_discounted_reward: m.total_discounted_reward,
            mean_lateness: m.average_lateness,
            mean_tardiness: m.average_tardiness,
            loss,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        on_iteration(it, &params)?;
    }
    Ok((params, report))
}
