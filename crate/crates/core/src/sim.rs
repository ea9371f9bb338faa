//! Discrete-time single-machine shop floor.
//!
//! Each environment step has two phases. During the selection phase the
//! dispatcher repeatedly picks a job slot (or `Void`); every valid pick
//! commits the job to the earliest contiguous free block of the `T`-step
//! schedule, and the phase ends at the first `Void` or invalid pick. Then
//! [`Shop::advance_time`] charges the per-step reward for the job in
//! processing, shifts the schedule, and draws at most one new arrival.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Objective, ShopConfig};
use crate::error::{Error, Result};
use crate::rng;

pub type JobId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: JobId,
    pub arrival_time: i64,
    /// Processing time `p >= 1`.
    pub proc_time: i64,
    pub due_time: i64,
}

/// Slack of a job at `t_curr`: `d - t_curr - p`.
pub fn slack_of(job: &JobSpec, t_curr: i64) -> i64 {
    job.due_time - t_curr - job.proc_time
}

/// Lateness `|c - d|` and tardiness `max(c - d, 0)` of a job completing at `c`.
pub fn lateness_tardiness(completion: i64, due: i64) -> (i64, i64) {
    ((completion - due).abs(), (completion - due).max(0))
}

/// A dispatching decision. Slots are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Void,
    Slot(usize),
}

impl Action {
    /// Position in the policy output: `Void` is 0, `Slot(i)` is `i`.
    pub fn index(self) -> usize {
        match self {
            Action::Void => 0,
            Action::Slot(i) => i,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Void
        } else {
            Action::Slot(i)
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Void => f.write_str("void"),
            Action::Slot(i) => write!(f, "slot{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DispatchOutcome {
    Void,
    Scheduled { completion: i64 },
    Invalid,
}

impl DispatchOutcome {
    /// Whether this outcome closes the selection phase.
    pub fn ends_selection(self) -> bool {
        !matches!(self, DispatchOutcome::Scheduled { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledJob {
    pub job: JobSpec,
    pub completion: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletedJob {
    pub id: JobId,
    pub completion: i64,
    pub due_time: i64,
    pub proc_time: i64,
}

impl CompletedJob {
    pub fn lateness(&self) -> i64 {
        lateness_tardiness(self.completion, self.due_time).0
    }

    pub fn tardiness(&self) -> i64 {
        lateness_tardiness(self.completion, self.due_time).1
    }
}

/// Observable and bookkeeping state of the shop.
#[derive(Clone, Debug, PartialEq)]
pub struct ShopState {
    pub clock: i64,
    /// Machine schedule for the next `T` steps; cell 0 is the current step.
    pub schedule: Vec<Option<JobId>>,
    pub slots: Vec<Option<JobSpec>>,
    pub backlog: VecDeque<JobSpec>,
    /// Jobs on the schedule with their committed completion times.
    pub scheduled: BTreeMap<JobId, ScheduledJob>,
    pub completed: Vec<CompletedJob>,
    pub dropped: u64,
    pub arrived: u64,
}

impl ShopState {
    fn empty(config: &ShopConfig) -> Self {
        Self {
            clock: 0,
            schedule: vec![None; config.horizon],
            slots: vec![None; config.slots],
            backlog: VecDeque::new(),
            scheduled: BTreeMap::new(),
            completed: Vec::new(),
            dropped: 0,
            arrived: 0,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Start of the earliest run of `len` free schedule cells.
    pub fn earliest_fit(&self, len: i64) -> Option<usize> {
        earliest_fit(&self.schedule, len)
    }

    /// Whether the job in `slot` (1-based) exists and fits the horizon.
    pub fn slot_fits(&self, slot: usize) -> bool {
        slot >= 1
            && self
                .slots
                .get(slot - 1)
                .copied()
                .flatten()
                .is_some_and(|j| self.earliest_fit(j.proc_time).is_some())
    }
}

fn earliest_fit(schedule: &[Option<JobId>], len: i64) -> Option<usize> {
    if len < 1 {
        return None;
    }
    let len = len as usize;
    let mut run = 0;
    for (i, cell) in schedule.iter().enumerate() {
        if cell.is_none() {
            run += 1;
            if run == len {
                return Some(i + 1 - len);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Per-step reward for the job occupying cell 0: `-L/p` or `-TA/p`.
pub fn step_reward(state: &ShopState, objective: Objective) -> f64 {
    let Some(id) = state.schedule.first().copied().flatten() else {
        return 0.0;
    };
    let sj = &state.scheduled[&id];
    let (l, ta) = lateness_tardiness(sj.completion, sj.job.due_time);
    let penalty = match objective {
        Objective::Lateness => l,
        Objective::Tardiness => ta,
    };
    -(penalty as f64) / sj.job.proc_time as f64
}

/// What happened during one call to [`Shop::advance_time`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    /// Job processed during this step and its reward contribution.
    pub processing: Option<(JobId, f64)>,
    pub completed: Option<CompletedJob>,
    pub arrived: Option<JobId>,
    pub dropped: bool,
}

/// A seeded shop-floor simulator.
#[derive(Clone, Debug)]
pub struct Shop {
    config: ShopConfig,
    state: ShopState,
    arrivals: ChaCha8Rng,
    attributes: ChaCha8Rng,
    placement: ChaCha8Rng,
    next_id: JobId,
}

impl Shop {
    /// Empty shop at clock 0 whose randomness derives from `seed`.
    pub fn new(config: ShopConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let state = ShopState::empty(&config);
        Ok(Self {
            config,
            state,
            arrivals: rng::stream(seed, "arrivals"),
            attributes: rng::stream(seed, "attributes"),
            placement: rng::stream(seed, "placement"),
            next_id: 0,
        })
    }

    pub fn config(&self) -> &ShopConfig {
        &self.config
    }

    pub fn state(&self) -> &ShopState {
        &self.state
    }

    /// Mutable access for tests and scripted scenarios. The caller is
    /// responsible for keeping the bookkeeping consistent.
    pub fn state_mut(&mut self) -> &mut ShopState {
        &mut self.state
    }

    pub fn clock(&self) -> i64 {
        self.state.clock
    }

    pub fn apply_action(&mut self, action: Action) -> Result<DispatchOutcome> {
        let slot = match action {
            Action::Void => return Ok(DispatchOutcome::Void),
            Action::Slot(i) if i >= 1 && i <= self.config.slots => i,
            Action::Slot(i) => {
                return Err(Error::usage(format!(
                    "slot {i} outside 1..={}",
                    self.config.slots
                )))
            }
        };
        let Some(job) = self.state.slots[slot - 1] else {
            return Ok(DispatchOutcome::Invalid);
        };
        let Some(start) = self.state.earliest_fit(job.proc_time) else {
            return Ok(DispatchOutcome::Invalid);
        };
        for cell in &mut self.state.schedule[start..start + job.proc_time as usize] {
            *cell = Some(job.id);
        }
        let completion = self.state.clock + start as i64 + job.proc_time;
        self.state.slots[slot - 1] = None;
        self.state
            .scheduled
            .insert(job.id, ScheduledJob { job, completion });
        Ok(DispatchOutcome::Scheduled { completion })
    }

    /// Closes the current step: reward, completion, shift, arrival,
    /// backlog promotion, clock.
    pub fn advance_time(&mut self) -> StepOutcome {
        let mut out = StepOutcome::default();
        let contribution = step_reward(&self.state, self.config.objective);
        out.reward += contribution;

        if let Some(id) = self.state.schedule[0] {
            out.processing = Some((id, contribution));
            let block_ends = self.state.schedule.get(1).copied().flatten() != Some(id);
            if block_ends {
                let sj = self
                    .state
                    .scheduled
                    .remove(&id)
                    .expect("scheduled job has a committed completion");
                debug_assert_eq!(sj.completion, self.state.clock + 1);
                let done = CompletedJob {
                    id,
                    completion: sj.completion,
                    due_time: sj.job.due_time,
                    proc_time: sj.job.proc_time,
                };
                self.state.completed.push(done);
                out.completed = Some(done);
            }
        }

        self.state.schedule.remove(0);
        self.state.schedule.push(None);

        if self.arrivals.gen_bool(self.config.arrival_prob) {
            let job = self.sample_job(self.state.clock + 1);
            self.state.arrived += 1;
            out.arrived = Some(job.id);
            if let Some(slot) = self.random_empty_slot() {
                self.state.slots[slot] = Some(job);
            } else if self.state.backlog.len() < self.config.backlog {
                self.state.backlog.push_back(job);
            } else {
                self.state.dropped += 1;
                out.dropped = true;
                out.reward += self.config.drop_penalty;
            }
        }

        while !self.state.backlog.is_empty() {
            let Some(slot) = self.random_empty_slot() else { break };
            self.state.slots[slot] = self.state.backlog.pop_front();
        }

        self.state.clock += 1;
        out
    }

    fn sample_job(&mut self, arrival_time: i64) -> JobSpec {
        let cfg = &self.config;
        let len_range = if self.attributes.gen_bool(cfg.p_small) {
            cfg.short_range
        } else {
            cfg.long_range
        };
        let proc_time = self.attributes.gen_range(len_range.lo()..=len_range.hi());
        let slack_range = if self.attributes.gen_bool(cfg.p_urgent) {
            cfg.urgent_slack_range
        } else {
            cfg.nonurgent_slack_range
        };
        let slack = self.attributes.gen_range(slack_range.lo()..=slack_range.hi());
        let id = self.next_id;
        self.next_id += 1;
        JobSpec {
            id,
            arrival_time,
            proc_time,
            due_time: arrival_time + proc_time + slack,
        }
    }

    fn random_empty_slot(&mut self) -> Option<usize> {
        let empty: Vec<usize> = (0..self.state.slots.len())
            .filter(|&i| self.state.slots[i].is_none())
            .collect();
        if empty.is_empty() {
            None
        } else {
            Some(empty[self.placement.gen_range(0..empty.len())])
        }
    }
}

/// Anything that picks the next action from the current shop.
pub trait Dispatcher {
    fn decide(&mut self, shop: &Shop) -> Action;
}

impl<F: FnMut(&Shop) -> Action> Dispatcher for F {
    fn decide(&mut self, shop: &Shop) -> Action {
        self(shop)
    }
}

/// One decision in a trajectory log. `reward` and `dropped` are reported on
/// the decision that closed the step and are zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: i64,
    /// 0 for `Void`, otherwise the 1-based slot.
    pub action: usize,
    pub reward: f64,
    pub dropped_flag: u8,
}

/// Per-episode summary.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub rewards: Vec<f64>,
    pub log: Vec<LogRow>,
    pub final_state: ShopState,
}

/// Runs one selection phase: decisions until `Void` or an invalid pick.
/// Returns the actions taken.
pub fn run_selection(shop: &mut Shop, dispatcher: &mut dyn Dispatcher) -> Result<Vec<Action>> {
    let mut actions = Vec::new();
    loop {
        let action = dispatcher.decide(shop);
        let outcome = shop.apply_action(action)?;
        actions.push(action);
        if outcome.ends_selection() {
            return Ok(actions);
        }
    }
}

/// Rolls `dispatcher` for `config.traj_len` steps.
pub fn run_episode(shop: &mut Shop, dispatcher: &mut dyn Dispatcher) -> Result<Episode> {
    let steps = shop.config().traj_len;
    let mut rewards = Vec::with_capacity(steps);
    let mut log = Vec::new();
    for _ in 0..steps {
        let t = shop.clock();
        let actions = run_selection(shop, dispatcher)?;
        let step = shop.advance_time();
        let last = actions.len() - 1;
        for (i, a) in actions.into_iter().enumerate() {
            let closing = i == last;
            log.push(LogRow {
                t,
                action: a.index(),
                reward: if closing { step.reward } else { 0.0 },
                dropped_flag: u8::from(closing && step.dropped),
            });
        }
        rewards.push(step.reward);
    }
    Ok(Episode {
        rewards,
        log,
        final_state: shop.state().clone(),
    })
}

/// Writes `t,action,reward,dropped_flag` rows.
pub fn write_trajectory_csv<W: Write>(rows: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("trajectory csv", e))?;
    Ok(())
}
