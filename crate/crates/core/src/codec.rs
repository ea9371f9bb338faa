//! 2-D observation encoding of a [`ShopState`].
//!
//! The matrix has `T + Z` rows and `1 + n + ceil(m / T)` columns:
//!
//! * column 0 is machine occupancy over the next `T` steps, zero padded;
//! * columns `1..=n` are job slots, `p` ones in the first `T` cells stacked
//!   over `Z` slack cells holding `min(|slack|, Z)` copies of `sign(slack)`;
//! * the remaining columns count backlog jobs, filled column-major with `T`
//!   ones per column, zero padded.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ShopConfig;
use crate::error::{Error, Result};
use crate::sim::{slack_of, ShopState};

/// Shape parameters of the observation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub horizon: usize,
    pub slack_len: usize,
    pub slots: usize,
    pub backlog: usize,
}

impl Geometry {
    pub fn of(config: &ShopConfig) -> Self {
        Self {
            horizon: config.horizon,
            slack_len: config.slack_len,
            slots: config.slots,
            backlog: config.backlog,
        }
    }

    pub fn rows(&self) -> usize {
        self.horizon + self.slack_len
    }

    pub fn backlog_cols(&self) -> usize {
        self.backlog.div_ceil(self.horizon)
    }

    pub fn cols(&self) -> usize {
        1 + self.slots + self.backlog_cols()
    }

    /// Length of the flattened observation.
    pub fn dim(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Number of actions: `Void` plus one per slot.
    pub fn actions(&self) -> usize {
        self.slots + 1
    }
}

/// Which job-slot features the policy gets to see.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateVariant {
    #[default]
    #[serde(rename = "proc+slack")]
    ProcSlack,
    #[serde(rename = "proc")]
    Proc,
    #[serde(rename = "slack")]
    Slack,
}

impl StateVariant {
    pub const ALL: [StateVariant; 3] = [StateVariant::ProcSlack, StateVariant::Proc, StateVariant::Slack];

    pub fn label(self) -> &'static str {
        match self {
            StateVariant::ProcSlack => "proc+slack",
            StateVariant::Proc => "proc",
            StateVariant::Slack => "slack",
        }
    }
}

impl std::str::FromStr for StateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proc+slack" => Ok(StateVariant::ProcSlack),
            "proc" => Ok(StateVariant::Proc),
            "slack" => Ok(StateVariant::Slack),
            other => Err(Error::usage(format!("unknown state variant `{other}`"))),
        }
    }
}

/// Dense observation matrix, row-major, entries in {-1, 0, 1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    geometry: Geometry,
    data: Vec<f64>,
}

impl StateMatrix {
    pub fn zeros(geometry: Geometry) -> Self {
        Self {
            geometry,
            data: vec![0.0; geometry.dim()],
        }
    }

    /// Wraps a flattened (row-major) observation.
    pub fn from_flat(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.dim() {
            return Err(Error::usage(format!(
                "flattened state has {} entries, geometry needs {}",
                data.len(),
                geometry.dim()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.geometry.cols() + col]
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        let cols = self.geometry.cols();
        self.data[row * cols + col] = v;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.geometry.rows()).map(|r| self.get(r, col)).collect()
    }

    /// Row-major flattening shared by the policy and the alignment code.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Zeroes the features hidden by `variant`.
    pub fn masked(mut self, variant: StateVariant) -> Self {
        let g = self.geometry;
        let rows = match variant {
            StateVariant::ProcSlack => return self,
            StateVariant::Proc => g.horizon..g.rows(),
            StateVariant::Slack => 0..g.horizon,
        };
        for col in 1..=g.slots {
            for r in rows.clone() {
                self.set(r, col, 0.0);
            }
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.geometry.rows() {
            for c in 0..self.geometry.cols() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.get(r, c)).expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

/// Encodes the shop state as the observation matrix.
pub fn encode_state(state: &ShopState, config: &ShopConfig) -> Result<StateMatrix> {
    let g = Geometry::of(config);
    if state.schedule.len() != g.horizon || state.slots.len() != g.slots {
        return Err(Error::usage(format!(
            "state has {} schedule cells and {} slots, config expects {} and {}",
            state.schedule.len(),
            state.slots.len(),
            g.horizon,
            g.slots
        )));
    }
    if state.backlog.len() > g.backlog {
        return Err(Error::usage(format!(
            "backlog holds {} jobs, capacity is {}",
            state.backlog.len(),
            g.backlog
        )));
    }
    let mut s = StateMatrix::zeros(g);
    for (r, cell) in state.schedule.iter().enumerate() {
        if cell.is_some() {
            s.set(r, 0, 1.0);
        }
    }
    for (i, slot) in state.slots.iter().enumerate() {
        let Some(job) = slot else { continue };
        let col = i + 1;
        if job.proc_time > g.horizon as i64 || job.proc_time < 1 {
            return Err(Error::usage(format!(
                "job {} has processing time {} outside 1..={}",
                job.id, job.proc_time, g.horizon
            )));
        }
        for r in 0..job.proc_time as usize {
            s.set(r, col, 1.0);
        }
        let slack = slack_of(job, state.clock);
        let cells = slack.unsigned_abs().min(g.slack_len as u64) as usize;
        let sign = slack.signum() as f64;
        for r in 0..cells {
            s.set(g.horizon + r, col, sign);
        }
    }
    for k in 0..state.backlog.len() {
        s.set(k % g.horizon, 1 + g.slots + k / g.horizon, 1.0);
    }
    Ok(s)
}

/// Copy of `s` with job-slot column `slot` (1-based) zeroed.
pub fn remove_job_columns(s: &StateMatrix, slot: usize) -> Result<StateMatrix> {
    let g = s.geometry();
    if slot < 1 || slot > g.slots {
        return Err(Error::usage(format!("slot {slot} outside 1..={}", g.slots)));
    }
    let mut out = s.clone();
    for r in 0..g.rows() {
        out.set(r, slot, 0.0);
    }
    Ok(out)
}
