//! Shop-floor configuration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive integer interval, serialized as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange(pub i64, pub i64);

impl IntRange {
    pub fn lo(self) -> i64 {
        self.0
    }

    pub fn hi(self) -> i64 {
        self.1
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Lateness,
    Tardiness,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Lateness => f.write_str("lateness"),
            Objective::Tardiness => f.write_str("tardiness"),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lateness" => Ok(Objective::Lateness),
            "tardiness" => Ok(Objective::Tardiness),
            other => Err(Error::usage(format!("unknown objective `{other}`"))),
        }
    }
}

/// Geometry, job statistics and reward settings of one shop floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShopConfig {
    /// Lookahead horizon of the machine schedule, in steps.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Length of the slack array of each job slot.
    #[serde(rename = "Z")]
    pub slack_len: usize,
    /// Number of visible job slots.
    #[serde(rename = "n")]
    pub slots: usize,
    /// Backlog capacity.
    #[serde(rename = "m")]
    pub backlog: usize,
    /// Probability of one job arriving per step.
    #[serde(rename = "lambda", alias = "λ")]
    pub arrival_prob: f64,
    pub p_small: f64,
    pub short_range: IntRange,
    pub long_range: IntRange,
    pub p_urgent: f64,
    pub urgent_slack_range: IntRange,
    pub nonurgent_slack_range: IntRange,
    pub drop_penalty: f64,
    #[serde(rename = "gamma", alias = "γ")]
    pub gamma: f64,
    pub traj_len: usize,
    pub objective: Objective,
}

impl Default for ShopConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            slack_len: 5,
            slots: 10,
            backlog: 60,
            arrival_prob: 0.5,
            p_small: 0.8,
            short_range: IntRange(1, 2),
            long_range: IntRange(6, 10),
            p_urgent: 0.5,
            urgent_slack_range: IntRange(1, 5),
            nonurgent_slack_range: IntRange(5, 10),
            drop_penalty: -10.0,
            gamma: 0.99,
            traj_len: 100,
            objective: Objective::Lateness,
        }
    }
}

impl ShopConfig {
    /// The desk-scale shop used by the test suite: T=8, Z=3, n=5, m=10 and
    /// 50-step episodes. Long jobs are capped at the horizon.
    pub fn reduced() -> Self {
        Self {
            horizon: 8,
            slack_len: 3,
            slots: 5,
            backlog: 10,
            long_range: IntRange(6, 8),
            traj_len: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("T", self.horizon),
            ("Z", self.slack_len),
            ("n", self.slots),
            ("m", self.backlog),
            ("traj_len", self.traj_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        open_unit("lambda", self.arrival_prob)?;
        for (name, v) in [("p_small", self.p_small), ("p_urgent", self.p_urgent)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma = {} must lie in (0, 1]", self.gamma)));
        }
        if !self.drop_penalty.is_finite() {
            return Err(Error::config("drop_penalty must be finite"));
        }
        let ranges = [
            ("short_range", self.short_range),
            ("long_range", self.long_range),
            ("urgent_slack_range", self.urgent_slack_range),
            ("nonurgent_slack_range", self.nonurgent_slack_range),
        ];
        for (name, r) in ranges {
            if r.lo() > r.hi() {
                return Err(Error::config(format!("{name} lower bound exceeds upper bound")));
            }
        }
        for (name, r) in [("short_range", self.short_range), ("long_range", self.long_range)] {
            if r.lo() < 1 {
                return Err(Error::config(format!("{name} must produce lengths >= 1")));
            }
            if r.hi() > self.horizon as i64 {
                return Err(Error::config(format!(
                    "{name} upper bound {} exceeds horizon T = {}",
                    r.hi(),
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}
