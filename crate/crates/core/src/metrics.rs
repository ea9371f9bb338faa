//! Episode metrics: discounted reward and completed-job lateness/tardiness.

use serde::{Deserialize, Serialize};

use crate::sim::ShopState;

/// Summary of one or more evaluation episodes.
///
/// `total_discounted_reward` includes drop penalties; the lateness and
/// tardiness averages only cover jobs that completed (zero if none did).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub total_discounted_reward: f64,
    pub average_lateness: f64,
    pub average_tardiness: f64,
    pub jobs_completed: f64,
    pub jobs_dropped: f64,
}

impl MetricsRow {
    pub fn from_episode(rewards: &[f64], final_state: &ShopState, gamma: f64) -> Self {
        let completed = &final_state.completed;
        let (mut late, mut tardy) = (0.0, 0.0);
        for job in completed {
            late += job.lateness() as f64;
            tardy += job.tardiness() as f64;
        }
        let n = completed.len();
        let avg = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
        Self {
            total_discounted_reward: discounted_sum(rewards, gamma),
            average_lateness: avg(late),
            average_tardiness: avg(tardy),
            jobs_completed: n as f64,
            jobs_dropped: final_state.dropped as f64,
        }
    }

    /// Field-wise mean; the default row for an empty slice.
    pub fn mean(rows: &[MetricsRow]) -> Self {
        if rows.is_empty() {
            return Self::default();
        }
        let k = rows.len() as f64;
        let sum = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
        Self {
            total_discounted_reward: sum(|r| r.total_discounted_reward),
            average_lateness: sum(|r| r.average_lateness),
            average_tardiness: sum(|r| r.average_tardiness),
            jobs_completed: sum(|r| r.jobs_completed),
            jobs_dropped: sum(|r| r.jobs_dropped),
        }
    }
}

/// `sum_t gamma^t r_t`.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
