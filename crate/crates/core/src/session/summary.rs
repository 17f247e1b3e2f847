//! Per-condition metrics pooled over trial logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::log::TrialLog;
use crate::stats::{mean, population_sd};
use crate::{Error, Result};

/// Label used for logs whose header has no condition.
pub const DEFAULT_CONDITION: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Records pooled across trials.
    pub samples: usize,
    pub contact_force_mean: f64,
    pub contact_force_sd: f64,
    pub distance_mean: f64,
    pub distance_sd: f64,
}

/// Pools every record per condition; SDs are population SDs. A condition
/// with no records reports zero metrics and `samples == 0`.
pub fn summarize(logs: &[TrialLog]) -> Result<Vec<ConditionSummary>> {
    if logs.is_empty() {
        return Err(Error::Empty("trial logs"));
    }
    let mut groups: BTreeMap<String, Vec<&TrialLog>> = BTreeMap::new();
    for l in logs {
        let key = l
            .header
            .condition
            .clone()
            .unwrap_or_else(|| DEFAULT_CONDITION.into());
        groups.entry(key).or_default().push(l);
    }
    Ok(groups
        .into_iter()
        .map(|(condition, ls)| {
            let force: Vec<f64> = ls
                .iter()
                .flat_map(|l| &l.records)
                .map(|r| r.contact_force_metric)
                .collect();
            let dist: Vec<f64> = ls
                .iter()
                .flat_map(|l| &l.records)
                .map(|r| r.trap_center_distance)
                .collect();
            let successes = ls.iter().filter(|l| l.outcome.success).count();
            ConditionSummary {
                trials: ls.len(),
                successes,
                success_rate: successes as f64 / ls.len() as f64,
                samples: force.len(),
                contact_force_mean: mean(&force).unwrap_or(0.0),
                contact_force_sd: population_sd(&force).unwrap_or(0.0),
                distance_mean: mean(&dist).unwrap_or(0.0),
                distance_sd: population_sd(&dist).unwrap_or(0.0),
                condition,
            }
        })
        .collect())
}

/// `(sd_a − sd_b) / sd_a`; positive when `b` is steadier.
pub fn sd_reduction(sd_a: f64, sd_b: f64) -> f64 {
    (sd_a - sd_b) / sd_a
}
