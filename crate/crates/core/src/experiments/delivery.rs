//! Scripted-operator delivery trials: a force-blind and a force-aware
//! policy push the payload cell to the goal under paired seeds.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_csv, write_json};
use crate::geometry::Vec3;
use crate::session::{
    drive, summarize, ClientMessage, ConditionSummary, Operator, Phase, Scenario, Session,
    TrialLog, VirtualClock,
};
use crate::stats::{mean, population_sd};
use crate::teleop::Device;
use crate::{Error, Result};

/// A waypoint counts as reached within this distance, µm.
pub const WAYPOINT_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ForceBlind,
    ForceAware,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ForceBlind => "force_blind",
            PolicyKind::ForceAware => "force_aware",
        }
    }
}

/// Stand-in for a human operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPolicy {
    pub kind: PolicyKind,
    /// Commanded trap speed, µm/s.
    pub nominal_speed: f64,
    /// Speed reduction per pN of raw force (force-aware only), µm/s/pN.
    pub slowdown_gain: f64,
    /// Robot-position targets visited in order before the final push.
    #[serde(default)]
    pub waypoints: Vec<Vec3>,
}

impl OperatorPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_speed > 0.0 && self.nominal_speed.is_finite()) {
            return Err(Error::param("nominal_speed", "must be positive"));
        }
        if !(self.slowdown_gain >= 0.0 && self.slowdown_gain.is_finite()) {
            return Err(Error::param("slowdown_gain", "must be finite and >= 0"));
        }
        if !self
            .waypoints
            .iter()
            .all(|w| w.iter().all(|c| c.is_finite()))
        {
            return Err(Error::param("waypoints", "must be finite"));
        }
        Ok(())
    }

    pub fn condition(&self) -> &'static str {
        self.kind.as_str()
    }

    /// Commanded trap speed given the larger per-device raw force, pN.
    pub fn speed(&self, f_raw: f64) -> f64 {
        match self.kind {
            PolicyKind::ForceBlind => self.nominal_speed,
            PolicyKind::ForceAware => (self.nominal_speed - self.slowdown_gain * f_raw).max(0.0),
        }
    }
}

pub const DEFAULT_NOMINAL_SPEED: f64 = 30.0;
pub const DEFAULT_SLOWDOWN_GAIN: f64 = 6.0;

/// Force-blind and force-aware policies with the default speeds.
pub fn default_policies() -> [OperatorPolicy; 2] {
    [
        OperatorPolicy {
            kind: PolicyKind::ForceBlind,
            nominal_speed: DEFAULT_NOMINAL_SPEED,
            slowdown_gain: 0.0,
            waypoints: vec![],
        },
        OperatorPolicy {
            kind: PolicyKind::ForceAware,
            nominal_speed: DEFAULT_NOMINAL_SPEED,
            slowdown_gain: DEFAULT_SLOWDOWN_GAIN,
            waypoints: vec![],
        },
    ]
}

/// Runs a policy as a session operator. After the waypoints the robot is
/// steered along the payload-to-goal direction until the trial ends. Both
/// hands get the same command; a new hand input is sent only when the
/// command changes.
pub struct PolicyOperator {
    policy: OperatorPolicy,
    next: usize,
    last: [Option<[f64; 3]>; 2],
}

impl PolicyOperator {
    pub fn new(policy: OperatorPolicy) -> Self {
        Self {
            policy,
            next: 0,
            last: [None; 2],
        }
    }
}

impl Operator for PolicyOperator {
    fn poll(&mut self, s: &Session) -> Option<Vec<ClientMessage>> {
        if s.phase() == Phase::Lobby {
            return Some(vec![ClientMessage::start()]);
        }
        let pos = s.world().robot.pose.position;
        let wps = &self.policy.waypoints;
        while self.next < wps.len() && (wps[self.next] - pos).norm() < WAYPOINT_TOLERANCE {
            self.next += 1;
        }
        let heading = match wps.get(self.next) {
            Some(wp) => wp - pos,
            None => s.scenario().goal.center - s.payload_position(),
        };
        let dir = heading.try_normalize(1e-12).unwrap_or_else(Vec3::zeros);
        let f = Device::ALL
            .iter()
            .map(|&d| s.output(d).f_raw.norm())
            .fold(0.0, f64::max);
        let vel = dir * self.policy.speed(f);
        let hand = vel / s.scenario().teleop.g_control;
        let cmd = [hand.x, hand.y, hand.z];
        let mut out = Vec::new();
        for d in Device::ALL {
            if self.last[d.index()] != Some(cmd) {
                self.last[d.index()] = Some(cmd);
                out.push(ClientMessage::HandInput {
                    device: d,
                    vel: cmd,
                    t: s.time(),
                });
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub struct DeliveryTrial {
    pub condition: String,
    pub trial: usize,
    pub seed: u64,
    pub log: TrialLog,
    /// Leading unit-normal Brownian deviates of the trial's stream.
    pub first_kicks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub condition: String,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub reason: String,
    pub duration_s: f64,
    pub records: usize,
    pub contact_force_mean: f64,
    pub contact_force_sd: f64,
    pub contact_force_max: f64,
    pub distance_mean: f64,
    pub distance_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KickRow {
    pub condition: String,
    pub trial: usize,
    pub seed: u64,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct DeliveryStudy {
    /// Sorted by condition order, then trial index.
    pub trials: Vec<DeliveryTrial>,
    pub summary: Vec<ConditionSummary>,
}

impl DeliveryStudy {
    pub fn rows(&self) -> Vec<TrialRow> {
        self.trials
            .iter()
            .map(|t| {
                let f: Vec<f64> = t
                    .log
                    .records
                    .iter()
                    .map(|r| r.contact_force_metric)
                    .collect();
                let d: Vec<f64> = t
                    .log
                    .records
                    .iter()
                    .map(|r| r.trap_center_distance)
                    .collect();
                TrialRow {
                    condition: t.condition.clone(),
                    trial: t.trial,
                    seed: t.seed,
                    success: t.log.outcome.success,
                    reason: t.log.outcome.reason.as_str().into(),
                    duration_s: t.log.outcome.duration,
                    records: f.len(),
                    contact_force_mean: mean(&f).unwrap_or(0.0),
                    contact_force_sd: population_sd(&f).unwrap_or(0.0),
                    contact_force_max: f.iter().copied().fold(0.0, f64::max),
                    distance_mean: mean(&d).unwrap_or(0.0),
                    distance_sd: population_sd(&d).unwrap_or(0.0),
                }
            })
            .collect()
    }

    pub fn kick_rows(&self) -> Vec<KickRow> {
        self.trials
            .iter()
            .flat_map(|t| {
                t.first_kicks
                    .iter()
                    .enumerate()
                    .map(|(index, &value)| KickRow {
                        condition: t.condition.clone(),
                        trial: t.trial,
                        seed: t.seed,
                        index,
                        value,
                    })
            })
            .collect()
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.summary.iter().find(|c| c.condition == name)
    }
}

/// Runs one trial.
pub fn run_trial(
    scenario: &Scenario,
    policy: &OperatorPolicy,
    seed: u64,
    trial: usize,
) -> Result<DeliveryTrial> {
    let mut sc = scenario.clone();
    sc.seed = seed;
    let mut session = Session::with_condition(sc, Some(policy.condition().into()))?;
    let mut op = PolicyOperator::new(policy.clone());
    drive(&mut session, &mut op, &mut VirtualClock, &mut |_| {});
    let first_kicks = session.first_kicks().to_vec();
    Ok(DeliveryTrial {
        condition: policy.condition().into(),
        trial,
        seed,
        log: session.into_log().expect("ended session has an outcome"),
        first_kicks,
    })
}

/// Every policy runs `trials_per_condition` trials; trial `i` uses seed
/// `base_seed + i` under every policy. Trials run in parallel.
pub fn run_delivery_study(
    scenario: &Scenario,
    policies: &[OperatorPolicy],
    trials_per_condition: usize,
    base_seed: u64,
) -> Result<DeliveryStudy> {
    if trials_per_condition < 2 {
        return Err(Error::param("trials_per_condition", "need at least 2"));
    }
    if policies.is_empty() {
        return Err(Error::Empty("policies"));
    }
    for (i, p) in policies.iter().enumerate() {
        p.validate()?;
        if policies[..i].iter().any(|q| q.condition() == p.condition()) {
            return Err(Error::param(
                "policies",
                format!("duplicate condition {}", p.condition()),
            ));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|p| (0..trials_per_condition).map(move |t| (p, t)))
        .collect();
    let mut done: Vec<((usize, usize), DeliveryTrial)> = jobs
        .par_iter()
        .map(|&(p, t)| {
            run_trial(scenario, &policies[p], base_seed.wrapping_add(t as u64), t)
                .map(|r| ((p, t), r))
        })
        .collect::<Result<_>>()?;
    done.sort_by_key(|(k, _)| *k);
    let trials: Vec<DeliveryTrial> = done.into_iter().map(|(_, t)| t).collect();
    let logs: Vec<TrialLog> = trials.iter().map(|t| t.log.clone()).collect();
    Ok(DeliveryStudy {
        summary: summarize(&logs)?,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliverySummaryDoc {
    pub scenario: String,
    pub trials_per_condition: usize,
    pub base_seed: u64,
    pub conditions: Vec<ConditionSummary>,
    /// `(SD_blind − SD_aware)/SD_blind` when both conditions are present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_force_sd_reduction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_sd_reduction: Option<f64>,
}

/// Writes `trials.csv`, `summary.csv`, `kicks.csv`, `summary.json` and one
/// JSON-lines log per trial under `logs/`.
pub fn write_delivery_outputs(
    dir: &Path,
    scenario: &Scenario,
    base_seed: u64,
    study: &DeliveryStudy,
) -> Result<()> {
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    write_csv(&dir.join("trials.csv"), &study.rows())?;
    write_csv(&dir.join("summary.csv"), &study.summary)?;
    write_csv(&dir.join("kicks.csv"), &study.kick_rows())?;
    for t in &study.trials {
        let path = logs.join(format!("{}-{:03}.jsonl", t.condition, t.trial));
        std::fs::write(&path, t.log.to_jsonl()).map_err(|e| Error::io(&path, e))?;
    }
    let pair = study
        .condition(PolicyKind::ForceBlind.as_str())
        .zip(study.condition(PolicyKind::ForceAware.as_str()));
    let doc = DeliverySummaryDoc {
        scenario: scenario.name.clone(),
        trials_per_condition: study
            .trials
            .iter()
            .filter(|t| t.condition == study.trials[0].condition)
            .count(),
        base_seed,
        conditions: study.summary.clone(),
        contact_force_sd_reduction: pair
            .map(|(b, a)| crate::session::sd_reduction(b.contact_force_sd, a.contact_force_sd)),
        distance_sd_reduction: pair
            .map(|(b, a)| crate::session::sd_reduction(b.distance_sd, a.distance_sd)),
    };
    write_json(&dir.join("summary.json"), &doc)
}
