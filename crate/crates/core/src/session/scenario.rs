//! Scenario documents: parsing, defaults, validation and the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Cell, Medium, Obstacle, Robot, DEFAULT_DT, MAX_DT};
use crate::force_model::{
    fit_piecewise_with, read_samples_csv, sample_reference_force, BeamProfile, FitOptions,
    ForceSample, OpticalForceParams, SphereElement, Trap,
};
use crate::geometry::{is_finite, vec3, Aabb, Pose, Vec3};
use crate::teleop::{Device, TeleopConfig};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT_S: f64 = 120.0;
pub const DEFAULT_BROADCAST_HZ: u32 = 60;

/// A trap and the haptic device that steers it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    #[serde(flatten)]
    pub trap: Trap,
    pub device: Device,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDoc {
    pub elements: Vec<SphereElement>,
    #[serde(default)]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSource {
    /// CSV file with header `r_um,force_pN`, relative to the document.
    Path(PathBuf),
    Inline(Vec<ForceSample>),
}

/// On-disk scenario document (schema version 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub medium: Medium,
    pub robot: RobotDoc,
    pub traps: Vec<TrapSpec>,
    /// Inline surrogate coefficients.
    #[serde(default)]
    pub force: Option<OpticalForceParams>,
    /// Samples to fit instead of inline coefficients.
    #[serde(default)]
    pub force_samples: Option<SampleSource>,
    #[serde(default)]
    pub force_cutoff: Option<f64>,
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub payload_cell: usize,
    #[serde(default)]
    pub start: Option<Vec3>,
    pub goal: Goal,
    #[serde(default)]
    pub teleop: TeleopConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workspace: Option<Aabb>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub broadcast_hz: Option<u32>,
}

/// Where the force coefficients came from; part of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceProvenance {
    Inline,
    Fitted {
        samples: usize,
        samples_hash: String,
    },
    DefaultProfile {
        f_max: f64,
        beam_waist_w: f64,
    },
}

/// A validated scenario with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub medium: Medium,
    pub robot: Robot,
    pub traps: Vec<TrapSpec>,
    pub force_params: OpticalForceParams,
    pub force_provenance: ForceProvenance,
    pub cells: Vec<Cell>,
    pub obstacles: Vec<Obstacle>,
    pub payload_cell: usize,
    pub start: Vec3,
    pub goal: Goal,
    pub teleop: TeleopConfig,
    pub seed: u64,
    pub workspace: Aabb,
    pub dt: f64,
    pub timeout_s: f64,
    pub broadcast_hz: u32,
}

/// Surrogate coefficients fitted to the default Gaussian-beam profile.
pub fn default_force_params() -> OpticalForceParams {
    let prof = BeamProfile::default();
    let w = prof.beam_waist_w;
    let rs: Vec<f64> = (0..200).map(|i| 4.0 * w * i as f64 / 199.0).collect();
    let samples = sample_reference_force(&prof, &rs).expect("default profile is valid");
    fit_piecewise_with(&samples, FitOptions::default()).expect("default profile fits")
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Scenario {
    /// Stable hash of the resolved scenario.
    pub fn config_hash(&self) -> u64 {
        let text = serde_json::to_string(self).expect("scenario serializes");
        fnv1a64(text.as_bytes())
    }

    pub fn trap_list(&self) -> Vec<Trap> {
        self.traps.iter().map(|t| t.trap).collect()
    }

    pub fn trap_devices(&self) -> Vec<Device> {
        self.traps.iter().map(|t| t.device).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        self.medium.validate()?;
        self.force_params.validate()?;
        if self.robot.elements.is_empty() {
            return Err(Error::param(
                "robot.elements",
                "at least one element required",
            ));
        }
        for (i, e) in self.robot.elements.iter().enumerate() {
            e.validate()
                .map_err(|_| Error::param(format!("robot.elements[{i}]"), "invalid element"))?;
            if let Some(t) = e.assigned_trap {
                if t >= self.traps.len() {
                    return Err(Error::param(
                        format!("robot.elements[{i}].trap"),
                        format!("trap index {t} out of range ({} traps)", self.traps.len()),
                    ));
                }
            }
        }
        for (i, t) in self.traps.iter().enumerate() {
            t.trap
                .validate()
                .map_err(|_| Error::param(format!("traps[{i}]"), "invalid trap"))?;
        }
        for (i, c) in self.cells.iter().enumerate() {
            c.validate()
                .map_err(|e| Error::param(format!("cells[{i}]"), e.to_string()))?;
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate()
                .map_err(|e| Error::param(format!("obstacles[{i}]"), e.to_string()))?;
        }
        if self.payload_cell >= self.cells.len() {
            return Err(Error::param(
                "payload_cell",
                format!(
                    "index {} but only {} cells",
                    self.payload_cell,
                    self.cells.len()
                ),
            ));
        }
        if !is_finite(&self.goal.center) {
            return Err(Error::param("goal.center", "non-finite"));
        }
        if !(self.goal.radius > 0.0 && self.goal.radius.is_finite()) {
            return Err(Error::param("goal.radius", "must be positive"));
        }
        if !self.workspace.is_valid() {
            return Err(Error::param("workspace", "min must be < max componentwise"));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::param("dt", format!("must be in (0, {MAX_DT}]")));
        }
        let tps = 1.0 / self.dt;
        if (tps - tps.round()).abs() > 1e-6 {
            return Err(Error::param(
                "dt",
                "1/dt must be a whole number of ticks per second",
            ));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::param("timeout_s", "must be positive"));
        }
        if self.broadcast_hz == 0 || self.broadcast_hz as f64 > tps {
            return Err(Error::param("broadcast_hz", "must be in [1, physics rate]"));
        }
        self.teleop.validate(&self.force_params)?;
        Ok(())
    }

    pub fn ticks_per_second(&self) -> u64 {
        (1.0 / self.dt).round() as u64
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn resolve_force(
    doc: &ScenarioDoc,
    base_dir: Option<&Path>,
) -> Result<(OpticalForceParams, ForceProvenance)> {
    match (&doc.force, &doc.force_samples) {
        (Some(_), Some(_)) => Err(Error::param(
            "force",
            "give either `force` or `force_samples`, not both",
        )),
        (Some(p), None) => {
            p.validate()
                .map_err(|e| Error::param("force", e.to_string()))?;
            Ok((*p, ForceProvenance::Inline))
        }
        (None, Some(src)) => {
            let samples = match src {
                SampleSource::Inline(s) => s.clone(),
                SampleSource::Path(p) => {
                    let full = match base_dir {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.clone(),
                    };
                    let f = fs::File::open(&full).map_err(|e| Error::io(&full, e))?;
                    read_samples_csv(f)?
                }
            };
            let params = fit_piecewise_with(
                &samples,
                FitOptions {
                    cutoff_r_max: doc.force_cutoff,
                },
            )?;
            let bytes = serde_json::to_vec(&samples)?;
            Ok((
                params,
                ForceProvenance::Fitted {
                    samples: samples.len(),
                    samples_hash: format!("{:016x}", fnv1a64(&bytes)),
                },
            ))
        }
        (None, None) => {
            let prof = BeamProfile::default();
            Ok((
                default_force_params(),
                ForceProvenance::DefaultProfile {
                    f_max: prof.f_max,
                    beam_waist_w: prof.beam_waist_w,
                },
            ))
        }
    }
}

/// Parses, resolves defaults and validates a scenario document.
/// `base_dir` resolves relative sample-file paths.
pub fn load_scenario(document: &str, base_dir: Option<&Path>) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(document).map_err(parse_error)?;
    if doc.version != SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion(doc.version));
    }
    scenario_from_doc(doc, base_dir)
}

pub fn scenario_from_doc(doc: ScenarioDoc, base_dir: Option<&Path>) -> Result<Scenario> {
    let (force_params, force_provenance) = resolve_force(&doc, base_dir)?;
    let start = doc
        .start
        .or_else(|| doc.robot.pose.map(|p| p.position))
        .unwrap_or_else(Vec3::zeros);
    let pose = doc.robot.pose.unwrap_or_else(|| Pose::at(start));
    let workspace = doc
        .workspace
        .unwrap_or_else(|| Aabb::new(vec3(-100.0, -100.0, -50.0), vec3(100.0, 100.0, 50.0)));
    let scenario = Scenario {
        version: doc.version,
        name: doc.name,
        medium: doc.medium,
        robot: Robot::new(pose, doc.robot.elements),
        traps: doc.traps,
        force_params,
        force_provenance,
        cells: doc.cells,
        obstacles: doc.obstacles,
        payload_cell: doc.payload_cell,
        start,
        goal: doc.goal,
        teleop: doc.teleop,
        seed: doc.seed,
        workspace,
        dt: doc.dt.unwrap_or(DEFAULT_DT),
        timeout_s: doc.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S),
        broadcast_hz: doc.broadcast_hz.unwrap_or(DEFAULT_BROADCAST_HZ),
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scenario(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "name": "minimal",
        "robot": { "elements": [ { "offset": [0, 0, 0], "radius": 1.5, "trap": 0 } ] },
        "traps": [ { "position": [0, 0, 0], "device": "left" } ],
        "cells": [ { "position": [10, 0, 0], "radius": 3 } ],
        "goal": { "center": [40, 0, 0], "radius": 5 }
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = load_scenario(MINIMAL, None).unwrap();
        assert_eq!(s.dt, 1e-3);
        assert_eq!(s.timeout_s, 120.0);
        assert_eq!(s.broadcast_hz, 60);
        assert_eq!(s.medium, Medium::default());
        assert_eq!(s.teleop, TeleopConfig::default());
        assert_eq!(s.traps[0].trap.power_weight, 1.0);
        assert_eq!(s.cells[0].stiffness_k_cell, 10.0);
        assert!(matches!(
            s.force_provenance,
            ForceProvenance::DefaultProfile { .. }
        ));
        assert_eq!(s.force_params, default_force_params());
    }

    #[test]
    fn zero_goal_radius_names_field() {
        let doc = MINIMAL.replace(r#""radius": 5"#, r#""radius": 0"#);
        match load_scenario(&doc, None) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "goal.radius"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        let doc = MINIMAL.replace(r#""name": "minimal","#, r#""name": "minimal""#);
        match load_scenario(&doc, None) {
            Err(Error::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_version() {
        let doc = MINIMAL.replace(r#""version": 1"#, r#""version": 7"#);
        assert!(matches!(
            load_scenario(&doc, None),
            Err(Error::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn bad_trap_index_and_payload() {
        let doc = MINIMAL.replace(r#""trap": 0"#, r#""trap": 4"#);
        assert!(
            matches!(load_scenario(&doc, None), Err(Error::InvalidParameter { field, .. }) if field.contains("trap"))
        );
        let doc = MINIMAL.replace(r#""goal""#, r#""payload_cell": 2, "goal""#);
        assert!(
            matches!(load_scenario(&doc, None), Err(Error::InvalidParameter { field, .. }) if field == "payload_cell")
        );
    }

    #[test]
    fn hash_tracks_seed_and_dt() {
        let a = load_scenario(MINIMAL, None).unwrap();
        let mut b = a.clone();
        b.seed = 1;
        let mut c = a.clone();
        c.dt = 5e-4;
        assert_eq!(
            a.config_hash(),
            load_scenario(MINIMAL, None).unwrap().config_hash()
        );
        assert_ne!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn fitted_samples_change_hash() {
        let truth = OpticalForceParams::continuous(5.0, 1.0, 2.0, 3.0);
        let dir = tempfile::tempdir().unwrap();
        let rs: Vec<f64> = (1..30).map(|i| i as f64 * 0.1).collect();
        let samples: Vec<ForceSample> = rs
            .iter()
            .map(|&r| ForceSample::new(r, truth.magnitude(r)))
            .collect();
        let mut f = fs::File::create(dir.path().join("samples.csv")).unwrap();
        crate::force_model::write_samples_csv(&mut f, &samples).unwrap();

        let inline_doc = MINIMAL.replace(
            r#""goal""#,
            &format!(
                r#""force": {}, "goal""#,
                serde_json::to_string(&truth).unwrap()
            ),
        );
        let fitted_doc = MINIMAL.replace(r#""goal""#, r#""force_samples": "samples.csv", "goal""#);
        let inline = load_scenario(&inline_doc, None).unwrap();
        let fitted = load_scenario(&fitted_doc, Some(dir.path())).unwrap();
        assert!((fitted.force_params.stiffness_k - 5.0).abs() < 1e-6);
        assert!(matches!(
            fitted.force_provenance,
            ForceProvenance::Fitted { samples: 29, .. }
        ));

        // Recompute both hashes from scratch over the serialized scenarios.
        let h = |s: &Scenario| fnv1a64(serde_json::to_string(s).unwrap().as_bytes());
        assert_eq!(h(&inline), inline.config_hash());
        assert_eq!(h(&fitted), fitted.config_hash());
        assert_ne!(inline.config_hash(), fitted.config_hash());
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
