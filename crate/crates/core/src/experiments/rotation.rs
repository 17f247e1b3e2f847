//! Steady out-of-plane rotation of a two-handle frame versus trap spacing.
//!
//! The frame is a rod along body x with a straight post at each end. Both
//! posts are parallel and inclined by `post_tilt` from body z, so the body
//! is a parallelogram in its xz plane. Each post is a dense row of spheres
//! driven by one trap; a trap slides freely along its post but resists
//! motion across it. With both traps in the focal plane at spacing d*, the
//! steady state puts each trap on its post line, which fixes the tilt:
//!
//! ```text
//! d*·sin ψ = 2L·cos α,   θ = ψ + α − 90°
//! ```
//!
//! with ψ the post direction's angle from the focal plane. θ falls as d*
//! grows and vanishes at d* = 2L, where the traps sit on the post centers.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Medium, Robot, World, DEFAULT_DT};
use crate::force_model::{OpticalForceParams, SphereElement, Trap};
use crate::geometry::{vec3, Pose, Quat, Vec3};
use crate::rng::RngState;
use crate::session::default_force_params;
use crate::{Error, Result};

/// Convergence threshold on the rotation rate, rad/s.
pub const SETTLE_RATE: f64 = 1e-4;
const CHECK_INTERVAL_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Equal trap powers.
    A,
    /// Powers (m, 1) normalized to sum 2.
    B,
}

/// Frame dimensions, µm and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RodGeometry {
    /// Post centers sit at body (±half_span, 0, 0).
    pub half_span: f64,
    /// Post inclination from body z toward body +x, degrees.
    pub post_tilt_deg: f64,
    /// Posts extend this far either side of their center.
    pub post_half_length: f64,
    pub bead_spacing: f64,
    pub bead_radius: f64,
    /// Untrapped sphere at the rod center (drag only); 0 disables it.
    pub body_radius: f64,
}

impl Default for RodGeometry {
    fn default() -> Self {
        Self {
            half_span: 5.0,
            post_tilt_deg: 45.0,
            post_half_length: 6.0,
            bead_spacing: 0.25,
            bead_radius: 0.5,
            body_radius: 1.0,
        }
    }
}

impl RodGeometry {
    /// Trap spacing that puts each trap on its post center at the flat pose.
    pub fn flat_spacing(&self) -> f64 {
        2.0 * self.half_span
    }

    /// Smallest spacing the frame can reach by tilting.
    pub fn min_spacing(&self) -> f64 {
        2.0 * self.half_span * self.post_tilt_deg.to_radians().cos()
    }

    /// Steady tilt, degrees, when each trap lies on its post line.
    pub fn predicted_theta_deg(&self, d_star: f64) -> Option<f64> {
        let s = self.min_spacing() / d_star;
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        Some((s.asin().to_degrees() + self.post_tilt_deg - 90.0).abs())
    }

    pub fn elements(&self) -> Vec<SphereElement> {
        let a = self.post_tilt_deg.to_radians();
        let dir = vec3(a.sin(), 0.0, a.cos());
        let n = (self.post_half_length / self.bead_spacing).floor() as i64;
        let mut out = Vec::new();
        for (trap, sx) in [(0, -1.0), (1, 1.0)] {
            let center = vec3(sx * self.half_span, 0.0, 0.0);
            for i in -n..=n {
                out.push(SphereElement::new(
                    center + dir * (i as f64 * self.bead_spacing),
                    self.bead_radius,
                    Some(trap),
                ));
            }
        }
        if self.body_radius > 0.0 {
            out.push(SphereElement::new(Vec3::zeros(), self.body_radius, None));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationStudyConfig {
    pub strategy: Strategy,
    /// Trap spacing values, µm; strictly increasing, at least 5.
    pub d_star_values: Vec<f64>,
    /// Strategy B power ratio.
    pub power_ratio_m: f64,
    /// Minimum simulated time before convergence is tested, s.
    pub settle_time: f64,
    /// Initial tilt about body y, rad.
    pub initial_tilt: f64,
    pub geometry: RodGeometry,
    pub force: OpticalForceParams,
    /// Viscosity only; the study always runs at T = 0.
    pub medium: Medium,
    pub dt: f64,
}

impl RotationStudyConfig {
    pub fn new(strategy: Strategy, d_star_values: Vec<f64>) -> Self {
        Self {
            strategy,
            d_star_values,
            power_ratio_m: 1.5,
            settle_time: 2.0,
            initial_tilt: 0.0,
            geometry: RodGeometry::default(),
            force: default_force_params(),
            medium: Medium::default(),
            dt: DEFAULT_DT,
        }
    }

    /// Default grid: eight spacings from just above the reachable minimum
    /// up to the flat spacing.
    pub fn default_grid(strategy: Strategy) -> Self {
        let g = RodGeometry::default();
        let (lo, hi) = (g.min_spacing() * 1.04, g.flat_spacing());
        Self::new(
            strategy,
            (0..8).map(|i| lo + (hi - lo) * i as f64 / 7.0).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_star_values.len() < 5 {
            return Err(Error::param("d_star_values", "need at least 5 values"));
        }
        if !self.d_star_values.windows(2).all(|w| w[0] < w[1])
            || !self.d_star_values.iter().all(|d| d.is_finite())
        {
            return Err(Error::param(
                "d_star_values",
                "must be finite and strictly increasing",
            ));
        }
        if !(self.power_ratio_m > 0.0 && self.power_ratio_m.is_finite()) {
            return Err(Error::param("power_ratio_m", "must be positive"));
        }
        if !(self.settle_time > 0.0) {
            return Err(Error::param("settle_time", "must be positive"));
        }
        self.force.validate()?;
        Ok(())
    }

    /// Power weights of the (−x, +x) traps.
    pub fn weights(&self) -> (f64, f64) {
        match self.strategy {
            Strategy::A => (1.0, 1.0),
            Strategy::B => {
                let m = self.power_ratio_m;
                (2.0 * m / (m + 1.0), 2.0 / (m + 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationRow {
    pub d_star: f64,
    pub theta_deg: f64,
    pub converged: bool,
    /// Simulated time at which convergence was declared (or the cap).
    pub settle_s: f64,
}

/// Angle between the body x axis and the focal (xy) plane, degrees.
pub fn out_of_plane_angle(q: &Quat) -> f64 {
    let axis = q * Vec3::x();
    axis.z.abs().min(1.0).asin().to_degrees()
}

/// Settles the rod for one spacing.
pub fn settle(cfg: &RotationStudyConfig, d_star: f64) -> Result<RotationRow> {
    let (w0, w1) = cfg.weights();
    let traps = [
        Trap::at(vec3(-0.5 * d_star, 0.0, 0.0)).with_weight(w0),
        Trap::at(vec3(0.5 * d_star, 0.0, 0.0)).with_weight(w1),
    ];
    let pose = Pose {
        position: Vec3::zeros(),
        orientation: Quat::from_scaled_axis(vec3(0.0, cfg.initial_tilt, 0.0)),
    };
    let mut world = World::new(Robot::new(pose, cfg.geometry.elements()), vec![], vec![]);
    world.validate(traps.len())?;
    let medium = cfg.medium.with_temperature(0.0);
    let mut rng = RngState::new(0);
    let per_check = (CHECK_INTERVAL_S / cfg.dt).round().max(1.0) as u64;
    let interval = per_check as f64 * cfg.dt;
    let cap = 10.0 * cfg.settle_time;
    let mut prev = world.robot.pose.orientation;
    loop {
        for _ in 0..per_check {
            world.advance(&traps, &cfg.force, &medium, cfg.dt, &mut rng)?;
        }
        let q = world.robot.pose.orientation;
        let rate = q.angle_to(&prev) / interval;
        prev = q;
        let converged = world.time >= cfg.settle_time && rate < SETTLE_RATE;
        if converged || world.time >= cap {
            return Ok(RotationRow {
                d_star,
                theta_deg: out_of_plane_angle(&q),
                converged,
                settle_s: world.time,
            });
        }
    }
}

/// One row per spacing, in grid order.
pub fn run_rotation_study(cfg: &RotationStudyConfig) -> Result<Vec<RotationRow>> {
    cfg.validate()?;
    cfg.d_star_values.iter().map(|&d| settle(cfg, d)).collect()
}
