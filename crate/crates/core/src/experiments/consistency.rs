//! Rendered pre-scaled force versus the fitted model along a quasi-static
//! displacement sweep.
//!
//! A single pinned sphere sits at the origin and its trap is driven through
//! the teleoperation pipeline along the beam axis (z) and a radial axis (x).
//! The observed value is the signed component of the pre-scaled rendered
//! force f_d along the sweep axis; the prediction is the model's trap-side
//! reaction −F(|s|)·sign(s) at the trap's actual displacement s.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Medium, Robot, World, DEFAULT_DT};
use crate::force_model::{OpticalForceParams, SphereElement, Trap};
use crate::geometry::{vec3, Aabb, Pose, Vec3};
use crate::rng::RngState;
use crate::stats::{fit_metrics, FitMetrics};
use crate::teleop::{Device, TeleopConfig, TeleopPipeline};
use crate::{Error, Result};

/// Largest trap step per tick while sweeping, µm.
pub const MAX_STEP_PER_TICK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Axial,
    Radial,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::Axial => Vec3::z(),
            Axis::Radial => Vec3::x(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Axial => "axial",
            Axis::Radial => "radial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Step to each grid point, then hold until the filters settle. Damping
    /// and thermal noise are off.
    Settled,
    /// One continuous slow sweep with the configured damping, sampled as
    /// the trap crosses each grid point.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub mode: SweepMode,
    pub grid_points: usize,
    /// Sweep covers ±extent·r_max.
    pub extent: f64,
    /// Trap speed in continuous mode, µm per tick.
    pub continuous_step: f64,
    /// Hold ticks per grid point in settled mode.
    pub hold_ticks: u64,
    pub teleop: TeleopConfig,
    pub sphere_radius: f64,
    pub dt: f64,
}

impl ConsistencyConfig {
    pub fn new(mode: SweepMode) -> Self {
        Self {
            mode,
            grid_points: 41,
            extent: 0.9,
            continuous_step: 0.002,
            hold_ticks: 800,
            teleop: TeleopConfig::default(),
            sphere_radius: 1.5,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySample {
    pub axis: Axis,
    /// Trap displacement along the axis, µm.
    pub displacement_um: f64,
    /// Pre-scaled rendered force along the axis, pN.
    pub rendered_pn: f64,
    pub model_pn: f64,
    /// Device-scale force along the axis.
    pub f_hand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub axial: FitMetrics,
    pub radial: FitMetrics,
    #[serde(skip)]
    pub samples: Vec<ConsistencySample>,
}

/// Signed model reaction at displacement `s`.
pub fn model_reaction(params: &OpticalForceParams, s: f64) -> f64 {
    -params.magnitude(s.abs()) * s.signum()
}

pub fn sweep_grid(params: &OpticalForceParams, cfg: &ConsistencyConfig) -> Vec<f64> {
    let n = cfg.grid_points;
    let smax = cfg.extent * params.cutoff_r_max;
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -smax + 2.0 * smax * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

struct Rig {
    world: World,
    traps: [Trap; 1],
    devices: [Device; 1],
    pipeline: TeleopPipeline,
    medium: Medium,
    rng: RngState,
    axis: Vec3,
    workspace: Aabb,
}

impl Rig {
    fn new(cfg: &ConsistencyConfig, axis: Axis, start: f64, settled: bool) -> Self {
        let mut robot = Robot::new(
            Pose::default(),
            vec![SphereElement::new(
                Vec3::zeros(),
                cfg.sphere_radius,
                Some(0),
            )],
        );
        robot.pinned = true;
        let mut teleop = cfg.teleop;
        let mut medium = Medium::default();
        if settled {
            teleop.damping_b = 0.0;
            medium = medium.with_temperature(0.0);
        }
        let u = axis.unit();
        Self {
            world: World::new(robot, vec![], vec![]),
            traps: [Trap::at(u * start)],
            devices: [Device::Left],
            pipeline: TeleopPipeline::new(teleop, 1),
            medium,
            rng: RngState::new(0),
            axis: u,
            workspace: Aabb::new(vec3(-1e3, -1e3, -1e3), vec3(1e3, 1e3, 1e3)),
        }
    }

    fn tick(&mut self, hand: f64, params: &OpticalForceParams, dt: f64) -> Result<()> {
        self.pipeline
            .set_hand_velocity(Device::Left, self.axis * hand);
        self.pipeline
            .drive_traps(&mut self.traps, &self.devices, dt, &self.workspace)?;
        let info = self
            .world
            .advance(&self.traps, params, &self.medium, dt, &mut self.rng)?;
        self.pipeline.render(
            &info.optical,
            &self.world.robot.elements,
            &self.devices,
            false,
        );
        Ok(())
    }

    fn displacement(&self) -> f64 {
        self.traps[0].position.dot(&self.axis)
    }

    fn sample(&self, axis: Axis, params: &OpticalForceParams) -> ConsistencySample {
        // The render uses the pre-step trap position; the robot is pinned, so
        // the step's trap position is the current one.
        let s = self.displacement();
        let out = self.pipeline.channel(Device::Left).output;
        ConsistencySample {
            axis,
            displacement_um: s,
            rendered_pn: out.f_pre.dot(&self.axis),
            model_pn: model_reaction(params, s),
            f_hand: out.f_hand.dot(&self.axis),
        }
    }
}

fn sweep_settled(
    params: &OpticalForceParams,
    cfg: &ConsistencyConfig,
    axis: Axis,
    grid: &[f64],
) -> Result<Vec<ConsistencySample>> {
    let mut rig = Rig::new(cfg, axis, grid[0], true);
    let g = cfg.teleop.g_control;
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        let delta = target - rig.displacement();
        let n = (delta.abs() / MAX_STEP_PER_TICK).ceil() as u64;
        if n > 0 {
            // Constant command for n ticks; the filter has unit DC gain, so
            // the trap lands on target once the hold has settled.
            let hand = delta / (g * cfg.dt * n as f64);
            for _ in 0..n {
                rig.tick(hand, params, cfg.dt)?;
            }
        }
        for _ in 0..cfg.hold_ticks {
            rig.tick(0.0, params, cfg.dt)?;
        }
        out.push(rig.sample(axis, params));
    }
    Ok(out)
}

fn sweep_continuous(
    params: &OpticalForceParams,
    cfg: &ConsistencyConfig,
    axis: Axis,
    grid: &[f64],
) -> Result<Vec<ConsistencySample>> {
    // Start behind the first grid point so the filters are in steady motion
    // by the time sampling begins.
    let step = cfg.continuous_step.min(MAX_STEP_PER_TICK);
    let lead = 200.0 * step;
    let mut rig = Rig::new(cfg, axis, grid[0] - lead, false);
    let hand = step / (cfg.teleop.g_control * cfg.dt);
    let mut out = Vec::with_capacity(grid.len());
    let limit = ((grid[grid.len() - 1] - grid[0] + 2.0 * lead) / step * 2.0) as u64 + 1000;
    let mut next = 0;
    for _ in 0..limit {
        if next == grid.len() {
            break;
        }
        rig.tick(hand, params, cfg.dt)?;
        if rig.displacement() >= grid[next] {
            out.push(rig.sample(axis, params));
            next += 1;
        }
    }
    Ok(out)
}

pub fn sweep(
    params: &OpticalForceParams,
    cfg: &ConsistencyConfig,
    axis: Axis,
) -> Result<Vec<ConsistencySample>> {
    params.validate()?;
    let grid = sweep_grid(params, cfg);
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    match cfg.mode {
        SweepMode::Settled => sweep_settled(params, cfg, axis, &grid),
        SweepMode::Continuous => sweep_continuous(params, cfg, axis, &grid),
    }
}

fn metrics(samples: &[ConsistencySample]) -> Result<FitMetrics> {
    let obs: Vec<f64> = samples.iter().map(|s| s.rendered_pn).collect();
    let pred: Vec<f64> = samples.iter().map(|s| s.model_pn).collect();
    fit_metrics(&obs, &pred).ok_or(Error::Empty("sweep samples"))
}

/// Axial and radial sweeps with fit metrics.
pub fn run_consistency_study(
    params: &OpticalForceParams,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyReport> {
    let axial = sweep(params, cfg, Axis::Axial)?;
    let radial = sweep(params, cfg, Axis::Radial)?;
    Ok(ConsistencyReport {
        axial: metrics(&axial)?,
        radial: metrics(&radial)?,
        samples: axial.into_iter().chain(radial).collect(),
    })
}
