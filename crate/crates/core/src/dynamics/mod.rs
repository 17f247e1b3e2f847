//! Overdamped stochastic rigid-body dynamics.
//!
//! There is no inertia: each tick the robot moves by `F/γ_t·dt` plus a
//! Brownian kick with variance `2·D·dt` per axis (`D = kB·T/γ_t`), and rotates
//! by the analogous rotational update applied through the exponential map.
//! Free cells follow the same rule with their own Stokes drag. Gravity and
//! buoyancy are not modeled.
//!
//! Active contact springs are integrated linearly-implicitly: the mobility
//! `1/γ` becomes `(γ + dt·Σ k·J·Jᵀ)⁻¹`, which keeps stiff penalty contacts
//! stable at millisecond steps without changing any equilibrium.

mod contact;

pub use contact::{
    contact_forces, Cell, ContactReport, ContactSphere, Obstacle, ObstacleShape,
    DEFAULT_CELL_STIFFNESS, DEFAULT_OBSTACLE_STIFFNESS,
};

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::force_model::{self, OpticalForceParams, SphereElement, Trap, Wrench};
use crate::geometry::{Pose, Quat, Vec3};
use crate::rng::RngState;
use crate::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN_J_PER_K: f64 = 1.380649e-23;
/// 1 J = 1e18 pN·µm.
const PN_UM_PER_J: f64 = 1e18;
/// Largest accepted physics step, s.
pub const MAX_DT: f64 = 2e-3;
/// Default physics step, s.
pub const DEFAULT_DT: f64 = 1e-3;
/// A step that moves a body further than this many radii is a blow-up.
pub const BLOWUP_RADII: f64 = 5.0;

fn water_viscosity() -> f64 {
    1e-3
}

fn room_temperature() -> f64 {
    300.0
}

/// Suspending fluid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    /// pN·s/µm² (water: 1e-3).
    #[serde(rename = "viscosity", default = "water_viscosity")]
    pub viscosity_eta: f64,
    /// K
    #[serde(rename = "temperature", default = "room_temperature")]
    pub temperature_t: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Self {
            viscosity_eta: water_viscosity(),
            temperature_t: room_temperature(),
        }
    }
}

impl Medium {
    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature_t = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity_eta > 0.0 && self.viscosity_eta.is_finite()) {
            return Err(Error::param("medium.viscosity", "must be positive"));
        }
        // T = 0 is accepted: it switches thermal noise off.
        if !(self.temperature_t >= 0.0 && self.temperature_t.is_finite()) {
            return Err(Error::param("medium.temperature", "must be >= 0"));
        }
        Ok(())
    }

    /// Thermal energy kB·T in pN·µm (4.1419e-3 at 300 K).
    pub fn thermal_energy(&self) -> f64 {
        BOLTZMANN_J_PER_K * self.temperature_t * PN_UM_PER_J
    }

    /// Stokes translational drag of one sphere, pN·s/µm.
    pub fn stokes(&self, radius: f64) -> f64 {
        6.0 * PI * self.viscosity_eta * radius
    }

    /// Diffusion coefficient for drag `gamma`.
    pub fn diffusion(&self, gamma: f64) -> f64 {
        self.thermal_energy() / gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragCoefficients {
    /// pN·s/µm
    pub gamma_t: f64,
    /// pN·s·µm
    pub gamma_r: f64,
}

/// Free-draining drag of a sphere assembly about its body origin.
pub fn drag_coefficients(elements: &[SphereElement], medium: &Medium) -> Result<DragCoefficients> {
    if elements.is_empty() {
        return Err(Error::EmptyElements);
    }
    let eta = medium.viscosity_eta;
    let mut gamma_t = 0.0;
    let mut gamma_r = 0.0;
    for e in elements {
        let a = e.radius;
        gamma_t += 6.0 * PI * eta * a;
        gamma_r += 8.0 * PI * eta * a.powi(3) + 6.0 * PI * eta * a * e.offset_body.norm_squared();
    }
    Ok(DragCoefficients { gamma_t, gamma_r })
}

/// One Gaussian displacement component with standard deviation
/// `sqrt(2·kB·T/γ·dt)`.
pub fn brownian_kick(gamma: f64, medium: &Medium, dt: f64, rng: &mut RngState) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", "must be positive"));
    }
    Ok(kick_sigma(gamma, medium, dt) * rng.normal())
}

fn kick_sigma(gamma: f64, medium: &Medium, dt: f64) -> f64 {
    (2.0 * medium.diffusion(gamma) * dt).sqrt()
}

/// Rigid multi-sphere microrobot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub pose: Pose,
    pub elements: Vec<SphereElement>,
    /// Overrides the free-draining composition when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag: Option<DragCoefficients>,
    /// Held in place (used by quasi-static sweeps).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pinned: bool,
}

impl Robot {
    pub fn new(pose: Pose, elements: Vec<SphereElement>) -> Self {
        Self {
            pose,
            elements,
            drag: None,
            pinned: false,
        }
    }

    pub fn max_radius(&self) -> f64 {
        self.elements.iter().map(|e| e.radius).fold(0.0, f64::max)
    }

    pub fn element_centers(&self) -> Vec<Vec3> {
        self.elements
            .iter()
            .map(|e| self.pose.transform(&e.offset_body))
            .collect()
    }

    pub fn drag(&self, medium: &Medium) -> Result<DragCoefficients> {
        match self.drag {
            Some(d) => Ok(d),
            None => drag_coefficients(&self.elements, medium),
        }
    }
}

/// Everything that moves, plus the static obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub robot: Robot,
    pub cells: Vec<Cell>,
    pub obstacles: Vec<Obstacle>,
    pub time: f64,
    pub tick: u64,
    /// Velocities realized over the previous tick; only used for contact
    /// damping.
    pub robot_velocity: Vec3,
    pub robot_angular_velocity: Vec3,
    pub cell_velocities: Vec<Vec3>,
}

/// Per-tick diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub optical: Wrench,
    pub contact: ContactReport,
}

impl World {
    pub fn new(robot: Robot, cells: Vec<Cell>, obstacles: Vec<Obstacle>) -> Self {
        let n = cells.len();
        Self {
            robot,
            cells,
            obstacles,
            time: 0.0,
            tick: 0,
            robot_velocity: Vec3::zeros(),
            robot_angular_velocity: Vec3::zeros(),
            cell_velocities: vec![Vec3::zeros(); n],
        }
    }

    pub fn validate(&self, traps_len: usize) -> Result<()> {
        if self.robot.elements.is_empty() {
            return Err(Error::EmptyElements);
        }
        for e in &self.robot.elements {
            e.validate()?;
        }
        force_model::check_assignments(traps_len, &self.robot.elements)?;
        for c in &self.cells {
            c.validate()?;
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    fn contact_spheres(&self) -> Vec<ContactSphere> {
        let pose = &self.robot.pose;
        self.robot
            .elements
            .iter()
            .map(|e| {
                let arm = pose.rotate(&e.offset_body);
                ContactSphere {
                    center: pose.position + arm,
                    radius: e.radius,
                    velocity: self.robot_velocity + self.robot_angular_velocity.cross(&arm),
                }
            })
            .collect()
    }

    /// Contact loads in the current configuration.
    pub fn contacts(&self) -> ContactReport {
        contact_forces(
            &self.contact_spheres(),
            &self.cells,
            &self.cell_velocities,
            &self.obstacles,
        )
    }

    /// Advances one tick in place. On error the world is left untouched.
    pub fn advance(
        &mut self,
        traps: &[Trap],
        params: &OpticalForceParams,
        medium: &Medium,
        dt: f64,
        rng: &mut RngState,
    ) -> Result<StepInfo> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(Error::param("dt", format!("must be in (0, {MAX_DT}] s")));
        }
        let drag = self.robot.drag(medium)?;
        let optical = force_model::msdm_wrench_unchecked(
            params,
            traps,
            &self.robot.pose,
            &self.robot.elements,
        );
        let contact = self.contacts();

        let pose = self.robot.pose;
        let mut force = optical.net_force;
        let mut torque = optical.net_torque;
        for (e, f) in self.robot.elements.iter().zip(&contact.on_elements) {
            force += f;
            torque += pose.rotate(&e.offset_body).cross(f);
        }

        // Fixed draw order: robot translation, robot rotation, then cells.
        let sig_t = kick_sigma(drag.gamma_t, medium, dt);
        let sig_r = kick_sigma(drag.gamma_r, medium, dt);
        let kick_t = Vec3::new(rng.normal(), rng.normal(), rng.normal()) * sig_t;
        let kick_r = Vec3::new(rng.normal(), rng.normal(), rng.normal()) * sig_r;
        let (dx, dtheta) = if self.robot.pinned {
            (Vec3::zeros(), Vec3::zeros())
        } else if contact.element_springs.is_empty() {
            (
                force * (dt / drag.gamma_t) + kick_t,
                torque * (dt / drag.gamma_r) + kick_r,
            )
        } else {
            let mut m = Matrix6::<f64>::zeros();
            for i in 0..3 {
                m[(i, i)] = drag.gamma_t;
                m[(i + 3, i + 3)] = drag.gamma_r;
            }
            for &(i, n, k) in &contact.element_springs {
                let arm = pose.rotate(&self.robot.elements[i].offset_body);
                let ang = arm.cross(&n);
                let jac = Vector6::new(n.x, n.y, n.z, ang.x, ang.y, ang.z);
                m += jac * jac.transpose() * (k * dt);
            }
            let rhs = Vector6::new(
                force.x * dt + drag.gamma_t * kick_t.x,
                force.y * dt + drag.gamma_t * kick_t.y,
                force.z * dt + drag.gamma_t * kick_t.z,
                torque.x * dt + drag.gamma_r * kick_r.x,
                torque.y * dt + drag.gamma_r * kick_r.y,
                torque.z * dt + drag.gamma_r * kick_r.z,
            );
            let sol = m
                .cholesky()
                .map(|c| c.solve(&rhs))
                .ok_or_else(|| Error::param("contact", "singular mobility matrix"))?;
            (
                sol.fixed_rows::<3>(0).into_owned(),
                sol.fixed_rows::<3>(3).into_owned(),
            )
        };
        let limit = BLOWUP_RADII * self.robot.max_radius();
        if !(dx.norm() <= limit) {
            return Err(Error::IntegrationBlowup {
                body: "robot".into(),
                step_um: dx.norm(),
                limit_um: limit,
            });
        }

        let mut cell_dx = Vec::with_capacity(self.cells.len());
        for (j, c) in self.cells.iter().enumerate() {
            let gamma = medium.stokes(c.radius);
            let s = kick_sigma(gamma, medium, dt);
            let kick = Vec3::new(rng.normal(), rng.normal(), rng.normal()) * s;
            let mut m = Matrix3::<f64>::identity() * gamma;
            let mut implicit = false;
            for &(_, n, k) in contact.cell_springs.iter().filter(|s| s.0 == j) {
                m += n * n.transpose() * (k * dt);
                implicit = true;
            }
            let d = if implicit {
                let rhs = contact.on_cells[j] * dt + kick * gamma;
                m.cholesky()
                    .map(|c| c.solve(&rhs))
                    .ok_or_else(|| Error::param("contact", "singular mobility matrix"))?
            } else {
                contact.on_cells[j] * (dt / gamma) + kick
            };
            let limit = BLOWUP_RADII * c.radius;
            if !(d.norm() <= limit) {
                return Err(Error::IntegrationBlowup {
                    body: format!("cell {j}"),
                    step_um: d.norm(),
                    limit_um: limit,
                });
            }
            cell_dx.push(d);
        }

        let mut q = Quat::from_scaled_axis(dtheta) * pose.orientation;
        q.renormalize();
        self.robot.pose = Pose {
            position: pose.position + dx,
            orientation: q,
        };
        self.robot_velocity = dx / dt;
        self.robot_angular_velocity = dtheta / dt;
        for ((c, v), d) in self
            .cells
            .iter_mut()
            .zip(self.cell_velocities.iter_mut())
            .zip(cell_dx)
        {
            c.position += d;
            *v = d / dt;
        }
        self.tick += 1;
        self.time = self.tick as f64 * dt;
        Ok(StepInfo { optical, contact })
    }
}

/// Pure form of [`World::advance`].
pub fn step(
    world: &World,
    traps: &[Trap],
    params: &OpticalForceParams,
    medium: &Medium,
    dt: f64,
    rng: &mut RngState,
) -> Result<World> {
    let mut next = world.clone();
    next.advance(traps, params, medium, dt, rng)?;
    Ok(next)
}
