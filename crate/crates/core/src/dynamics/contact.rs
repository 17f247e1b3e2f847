//! Penalty contact between robot elements, cells and static obstacles.
//!
//! Every overlapping pair produces a normal force `k·p + c·v_n` (clamped at
//! zero) applied equal and opposite to the two bodies.

use serde::{Deserialize, Serialize};

use crate::geometry::{is_finite, Aabb, Vec3};
use crate::{Error, Result};

pub const DEFAULT_CELL_STIFFNESS: f64 = 10.0;
pub const DEFAULT_OBSTACLE_STIFFNESS: f64 = 100.0;

fn default_cell_stiffness() -> f64 {
    DEFAULT_CELL_STIFFNESS
}

fn default_obstacle_stiffness() -> f64 {
    DEFAULT_OBSTACLE_STIFFNESS
}

/// A free-floating spherical cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub position: Vec3,
    pub radius: f64,
    /// pN/µm
    #[serde(rename = "stiffness", default = "default_cell_stiffness")]
    pub stiffness_k_cell: f64,
    /// pN·s/µm
    #[serde(default)]
    pub contact_damping: f64,
}

impl Cell {
    pub fn new(position: Vec3, radius: f64) -> Self {
        Self {
            position,
            radius,
            stiffness_k_cell: DEFAULT_CELL_STIFFNESS,
            contact_damping: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite(&self.position) {
            return Err(Error::param("cell.position", "non-finite"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("cell.radius", "must be positive"));
        }
        if !(self.stiffness_k_cell >= 0.0 && self.stiffness_k_cell.is_finite()) {
            return Err(Error::param("cell.stiffness", "must be >= 0"));
        }
        if !(self.contact_damping >= 0.0 && self.contact_damping.is_finite()) {
            return Err(Error::param("cell.contact_damping", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObstacleShape {
    Box {
        min: Vec3,
        max: Vec3,
    },
    /// Solid half-space `normal·x < offset`.
    Plane {
        normal: Vec3,
        offset: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: ObstacleShape,
    #[serde(default = "default_obstacle_stiffness")]
    pub stiffness: f64,
}

impl Obstacle {
    pub fn aabb(min: Vec3, max: Vec3) -> Self {
        Self {
            shape: ObstacleShape::Box { min, max },
            stiffness: DEFAULT_OBSTACLE_STIFFNESS,
        }
    }

    pub fn plane(normal: Vec3, offset: f64) -> Self {
        Self {
            shape: ObstacleShape::Plane { normal, offset },
            stiffness: DEFAULT_OBSTACLE_STIFFNESS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            ObstacleShape::Box { min, max } => {
                if !Aabb::new(min, max).is_valid() {
                    return Err(Error::param(
                        "obstacle.box",
                        "min must be < max componentwise",
                    ));
                }
            }
            ObstacleShape::Plane { normal, offset } => {
                if !is_finite(&normal) || (normal.norm() - 1.0).abs() > 1e-9 || !offset.is_finite()
                {
                    return Err(Error::param("obstacle.plane", "normal must be unit length"));
                }
            }
        }
        if !(self.stiffness >= 0.0 && self.stiffness.is_finite()) {
            return Err(Error::param("obstacle.stiffness", "must be >= 0"));
        }
        Ok(())
    }

    /// Penetration depth and outward unit normal (pointing from the obstacle
    /// toward the sphere) for a sphere at `center`.
    pub fn penetration(&self, center: &Vec3, radius: f64) -> Option<(f64, Vec3)> {
        match self.shape {
            ObstacleShape::Plane { normal, offset } => {
                let p = radius - (normal.dot(center) - offset);
                (p > 0.0).then_some((p, normal))
            }
            ObstacleShape::Box { min, max } => {
                let b = Aabb::new(min, max);
                if b.contains(center) {
                    // Push out through the nearest face.
                    let mut best = (f64::INFINITY, Vec3::zeros());
                    for i in 0..3 {
                        let lo = center[i] - min[i];
                        let hi = max[i] - center[i];
                        if lo < best.0 {
                            let mut n = Vec3::zeros();
                            n[i] = -1.0;
                            best = (lo, n);
                        }
                        if hi < best.0 {
                            let mut n = Vec3::zeros();
                            n[i] = 1.0;
                            best = (hi, n);
                        }
                    }
                    Some((radius + best.0, best.1))
                } else {
                    let d = center - b.closest_point(center);
                    let dist = d.norm();
                    let p = radius - dist;
                    (p > 0.0).then(|| (p, d / dist))
                }
            }
        }
    }
}

/// A sphere taking part in contact: world center, radius, velocity.
#[derive(Debug, Clone, Copy)]
pub struct ContactSphere {
    pub center: Vec3,
    pub radius: f64,
    pub velocity: Vec3,
}

/// Contact loads for one tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactReport {
    /// Force on each robot element (world frame).
    pub on_elements: Vec<Vec3>,
    pub on_cells: Vec<Vec3>,
    pub on_obstacles: Vec<Vec3>,
    /// Largest single contact-pair force involving a cell, pN.
    pub max_cell_force: f64,
    /// Active springs on robot elements: (element, unit normal, stiffness).
    pub element_springs: Vec<(usize, Vec3, f64)>,
    /// Active springs on cells: (cell, unit normal, stiffness).
    pub cell_springs: Vec<(usize, Vec3, f64)>,
}

impl ContactReport {
    pub fn total(&self) -> Vec3 {
        self.on_elements
            .iter()
            .chain(&self.on_cells)
            .chain(&self.on_obstacles)
            .fold(Vec3::zeros(), |a, b| a + b)
    }
}

fn normal_force(k: f64, c: f64, penetration: f64, approach_speed: f64) -> f64 {
    (k * penetration + c * approach_speed).max(0.0)
}

fn series(k1: f64, k2: f64) -> f64 {
    if k1 + k2 > 0.0 {
        k1 * k2 / (k1 + k2)
    } else {
        0.0
    }
}

/// Sphere–sphere overlap: penetration and unit normal from `b` toward `a`.
fn sphere_overlap(a: &Vec3, ra: f64, b: &Vec3, rb: f64) -> Option<(f64, Vec3)> {
    let d = a - b;
    let dist = d.norm();
    let p = ra + rb - dist;
    if p <= 0.0 {
        return None;
    }
    let n = if dist > 1e-12 { d / dist } else { Vec3::z() };
    Some((p, n))
}

/// Computes all contact forces among robot elements, cells and obstacles.
pub fn contact_forces(
    elements: &[ContactSphere],
    cells: &[Cell],
    cell_velocities: &[Vec3],
    obstacles: &[Obstacle],
) -> ContactReport {
    let mut rep = ContactReport {
        on_elements: vec![Vec3::zeros(); elements.len()],
        on_cells: vec![Vec3::zeros(); cells.len()],
        on_obstacles: vec![Vec3::zeros(); obstacles.len()],
        max_cell_force: 0.0,
        element_springs: Vec::new(),
        cell_springs: Vec::new(),
    };
    let cell_vel = |j: usize| cell_velocities.get(j).copied().unwrap_or_else(Vec3::zeros);

    for (i, e) in elements.iter().enumerate() {
        for (j, c) in cells.iter().enumerate() {
            if let Some((p, n)) = sphere_overlap(&e.center, e.radius, &c.position, c.radius) {
                let approach = -(e.velocity - cell_vel(j)).dot(&n);
                let f = normal_force(c.stiffness_k_cell, c.contact_damping, p, approach);
                rep.on_elements[i] += n * f;
                rep.on_cells[j] -= n * f;
                rep.max_cell_force = rep.max_cell_force.max(f);
                if f > 0.0 {
                    rep.element_springs.push((i, n, c.stiffness_k_cell));
                    rep.cell_springs.push((j, -n, c.stiffness_k_cell));
                }
            }
        }
        for (o, ob) in obstacles.iter().enumerate() {
            if let Some((p, n)) = ob.penetration(&e.center, e.radius) {
                let f = normal_force(ob.stiffness, 0.0, p, -e.velocity.dot(&n));
                rep.on_elements[i] += n * f;
                rep.on_obstacles[o] -= n * f;
                if f > 0.0 {
                    rep.element_springs.push((i, n, ob.stiffness));
                }
            }
        }
    }

    for j in 0..cells.len() {
        let (a, va) = (&cells[j], cell_vel(j));
        for (l, b) in cells.iter().enumerate().skip(j + 1) {
            if let Some((p, n)) = sphere_overlap(&a.position, a.radius, &b.position, b.radius) {
                let k = series(a.stiffness_k_cell, b.stiffness_k_cell);
                let c = 0.5 * (a.contact_damping + b.contact_damping);
                let approach = -(va - cell_vel(l)).dot(&n);
                let f = normal_force(k, c, p, approach);
                rep.on_cells[j] += n * f;
                rep.on_cells[l] -= n * f;
                rep.max_cell_force = rep.max_cell_force.max(f);
                if f > 0.0 {
                    rep.cell_springs.push((j, n, k));
                    rep.cell_springs.push((l, -n, k));
                }
            }
        }
        for (o, ob) in obstacles.iter().enumerate() {
            if let Some((p, n)) = ob.penetration(&a.position, a.radius) {
                let f = normal_force(ob.stiffness, 0.0, p, -va.dot(&n));
                rep.on_cells[j] += n * f;
                rep.on_obstacles[o] -= n * f;
                rep.max_cell_force = rep.max_cell_force.max(f);
                if f > 0.0 {
                    rep.cell_springs.push((j, n, ob.stiffness));
                }
            }
        }
    }
    rep
}
