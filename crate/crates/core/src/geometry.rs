//! Vector and pose types shared by every module.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Positions in µm, forces in pN, torques in pN·µm depending on context.
pub type Vec3 = Vector3<f64>;

/// Unit quaternion, serialized as `[i, j, k, w]`.
pub type Quat = UnitQuaternion<f64>;

pub fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

pub fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Rigid pose of a body: center-of-mass position and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default = "Quat::identity")]
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::at(Vec3::zeros())
    }
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            orientation: Quat::identity(),
        }
    }

    /// World-frame offset of a body-frame vector (rotation only).
    pub fn rotate(&self, body: &Vec3) -> Vec3 {
        self.orientation * body
    }

    /// World-frame point of a body-frame offset.
    pub fn transform(&self, body: &Vec3) -> Vec3 {
        self.position + self.rotate(body)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        is_finite(&self.min) && is_finite(&self.max) && (0..3).all(|i| self.min[i] < self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Closest point of the box (surface or interior) to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        self.clamp(p)
    }
}
