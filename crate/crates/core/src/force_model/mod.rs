//! Piecewise optical-trap force surrogate and multi-sphere aggregation.
//!
//! A single trap pulls a point toward its focus with magnitude
//!
//! ```text
//!          | K·r              r < δ
//! |F|(r) = | C + A/r²         δ ≤ r < r_max
//!          | 0                r ≥ r_max
//! ```
//!
//! scaled by the trap's power weight. A robot is an assembly of spherical
//! elements; each element is driven by at most one trap and the robot's net
//! wrench is the sum over elements.

mod fit;
mod io;

pub use fit::{fit_piecewise, fit_piecewise_with, FitOptions, MIN_FIT_SAMPLES};
pub use io::{read_params_json, read_samples_csv, write_params_json, write_samples_csv};

use serde::{Deserialize, Serialize};

use crate::geometry::{is_finite, Pose, Vec3};
use crate::{Error, Result};

/// Relative tolerance of the continuity invariant at δ.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Coefficients of the piecewise force surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalForceParams {
    /// Near-field stiffness, pN/µm.
    #[serde(rename = "K")]
    pub stiffness_k: f64,
    /// Branch transition radius, µm.
    pub delta: f64,
    /// Far-field inverse-square coefficient, pN·µm².
    #[serde(rename = "A")]
    pub far_a: f64,
    /// Far-field constant, pN.
    #[serde(rename = "C")]
    pub far_c: f64,
    /// Capture range; zero force at and beyond, µm.
    #[serde(rename = "r_max")]
    pub cutoff_r_max: f64,
}

impl OpticalForceParams {
    /// Builds a parameter set that is continuous at δ by deriving `C`.
    pub fn continuous(stiffness_k: f64, delta: f64, far_a: f64, cutoff_r_max: f64) -> Self {
        Self {
            stiffness_k,
            delta,
            far_a,
            far_c: stiffness_k * delta - far_a / (delta * delta),
            cutoff_r_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.stiffness_k,
            self.delta,
            self.far_a,
            self.far_c,
            self.cutoff_r_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("force_params", "non-finite coefficient"));
        }
        if self.stiffness_k <= 0.0 {
            return Err(Error::param("K", "stiffness must be positive"));
        }
        if self.delta <= 0.0 {
            return Err(Error::param("delta", "transition radius must be positive"));
        }
        if self.cutoff_r_max <= self.delta {
            return Err(Error::param("r_max", "cutoff must exceed delta"));
        }
        let jump = self.continuity_gap();
        if jump > CONTINUITY_TOL * self.stiffness_k * self.delta {
            return Err(Error::param(
                "C",
                format!("force is discontinuous at delta (gap {jump:e} pN)"),
            ));
        }
        Ok(())
    }

    /// `|C + A/δ² − K·δ|`.
    pub fn continuity_gap(&self) -> f64 {
        (self.far_c + self.far_a / (self.delta * self.delta) - self.stiffness_k * self.delta).abs()
    }

    /// Unweighted force magnitude at distance `r` from the trap.
    ///
    /// A far-field fit may cross zero before `r_max`; the magnitude is clamped
    /// at zero so the trap never pushes.
    pub fn magnitude(&self, r: f64) -> f64 {
        if r < self.delta {
            self.stiffness_k * r
        } else if r < self.cutoff_r_max {
            (self.far_c + self.far_a / (r * r)).max(0.0)
        } else {
            0.0
        }
    }

    /// Largest magnitude the surrogate produces, found on the near/far
    /// branches analytically.
    pub fn peak_magnitude(&self) -> f64 {
        let at_delta = self.stiffness_k * self.delta;
        // C + A/r² is monotone on [δ, r_max), so its sup is at an endpoint.
        let far_end = self.magnitude(self.cutoff_r_max * (1.0 - 1e-12));
        at_delta.max(far_end)
    }

    /// Force on `point` from `trap`; no validation.
    pub fn force_on(&self, trap: &Trap, point: &Vec3) -> Vec3 {
        let d = trap.position - point;
        let r = d.norm();
        if r == 0.0 {
            return Vec3::zeros();
        }
        let m = trap.power_weight * self.magnitude(r);
        if m == 0.0 {
            return Vec3::zeros();
        }
        d * (m / r)
    }
}

/// One optical trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trap {
    pub position: Vec3,
    /// Multiplier on the force magnitude; 1.0 is nominal beam power.
    #[serde(default = "unit_weight")]
    pub power_weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Trap {
    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            power_weight: 1.0,
        }
    }

    pub fn with_weight(mut self, power_weight: f64) -> Self {
        self.power_weight = power_weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite(&self.position) {
            return Err(Error::param("trap.position", "non-finite"));
        }
        if !self.power_weight.is_finite() || self.power_weight < 0.0 {
            return Err(Error::param("trap.power_weight", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A spherical trapping element rigidly attached to the robot body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereElement {
    #[serde(rename = "offset")]
    pub offset_body: Vec3,
    pub radius: f64,
    #[serde(rename = "trap", default, skip_serializing_if = "Option::is_none")]
    pub assigned_trap: Option<usize>,
}

impl SphereElement {
    pub fn new(offset_body: Vec3, radius: f64, assigned_trap: Option<usize>) -> Self {
        Self {
            offset_body,
            radius,
            assigned_trap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite(&self.offset_body) {
            return Err(Error::param("element.offset", "non-finite"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("element.radius", "must be positive"));
        }
        Ok(())
    }
}

/// One point of a sampled force-versus-displacement curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    #[serde(rename = "r_um")]
    pub displacement_r: f64,
    #[serde(rename = "force_pN")]
    pub force_magnitude: f64,
}

impl ForceSample {
    pub fn new(displacement_r: f64, force_magnitude: f64) -> Self {
        Self {
            displacement_r,
            force_magnitude,
        }
    }
}

/// Gaussian-beam gradient-force profile used as the reference sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProfile {
    /// Peak force, reached at `r = w`, pN.
    pub f_max: f64,
    /// Beam waist, µm.
    pub beam_waist_w: f64,
}

impl BeamProfile {
    pub fn force(&self, r: f64) -> f64 {
        let s = r / self.beam_waist_w;
        self.f_max * s * (0.5 - 0.5 * s * s).exp()
    }
}

impl Default for BeamProfile {
    fn default() -> Self {
        Self {
            f_max: 6.0,
            beam_waist_w: 0.8,
        }
    }
}

/// Checked single-trap force evaluation.
pub fn eval_trap_force(params: &OpticalForceParams, trap: &Trap, point: &Vec3) -> Result<Vec3> {
    params.validate()?;
    trap.validate()?;
    if !is_finite(point) {
        return Err(Error::param("point", "non-finite"));
    }
    Ok(params.force_on(trap, point))
}

/// Samples `F(r) = F_max·(r/w)·exp(½ − r²/2w²)` at each displacement.
pub fn sample_reference_force(
    profile: &BeamProfile,
    displacements: &[f64],
) -> Result<Vec<ForceSample>> {
    if !(profile.f_max > 0.0 && profile.f_max.is_finite()) {
        return Err(Error::param("f_max", "must be positive"));
    }
    if !(profile.beam_waist_w > 0.0 && profile.beam_waist_w.is_finite()) {
        return Err(Error::param("beam_waist_w", "must be positive"));
    }
    displacements
        .iter()
        .map(|&r| {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param("displacement", "must be finite and >= 0"));
            }
            Ok(ForceSample::new(r, profile.force(r)))
        })
        .collect()
}

/// Net force/torque of all traps on a multi-sphere robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Wrench {
    pub net_force: Vec3,
    /// About the robot's center of mass (pose position).
    pub net_torque: Vec3,
    pub per_element: Vec<Vec3>,
}

pub fn check_assignments(traps_len: usize, elements: &[SphereElement]) -> Result<()> {
    for e in elements {
        if let Some(i) = e.assigned_trap {
            if i >= traps_len {
                return Err(Error::TrapIndexOutOfRange {
                    index: i,
                    count: traps_len,
                });
            }
        }
    }
    Ok(())
}

/// Sums per-element trap forces and their torques about the pose position.
pub fn msdm_wrench(
    params: &OpticalForceParams,
    traps: &[Trap],
    pose: &Pose,
    elements: &[SphereElement],
) -> Result<Wrench> {
    params.validate()?;
    check_assignments(traps.len(), elements)?;
    Ok(msdm_wrench_unchecked(params, traps, pose, elements))
}

pub(crate) fn msdm_wrench_unchecked(
    params: &OpticalForceParams,
    traps: &[Trap],
    pose: &Pose,
    elements: &[SphereElement],
) -> Wrench {
    let mut net_force = Vec3::zeros();
    let mut net_torque = Vec3::zeros();
    let per_element = elements
        .iter()
        .map(|e| {
            let Some(t) = e.assigned_trap else {
                return Vec3::zeros();
            };
            let arm = pose.rotate(&e.offset_body);
            let f = params.force_on(&traps[t], &(pose.position + arm));
            net_force += f;
            net_torque += arm.cross(&f);
            f
        })
        .collect();
    Wrench {
        net_force,
        net_torque,
        per_element,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p5() -> OpticalForceParams {
        OpticalForceParams {
            stiffness_k: 5.0,
            delta: 1.0,
            far_a: 2.0,
            far_c: 3.0,
            cutoff_r_max: 4.0,
        }
    }

    #[test]
    fn zero_displacement_is_equilibrium() {
        let t = Trap::at(vec3(1.0, 2.0, 3.0));
        let f = eval_trap_force(&p5(), &t, &vec3(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn linear_branch() {
        let t = Trap::at(Vec3::zeros());
        let f = eval_trap_force(&p5(), &t, &vec3(-0.4, 0.0, 0.0)).unwrap();
        assert_relative_eq!(f, vec3(2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn far_branch() {
        let t = Trap::at(Vec3::zeros());
        let f = eval_trap_force(&p5(), &t, &vec3(0.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(f, vec3(0.0, -3.5, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn beyond_cutoff_is_zero() {
        let t = Trap::at(Vec3::zeros());
        assert_eq!(p5().force_on(&t, &vec3(4.0, 0.0, 0.0)), Vec3::zeros());
        assert_eq!(p5().force_on(&t, &vec3(9.0, 0.0, 0.0)), Vec3::zeros());
    }

    #[test]
    fn invalid_params_rejected() {
        let t = Trap::at(Vec3::zeros());
        let mut p = p5();
        p.far_c = 3.1;
        assert!(matches!(
            eval_trap_force(&p, &t, &Vec3::zeros()),
            Err(Error::InvalidParameter { .. })
        ));
        let mut p = p5();
        p.stiffness_k = -1.0;
        assert!(p.validate().is_err());
        let mut p = p5();
        p.cutoff_r_max = 0.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn reference_profile_landmarks() {
        let prof = BeamProfile {
            f_max: 6.0,
            beam_waist_w: 0.8,
        };
        let s = sample_reference_force(&prof, &[0.0, 0.8, 3.2]).unwrap();
        assert_eq!(s[0].force_magnitude, 0.0);
        assert_relative_eq!(s[1].force_magnitude, 6.0, epsilon = 1e-12);
        // 4·exp(-7.5) ≈ 0.0022126
        assert_relative_eq!(
            s[2].force_magnitude / 6.0,
            4.0 * (-7.5f64).exp(),
            epsilon = 1e-15
        );
        assert!(sample_reference_force(
            &BeamProfile {
                f_max: 0.0,
                beam_waist_w: 1.0
            },
            &[1.0]
        )
        .is_err());
        assert!(sample_reference_force(
            &BeamProfile {
                f_max: 1.0,
                beam_waist_w: -1.0
            },
            &[1.0]
        )
        .is_err());
    }

    #[test]
    fn reference_maximum_by_grid_search() {
        // Independent check that the profile peaks at r = w.
        let prof = BeamProfile::default();
        let (mut best_r, mut best_f) = (0.0, f64::MIN);
        for i in 0..=400_000 {
            let r = i as f64 * 1e-5;
            let f = prof.f_max
                * (r / prof.beam_waist_w)
                * (0.5 - r * r / (2.0 * prof.beam_waist_w.powi(2))).exp();
            if f > best_f {
                best_f = f;
                best_r = r;
            }
        }
        assert!((best_r - prof.beam_waist_w).abs() < 2e-5);
        assert_relative_eq!(best_f, prof.f_max, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_pair_on_traps_has_no_wrench() {
        let traps = [
            Trap::at(vec3(-1.0, 0.0, 0.0)),
            Trap::at(vec3(1.0, 0.0, 0.0)),
        ];
        let els = [
            SphereElement::new(vec3(-1.0, 0.0, 0.0), 1.0, Some(0)),
            SphereElement::new(vec3(1.0, 0.0, 0.0), 1.0, Some(1)),
        ];
        let w = msdm_wrench(&p5(), &traps, &Pose::default(), &els).unwrap();
        assert_eq!(w.net_force, Vec3::zeros());
        assert_eq!(w.net_torque, Vec3::zeros());
    }

    #[test]
    fn offset_element_torque() {
        let traps = [Trap::at(vec3(0.4, 1.0, 0.0))];
        let els = [SphereElement::new(vec3(0.0, 1.0, 0.0), 1.0, Some(0))];
        let w = msdm_wrench(&p5(), &traps, &Pose::default(), &els).unwrap();
        assert_relative_eq!(w.net_force, vec3(2.0, 0.0, 0.0), epsilon = 1e-12);
        // Cross product written out by components.
        let (r, f) = ([0.0, 1.0, 0.0], [2.0, 0.0, 0.0]);
        let tau = vec3(
            r[1] * f[2] - r[2] * f[1],
            r[2] * f[0] - r[0] * f[2],
            r[0] * f[1] - r[1] * f[0],
        );
        assert_relative_eq!(w.net_torque, tau, epsilon = 1e-12);
        assert_relative_eq!(w.net_torque, vec3(0.0, 0.0, -2.0), epsilon = 1e-12);
    }

    #[test]
    fn unassigned_and_out_of_range() {
        let traps = [Trap::at(vec3(0.4, 0.0, 0.0))];
        let els = [SphereElement::new(Vec3::zeros(), 1.0, None)];
        let w = msdm_wrench(&p5(), &traps, &Pose::default(), &els).unwrap();
        assert_eq!(w.per_element[0], Vec3::zeros());
        let bad = [SphereElement::new(Vec3::zeros(), 1.0, Some(3))];
        assert!(matches!(
            msdm_wrench(&p5(), &traps, &Pose::default(), &bad),
            Err(Error::TrapIndexOutOfRange { index: 3, count: 1 })
        ));
    }

    fn arb_params() -> impl Strategy<Value = OpticalForceParams> {
        (0.5f64..50.0, 0.2f64..2.0, -5.0f64..5.0, 1.5f64..4.0)
            .prop_map(|(k, d, a, cut)| OpticalForceParams::continuous(k, d, a, d * cut))
    }

    fn arb_vec(s: f64) -> impl Strategy<Value = Vec3> {
        (-s..s, -s..s, -s..s).prop_map(|(x, y, z)| vec3(x, y, z))
    }

    proptest! {
        #[test]
        fn wrench_matches_elementwise_sum(
            p in arb_params(),
            traps in prop::collection::vec(arb_vec(3.0), 1..4),
            offs in prop::collection::vec((arb_vec(2.0), 0usize..4), 1..6),
            pos in arb_vec(1.0),
            axis in arb_vec(1.0),
        ) {
            let traps: Vec<Trap> = traps.into_iter().map(Trap::at).collect();
            let els: Vec<SphereElement> = offs
                .into_iter()
                .map(|(o, i)| SphereElement::new(o, 0.5, (i < traps.len()).then_some(i)))
                .collect();
            let pose = Pose { position: pos, orientation: crate::Quat::from_scaled_axis(axis) };
            let w = msdm_wrench(&p, &traps, &pose, &els).unwrap();
            let mut f = Vec3::zeros();
            let mut tq = Vec3::zeros();
            for e in &els {
                if let Some(i) = e.assigned_trap {
                    let arm = pose.orientation * e.offset_body;
                    let fi = eval_trap_force(&p, &traps[i], &(pose.position + arm)).unwrap();
                    f += fi;
                    tq += arm.cross(&fi);
                }
            }
            prop_assert!((w.net_force - f).norm() <= 1e-9 * (1.0 + f.norm()));
            prop_assert!((w.net_torque - tq).norm() <= 1e-9 * (1.0 + tq.norm()));
        }
    }
}
