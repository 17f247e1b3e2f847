//! Bilateral hand/trap signal path.
//!
//! Forward: hand velocity → low-pass (α_m) → `G_control` → incremental trap
//! motion, clamped to the workspace.
//! Feedback: trap-side reaction force → low-pass (α_f) → minus virtual
//! damping on the filtered hand velocity → scaled by `G_hand`.

use serde::{Deserialize, Serialize};

use crate::force_model::{OpticalForceParams, SphereElement, Trap, Wrench};
use crate::geometry::{is_finite, Aabb, Vec3};
use crate::{Error, Result};

/// Published range of the device force scale.
pub const G_HAND_RANGE: (f64, f64) = (0.0022, 0.0030);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Left,
    Right,
}

impl Device {
    pub const ALL: [Device; 2] = [Device::Left, Device::Right];

    pub fn index(self) -> usize {
        match self {
            Device::Left => 0,
            Device::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Device::Left => "left",
            Device::Right => "right",
        }
    }
}

/// Pipeline constants. `g_control` maps hand units to µm; one hand unit is
/// a full traverse of the device workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeleopConfig {
    pub alpha_m: f64,
    pub alpha_f: f64,
    /// µm per hand unit.
    pub g_control: f64,
    pub g_hand: f64,
    /// pN·s per hand unit.
    pub damping_b: f64,
    /// pN
    pub f_warn: f64,
    /// µm; defaults to the force model's capture range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_loss: Option<f64>,
    /// Accept `g_hand` outside the published range.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub g_hand_override: bool,
}

impl Default for TeleopConfig {
    fn default() -> Self {
        let g_control = 50.0;
        Self {
            alpha_m: 0.05,
            alpha_f: 0.05,
            g_control,
            g_hand: 0.0026,
            // 0.2·G_control·γ_t for a 1.5 µm sphere in water.
            damping_b: 0.2 * g_control * 0.028_274,
            f_warn: 8.0,
            d_loss: None,
            g_hand_override: false,
        }
    }
}

impl TeleopConfig {
    pub fn validate(&self, params: &OpticalForceParams) -> Result<()> {
        for (name, a) in [
            ("teleop.alpha_m", self.alpha_m),
            ("teleop.alpha_f", self.alpha_f),
        ] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::param(name, "must be in (0, 1]"));
            }
        }
        if !(self.g_control.is_finite() && self.g_control >= 0.0) {
            return Err(Error::param("teleop.g_control", "must be finite and >= 0"));
        }
        if !self.g_hand.is_finite()
            || (!self.g_hand_override && !(G_HAND_RANGE.0..=G_HAND_RANGE.1).contains(&self.g_hand))
        {
            return Err(Error::param(
                "teleop.g_hand",
                format!(
                    "outside [{}, {}] without override",
                    G_HAND_RANGE.0, G_HAND_RANGE.1
                ),
            ));
        }
        if !(self.damping_b.is_finite() && self.damping_b >= 0.0) {
            return Err(Error::param("teleop.damping_b", "must be finite and >= 0"));
        }
        if !(self.f_warn > 0.0) {
            return Err(Error::param("teleop.f_warn", "must be positive"));
        }
        if self.loss_distance(params) <= params.delta {
            return Err(Error::param(
                "teleop.d_loss",
                "must exceed the force model's delta",
            ));
        }
        Ok(())
    }

    pub fn loss_distance(&self, params: &OpticalForceParams) -> f64 {
        self.d_loss.unwrap_or(params.cutoff_r_max)
    }
}

/// Hand-motion sample from one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandInput {
    pub device: Device,
    /// Hand units per second.
    pub velocity: Vec3,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LowPassState {
    pub y_prev: Vec3,
}

/// `y = y_prev + α·(x − y_prev)`.
pub fn lowpass_step(state: LowPassState, x: &Vec3, alpha: f64) -> Result<(LowPassState, Vec3)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", "must be in (0, 1]"));
    }
    let y = filter(&state.y_prev, x, alpha);
    Ok((LowPassState { y_prev: y }, y))
}

#[inline]
fn filter(prev: &Vec3, x: &Vec3, alpha: f64) -> Vec3 {
    if alpha == 1.0 {
        *x
    } else {
        prev + (x - prev) * alpha
    }
}

/// Moves a trap by `g_control·v·dt` and clamps it to the workspace.
pub fn update_trap(
    trap: &Trap,
    filtered_vel: &Vec3,
    g_control: f64,
    dt: f64,
    workspace: &Aabb,
) -> Result<Trap> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    Ok(Trap {
        position: workspace.clamp(&(trap.position + filtered_vel * (g_control * dt))),
        power_weight: trap.power_weight,
    })
}

/// Rendered feedback for one device at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HapticOutput {
    /// Device-scale force.
    pub f_hand: Vec3,
    /// Pre-scaled (filtered and damped) force, pN.
    pub f_pre: Vec3,
    /// Raw model force, pN.
    pub f_raw: Vec3,
    pub warning: bool,
    pub trap_lost: bool,
}

/// One feedback-path tick. `trap_lost` is left false; loss is tracked by
/// [`TrapLossDetector`].
pub fn render_force(
    f_raw: &Vec3,
    filter_state: LowPassState,
    cfg: &TeleopConfig,
    hand_vel_filtered: &Vec3,
) -> (LowPassState, HapticOutput) {
    let f_f = filter(&filter_state.y_prev, f_raw, cfg.alpha_f);
    let f_d = f_f - hand_vel_filtered * cfg.damping_b;
    (
        LowPassState { y_prev: f_f },
        HapticOutput {
            f_hand: f_d * cfg.g_hand,
            f_pre: f_d,
            f_raw: *f_raw,
            warning: f_raw.norm() >= cfg.f_warn,
            trap_lost: false,
        },
    )
}

/// Trap-side reaction felt on `device`: minus the optical force its traps
/// exert on the robot's elements.
pub fn raw_force(
    wrench: &Wrench,
    elements: &[SphereElement],
    trap_devices: &[Device],
    device: Device,
) -> Vec3 {
    elements
        .iter()
        .zip(&wrench.per_element)
        .filter(|(e, _)| e.assigned_trap.and_then(|t| trap_devices.get(t)) == Some(&device))
        .fold(Vec3::zeros(), |acc, (_, f)| acc - f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapLossStatus {
    pub lost: Vec<bool>,
    pub any_lost: bool,
}

/// Latching trap-loss detector: once a trap is lost it stays lost.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrapLossDetector {
    latched: Vec<bool>,
}

impl TrapLossDetector {
    pub fn new(traps: usize) -> Self {
        Self {
            latched: vec![false; traps],
        }
    }

    /// Distance from each trap to the nearest element assigned to it; `None`
    /// for traps that drive no element.
    pub fn trap_distances(
        traps: &[Trap],
        elements: &[SphereElement],
        centers: &[Vec3],
    ) -> Vec<Option<f64>> {
        let mut out = vec![None; traps.len()];
        for (e, c) in elements.iter().zip(centers) {
            if let Some(t) = e.assigned_trap {
                let d = (traps[t].position - c).norm();
                out[t] = Some(out[t].map_or(d, |o: f64| o.min(d)));
            }
        }
        out
    }

    pub fn detect(
        &mut self,
        traps: &[Trap],
        elements: &[SphereElement],
        centers: &[Vec3],
        d_loss: f64,
    ) -> TrapLossStatus {
        if self.latched.len() != traps.len() {
            self.latched.resize(traps.len(), false);
        }
        for (i, d) in Self::trap_distances(traps, elements, centers)
            .into_iter()
            .enumerate()
        {
            if d.is_some_and(|d| d > d_loss) {
                self.latched[i] = true;
            }
        }
        TrapLossStatus {
            any_lost: self.latched.iter().any(|&l| l),
            lost: self.latched.clone(),
        }
    }

    pub fn any_lost(&self) -> bool {
        self.latched.iter().any(|&l| l)
    }
}

/// Per-device pipeline state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeviceChannel {
    /// Latest raw hand velocity (zero-order hold between inputs).
    pub hand_velocity: Vec3,
    pub motion: LowPassState,
    pub force: LowPassState,
    pub output: HapticOutput,
}

/// Both channels plus the trap-loss latch.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleopPipeline {
    pub cfg: TeleopConfig,
    pub channels: [DeviceChannel; 2],
    pub loss: TrapLossDetector,
}

impl TeleopPipeline {
    pub fn new(cfg: TeleopConfig, traps: usize) -> Self {
        Self {
            cfg,
            channels: [DeviceChannel::default(); 2],
            loss: TrapLossDetector::new(traps),
        }
    }

    pub fn set_hand_velocity(&mut self, device: Device, v: Vec3) {
        if is_finite(&v) {
            self.channels[device.index()].hand_velocity = v;
        }
    }

    pub fn channel(&self, device: Device) -> &DeviceChannel {
        &self.channels[device.index()]
    }

    /// Forward path: filters each device's hand velocity and moves its traps.
    pub fn drive_traps(
        &mut self,
        traps: &mut [Trap],
        trap_devices: &[Device],
        dt: f64,
        workspace: &Aabb,
    ) -> Result<()> {
        for ch in &mut self.channels {
            let y = filter(&ch.motion.y_prev, &ch.hand_velocity, self.cfg.alpha_m);
            ch.motion.y_prev = y;
        }
        for (trap, dev) in traps.iter_mut().zip(trap_devices) {
            let v = self.channels[dev.index()].motion.y_prev;
            *trap = update_trap(trap, &v, self.cfg.g_control, dt, workspace)?;
        }
        Ok(())
    }

    /// Feedback path for both devices given this tick's optical wrench.
    pub fn render(
        &mut self,
        wrench: &Wrench,
        elements: &[SphereElement],
        trap_devices: &[Device],
        lost: bool,
    ) {
        for dev in Device::ALL {
            let raw = raw_force(wrench, elements, trap_devices, dev);
            let ch = &mut self.channels[dev.index()];
            let (st, mut out) = render_force(&raw, ch.force, &self.cfg, &ch.motion.y_prev);
            out.trap_lost = lost;
            ch.force = st;
            ch.output = out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::force_model::msdm_wrench;
    use crate::geometry::{vec3, Pose};
    use approx::assert_relative_eq;

    #[test]
    fn step_response_closed_form() {
        let mut st = LowPassState::default();
        let x = vec3(1.0, 0.0, 0.0);
        for k in 1..=200 {
            let (s, y) = lowpass_step(st, &x, 0.05).unwrap();
            st = s;
            assert!(
                (y.x - (1.0 - 0.95f64.powi(k))).abs() <= 4.0 * f64::EPSILON,
                "k={k}"
            );
        }
        let (_, y1) = lowpass_step(LowPassState::default(), &x, 0.05).unwrap();
        assert_eq!(y1.x, 0.05);
    }

    #[test]
    fn pass_through_and_fixed_point() {
        let x = vec3(0.3, -2.0, 7.0);
        let (_, y) = lowpass_step(
            LowPassState {
                y_prev: vec3(9.0, 9.0, 9.0),
            },
            &x,
            1.0,
        )
        .unwrap();
        assert_eq!(y, x);
        let (_, y) = lowpass_step(LowPassState { y_prev: x }, &x, 0.05).unwrap();
        assert_eq!(y, x);
        assert!(lowpass_step(LowPassState::default(), &x, 0.0).is_err());
        assert!(lowpass_step(LowPassState::default(), &x, 1.5).is_err());
    }

    #[test]
    fn trap_update() {
        let ws = Aabb::new(vec3(-5.0, -5.0, -5.0), vec3(5.0, 5.0, 5.0));
        let t = Trap::at(Vec3::zeros()).with_weight(0.7);
        let n = update_trap(&t, &vec3(1.0, 0.0, 0.0), 10.0, 0.001, &ws).unwrap();
        assert_relative_eq!(n.position.x, 0.01, epsilon = 1e-15);
        assert_eq!(n.power_weight, 0.7);
        assert_eq!(
            update_trap(&t, &Vec3::zeros(), 10.0, 0.001, &ws).unwrap(),
            t
        );
        let far = update_trap(&t, &vec3(0.0, 1e6, 0.0), 10.0, 0.001, &ws).unwrap();
        assert_eq!(far.position.y, 5.0);
        assert!(update_trap(&t, &Vec3::zeros(), 10.0, 0.0, &ws).is_err());
    }

    #[test]
    fn steady_rendering() {
        let cfg = TeleopConfig::default();
        let raw = vec3(100.0, 0.0, 0.0);
        let (_, out) = render_force(&raw, LowPassState { y_prev: raw }, &cfg, &Vec3::zeros());
        assert_relative_eq!(out.f_hand, vec3(0.26, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(out.f_hand, raw * cfg.g_hand);
        assert!(out.warning);
    }

    #[test]
    fn pure_damping_opposes_motion() {
        let cfg = TeleopConfig {
            damping_b: 2.0,
            ..Default::default()
        };
        let v = vec3(0.1, -0.2, 0.0);
        let (_, out) = render_force(&Vec3::zeros(), LowPassState::default(), &cfg, &v);
        assert_relative_eq!(out.f_hand, -v * (cfg.g_hand * 2.0), epsilon = 1e-15);
        assert!(!out.warning);
    }

    #[test]
    fn warning_threshold_is_inclusive() {
        let cfg = TeleopConfig::default();
        let at = render_force(
            &vec3(8.0, 0.0, 0.0),
            LowPassState::default(),
            &cfg,
            &Vec3::zeros(),
        )
        .1;
        let below = render_force(
            &vec3(7.999_999, 0.0, 0.0),
            LowPassState::default(),
            &cfg,
            &Vec3::zeros(),
        )
        .1;
        assert!(at.warning);
        assert!(!below.warning);
    }

    #[test]
    fn config_validation() {
        let p = OpticalForceParams::continuous(5.0, 1.0, 2.0, 3.0);
        assert!(TeleopConfig::default().validate(&p).is_ok());
        let bad = TeleopConfig {
            g_hand: 0.01,
            ..Default::default()
        };
        assert!(bad.validate(&p).is_err());
        let ok = TeleopConfig {
            g_hand: 0.01,
            g_hand_override: true,
            ..Default::default()
        };
        assert!(ok.validate(&p).is_ok());
        let bad = TeleopConfig {
            d_loss: Some(0.5),
            ..Default::default()
        };
        assert!(bad.validate(&p).is_err());
        assert_eq!(TeleopConfig::default().loss_distance(&p), 3.0);
    }

    fn p5() -> OpticalForceParams {
        OpticalForceParams::continuous(5.0, 1.0, 2.0, 4.0)
    }

    #[test]
    fn raw_force_cases() {
        let els = [SphereElement::new(Vec3::zeros(), 1.0, Some(0))];
        let devs = [Device::Right];
        let centered =
            msdm_wrench(&p5(), &[Trap::at(Vec3::zeros())], &Pose::default(), &els).unwrap();
        assert_eq!(
            raw_force(&centered, &els, &devs, Device::Right),
            Vec3::zeros()
        );

        // Robot held while the trap leads by 0.4 µm along +x.
        let lead = msdm_wrench(
            &p5(),
            &[Trap::at(vec3(0.4, 0.0, 0.0))],
            &Pose::default(),
            &els,
        )
        .unwrap();
        let f = raw_force(&lead, &els, &devs, Device::Right);
        assert_relative_eq!(f, vec3(-2.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(raw_force(&lead, &els, &devs, Device::Left), Vec3::zeros());

        let els2 = [
            SphereElement::new(vec3(-2.0, 0.0, 0.0), 1.0, Some(0)),
            SphereElement::new(vec3(2.0, 0.0, 0.0), 1.0, Some(1)),
        ];
        let traps = [
            Trap::at(vec3(-2.3, 0.0, 0.0)),
            Trap::at(vec3(2.3, 0.0, 0.0)),
        ];
        let w = msdm_wrench(&p5(), &traps, &Pose::default(), &els2).unwrap();
        let f = raw_force(&w, &els2, &[Device::Left, Device::Left], Device::Left);
        assert_relative_eq!(f.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_latches() {
        let els = [SphereElement::new(Vec3::zeros(), 1.0, Some(0))];
        let traps = [Trap::at(Vec3::zeros())];
        let mut det = TrapLossDetector::new(1);
        assert!(!det.detect(&traps, &els, &[Vec3::zeros()], 2.0).any_lost);
        assert!(
            det.detect(&traps, &els, &[vec3(2.0 + 1e-9, 0.0, 0.0)], 2.0)
                .lost[0]
        );
        assert!(det.detect(&traps, &els, &[Vec3::zeros()], 2.0).any_lost);
    }

    #[test]
    fn doubling_g_hand_doubles_output() {
        let a = TeleopConfig {
            g_hand: 0.0022,
            ..Default::default()
        };
        let b = TeleopConfig {
            g_hand: 0.0044,
            g_hand_override: true,
            ..Default::default()
        };
        let (mut sa, mut sb) = (LowPassState::default(), LowPassState::default());
        for k in 0..50 {
            let raw = vec3((k as f64).sin(), 2.0, -(k as f64) * 0.1);
            let v = vec3(0.01 * k as f64, 0.0, 0.0);
            let (na, oa) = render_force(&raw, sa, &a, &v);
            let (nb, ob) = render_force(&raw, sb, &b, &v);
            sa = na;
            sb = nb;
            assert_eq!(ob.f_hand, oa.f_hand * 2.0);
        }
    }

    #[test]
    fn steady_identity_after_400_ticks() {
        let cfg = TeleopConfig::default();
        let raw = vec3(3.7, -1.2, 0.4);
        let mut st = LowPassState::default();
        for k in 1..=800 {
            let (s, o) = render_force(&raw, st, &cfg, &Vec3::zeros());
            st = s;
            let err = (o.f_pre - raw).norm();
            // Geometric decay of the start-up transient, (1 − α)^k·|f|.
            assert!(err <= 0.95f64.powi(k) * raw.norm() * (1.0 + 1e-9) + 1e-14);
            if k >= 400 && 0.95f64.powi(k) * raw.norm() < 1e-9 {
                assert!((o.f_hand / cfg.g_hand - raw).norm() <= 1e-9);
            }
        }
    }
}
