//! Hand motion drives a trap away from a pinned bead; the rendered force
//! grows, peaks near the model's maximum and vanishes past the capture range.

use optwin::dynamics::{Medium, Robot, World, DEFAULT_DT};
use optwin::force_model::{SphereElement, Trap};
use optwin::rng::RngState;
use optwin::session::default_force_params;
use optwin::teleop::{Device, TeleopConfig, TeleopPipeline};
use optwin::{Aabb, Pose, Vec3};

fn main() -> optwin::Result<()> {
    let params = default_force_params();
    let cfg = TeleopConfig::default();
    let mut robot = Robot::new(
        Pose::default(),
        vec![SphereElement::new(Vec3::zeros(), 1.5, Some(0))],
    );
    robot.pinned = true;
    let mut world = World::new(robot, vec![], vec![]);
    let mut traps = [Trap::at(Vec3::zeros())];
    let devices = [Device::Right];
    let mut pipe = TeleopPipeline::new(cfg, 1);
    let ws = Aabb::new(Vec3::repeat(-50.0), Vec3::repeat(50.0));
    let medium = Medium::default().with_temperature(0.0);
    let mut rng = RngState::new(0);
    // 1 µm/s of trap motion along +x.
    pipe.set_hand_velocity(Device::Right, Vec3::x() / cfg.g_control);
    println!(
        "{:>6} {:>8} {:>9} {:>9} {:>10}",
        "t", "trap_x", "f_raw", "f_pre", "f_hand"
    );
    for k in 1..=4000 {
        pipe.drive_traps(&mut traps, &devices, DEFAULT_DT, &ws)?;
        let info = world.advance(&traps, &params, &medium, DEFAULT_DT, &mut rng)?;
        pipe.render(&info.optical, &world.robot.elements, &devices, false);
        if k % 250 == 0 {
            let o = pipe.channel(Device::Right).output;
            println!(
                "{:>6.2} {:>8.3} {:>9.3} {:>9.3} {:>10.5}",
                k as f64 * DEFAULT_DT,
                traps[0].position.x,
                o.f_raw.x,
                o.f_pre.x,
                o.f_hand.x
            );
        }
    }
    Ok(())
}
