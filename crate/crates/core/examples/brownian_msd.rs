//! Free-sphere mean squared displacement against the diffusion law 6·D·t.

use optwin::dynamics::{Medium, Robot, World, DEFAULT_DT};
use optwin::force_model::{OpticalForceParams, SphereElement};
use optwin::rng::RngState;
use optwin::session::default_force_params;
use optwin::{Pose, Vec3};

fn main() -> optwin::Result<()> {
    let medium = Medium::default();
    let radius = 1.0;
    let d = medium.diffusion(medium.stokes(radius));
    let params: OpticalForceParams = default_force_params();
    let (walkers, steps) = (200, 500);
    let mut rng = RngState::new(7);
    let mut sum = 0.0;
    for _ in 0..walkers {
        // No assigned trap, so only drag and thermal kicks act.
        let robot = Robot::new(
            Pose::default(),
            vec![SphereElement::new(Vec3::zeros(), radius, None)],
        );
        let mut world = World::new(robot, vec![], vec![]);
        for _ in 0..steps {
            world.advance(&[], &params, &medium, DEFAULT_DT, &mut rng)?;
        }
        sum += world.robot.pose.position.norm_squared();
    }
    let t = steps as f64 * DEFAULT_DT;
    let msd = sum / walkers as f64;
    println!("D = {d:.4} µm²/s, t = {t} s");
    println!(
        "MSD = {msd:.4} µm², 6Dt = {:.4} µm², ratio {:.3}",
        6.0 * d * t,
        msd / (6.0 * d * t)
    );
    Ok(())
}
