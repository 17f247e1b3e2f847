//! Net force and torque on a two-handle robot from two offset traps.

use optwin::force_model::{msdm_wrench, SphereElement, Trap};
use optwin::session::default_force_params;
use optwin::{Pose, Vec3};

fn main() -> optwin::Result<()> {
    let params = default_force_params();
    let elements = vec![
        SphereElement::new(Vec3::new(-3.0, 0.0, 0.0), 1.0, Some(0)),
        SphereElement::new(Vec3::new(3.0, 0.0, 0.0), 1.0, Some(1)),
        SphereElement::new(Vec3::zeros(), 1.5, None),
    ];
    // Opposite offsets along y twist the robot about z.
    let traps = [
        Trap::at(Vec3::new(-3.0, 0.4, 0.0)),
        Trap::at(Vec3::new(3.0, -0.4, 0.0)),
    ];
    let w = msdm_wrench(&params, &traps, &Pose::default(), &elements)?;
    for (i, f) in w.per_element.iter().enumerate() {
        println!("element {i}: F = [{:.3}, {:.3}, {:.3}] pN", f.x, f.y, f.z);
    }
    println!("net force  {:.3?} pN", w.net_force.as_slice());
    println!("net torque {:.3?} pN·µm", w.net_torque.as_slice());
    Ok(())
}
