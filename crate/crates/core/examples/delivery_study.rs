//! Paired force-blind and force-aware delivery trials on the bundled scenario.

use optwin::experiments::default_delivery_scenario;
use optwin::experiments::delivery::{default_policies, run_delivery_study};
use optwin::session::sd_reduction;

fn main() -> optwin::Result<()> {
    let sc = default_delivery_scenario();
    let study = run_delivery_study(&sc, &default_policies(), 6, 0)?;
    for row in study.rows() {
        println!(
            "{:<12} seed {:>2} {:<13} {:5.2} s  contact {:.3} ± {:.3} pN",
            row.condition,
            row.seed,
            row.reason,
            row.duration_s,
            row.contact_force_mean,
            row.contact_force_sd
        );
    }
    let blind = study.condition("force_blind").expect("condition present");
    let aware = study.condition("force_aware").expect("condition present");
    println!(
        "contact-force SD reduction {:.1}%, distance SD reduction {:.1}%",
        100.0 * sd_reduction(blind.contact_force_sd, aware.contact_force_sd),
        100.0 * sd_reduction(blind.distance_sd, aware.distance_sd)
    );
    Ok(())
}
