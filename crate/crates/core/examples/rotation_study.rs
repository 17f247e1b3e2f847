//! Out-of-plane tilt versus trap spacing under equal and unequal trap powers.

use optwin::experiments::rotation::{run_rotation_study, RotationStudyConfig, Strategy};
use optwin::stats::spearman;

fn main() -> optwin::Result<()> {
    for strategy in [Strategy::A, Strategy::B] {
        let cfg = RotationStudyConfig::default_grid(strategy);
        let rows = run_rotation_study(&cfg)?;
        println!("strategy {strategy:?} (weights {:?})", cfg.weights());
        for r in &rows {
            let oracle = cfg
                .geometry
                .predicted_theta_deg(r.d_star)
                .unwrap_or(f64::NAN);
            println!(
                "  d* {:6.3} µm  θ {:6.2}°  line solution {:6.2}°",
                r.d_star, r.theta_deg, oracle
            );
        }
        let d: Vec<f64> = rows.iter().map(|r| r.d_star).collect();
        let th: Vec<f64> = rows.iter().map(|r| r.theta_deg).collect();
        println!(
            "  Spearman ρ = {:.3}",
            spearman(&d, &th).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
