//! Rendered force against the model along axial and radial sweeps.

use optwin::experiments::consistency::{run_consistency_study, ConsistencyConfig, SweepMode};
use optwin::session::default_force_params;

fn main() -> optwin::Result<()> {
    let params = default_force_params();
    for mode in [SweepMode::Settled, SweepMode::Continuous] {
        let r = run_consistency_study(&params, &ConsistencyConfig::new(mode))?;
        println!("{mode:?}");
        for (axis, m) in [("axial", r.axial), ("radial", r.radial)] {
            println!(
                "  {axis:<6} R² {:.6}  RMSE {:.2e} pN  max |err| {:.2e} pN",
                m.r2, m.rmse, m.max_abs
            );
        }
    }
    Ok(())
}
