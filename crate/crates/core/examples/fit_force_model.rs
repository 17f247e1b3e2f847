//! Fit the piecewise force model to a sampled Gaussian-beam force curve.

use optwin::force_model::{fit_piecewise, sample_reference_force, BeamProfile};

fn main() -> optwin::Result<()> {
    let prof = BeamProfile::default();
    let r: Vec<f64> = (0..200)
        .map(|i| 4.0 * prof.beam_waist_w * i as f64 / 199.0)
        .collect();
    let samples = sample_reference_force(&prof, &r)?;
    let p = fit_piecewise(&samples)?;
    println!(
        "K = {:.3} pN/µm, δ = {:.3} µm, A = {:.3} pN·µm², C = {:.3} pN, r_max = {:.2} µm",
        p.stiffness_k, p.delta, p.far_a, p.far_c, p.cutoff_r_max
    );
    println!(
        "continuity gap {:.1e} pN, peak {:.3} pN",
        p.continuity_gap(),
        p.peak_magnitude()
    );
    println!("{:>6} {:>10} {:>10}", "r", "beam", "model");
    for r in [0.2, 0.5, 0.8, 1.2, 1.6, 2.4, 3.0] {
        println!("{r:>6.2} {:>10.4} {:>10.4}", prof.force(r), p.magnitude(r));
    }
    Ok(())
}
