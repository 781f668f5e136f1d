//! Simulates a reference jump-diffusion, drives it through a constant and a
//! bifurcated control, and checks the forward identities on the result.

use bsdej_lab::levy::{bifurcate, make_base_measure, Alpha, ControlSpec, JumpMap, Predicate};
use bsdej_lab::paths::{
    apply_control, estimate_qv_density, likelihood_ratio, reconstruct_reference, simulate_reference, uniform_grid,
};
use bsdej_lab::stats::Estimate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = make_base_measure(&[(-0.5, 1.0), (1.0, 0.5)])?;
    let grid = uniform_grid(1.0, 100);
    let reference = simulate_reference(&f, 20_000, &grid, 42)?;

    let calm = ControlSpec::constant(1.0, Alpha::Scalar(0.5), JumpMap::identity());
    let wild = ControlSpec::constant(1.0, Alpha::Scalar(1.5), JumpMap::linear(2.0));
    // Switch to the wild regime after t = 0.5 when the path is above zero.
    let switching = bifurcate(
        &[
            (Predicate::StateAtLeast { at: 0.5, level: 0.0 }, wild.clone()),
            (Predicate::StateBelow { at: 0.5, level: 0.0 }, calm.clone()),
        ],
        0.5,
        &calm,
    )?;

    for (name, c) in [("calm", &calm), ("wild", &wild), ("switching", &switching)] {
        let b = apply_control(&reference, c, &f)?;
        let sq: Vec<f64> = b.terminal_values().iter().map(|x| x * x).collect();
        let lhs = Estimate::from_samples(&sq);
        let rhs = Estimate::from_samples(&b.bracket_compensator()).mean;
        let back = reconstruct_reference(&b, c, &f)?;
        let err = (0..b.n_paths())
            .map(|p| (back.value(p, 100) - reference.value(p, 100)).abs())
            .fold(0.0, f64::max);
        let qv = estimate_qv_density(&b, 20)?;
        println!(
            "{name:>9}: E[B_T^2] = {:.4} ± {:.4} (characteristics {rhs:.4}), round trip {err:.1e}, qv at t=0.9 {:.3}",
            lhs.mean,
            lhs.se,
            qv.mean_at(90).mean
        );
    }

    // Tilt the jump intensities by a likelihood ratio.
    let tilted = f.with_intensities(&[2.0, 1.5])?;
    let lr = likelihood_ratio(&reference, &f, &tilted)?;
    println!("likelihood ratio mean {:?}", Estimate::from_samples(&lr));
    Ok(())
}
