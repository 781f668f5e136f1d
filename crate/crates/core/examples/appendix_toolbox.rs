//! Stochastic exponentials with jumps: negative-power decomposition,
//! negative moments against closed forms, and the constant C(n, delta).

use bsdej_lab::martingale::{
    decompose_negative_power, doleans_exponential, inequality_constant, negative_moment_mc, LevyMartingale,
};
use bsdej_lab::paths::uniform_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = LevyMartingale { sigma: 0.6, atoms: vec![(0.5, 1.0), (-0.4, 2.0)], delta: 0.5 };
    let grid = uniform_grid(1.0, 50);
    let path = spec.sample_path(&grid, 1, 0)?;
    let e = doleans_exponential(&path);
    let d = decompose_negative_power(&path, 2.0)?;
    println!("E(M)_T = {:.4}, A_T = {:.4}, product identity error {:.1e}", e[50], d.a[50], d.max_relative_error(&path));

    for lambda in [0.5, 1.0, 2.0] {
        let r = negative_moment_mc(&spec, lambda, 1.0, 100_000, 7)?;
        println!(
            "lambda {lambda}: E[E(M)^-lambda] = {:.4} ± {:.4}, closed form {:.4}, diverging {}",
            r.estimate.mean,
            r.estimate.se,
            r.closed_form.unwrap_or(f64::NAN),
            r.diverging
        );
    }

    println!("n  delta  C         argmax   n(n+1)/2");
    for n in 1..=3 {
        for delta in [0.25, 0.5] {
            let c = inequality_constant(n, delta)?;
            println!("{n}  {delta:<5}  {:<8.5}  {:<7.3}  {}", c.c, c.argmax, c.taylor);
        }
    }
    Ok(())
}
