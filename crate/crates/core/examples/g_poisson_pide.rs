//! Jump-intensity uncertainty: explicit monotone PIDE for every constant
//! intensity and for the Bellman equation over the intensity interval, with
//! the gap between the two.

use bsdej_lab::generator::make_glevy_generator;
use bsdej_lab::levy::make_base_measure;
use bsdej_lab::pide::{compare_representation, LatticeControl, PideGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (lam1, lam2) = (0.5, 2.0);
    let controls = [lam1, 1.0, lam2]
        .iter()
        .map(|&l| Ok(LatticeControl::new(0.25, make_base_measure(&[(1.0, l)])?)))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let g = make_glevy_generator(0.25, 0.25, lam1, lam2, 1.0)?;
    let grid = PideGrid::with_cfl(-6.0, 6.0, 240, 1.0, &controls)?;
    let fly = |x: f64| (x + 1.0).max(0.0) - 2.0 * x.max(0.0) + (x - 1.0).max(0.0);

    let table = compare_representation(&controls, &g, &fly, &grid)?;
    println!("gap between Bellman and best constant intensity: [{:.2e}, {:.4}]", table.min_gap(), table.max_gap());
    for j in (0..table.x.len()).step_by(30) {
        println!(
            "x = {:>5.2}: Bellman {:.4}, best constant {:.4} (lambda = {})",
            table.x[j],
            table.nonlinear[j],
            table.best_constant[j],
            [lam1, 1.0, lam2][table.best_index[j]]
        );
    }
    Ok(())
}
