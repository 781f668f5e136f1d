//! Volatility uncertainty on a lattice: the Bellman solution for a convex
//! payoff picks the largest volatility everywhere, and for a butterfly it
//! switches between the bounds depending on the local convexity.

use bsdej_lab::generator::make_glevy_generator;
use bsdej_lab::pide::{LatticeControl, PideGrid};
use bsdej_lab::solver2::solve_lattice;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a1, a2) = (0.25, 1.0);
    let controls: Vec<LatticeControl> = (0..4).map(|i| LatticeControl::diffusion(a1 + (a2 - a1) * i as f64 / 3.0)).collect();
    let g = make_glevy_generator(a1, a2, 0.0, 0.0, 1.0)?;
    let grid = PideGrid::with_cfl(-8.0, 8.0, 400, 1.0, &controls)?;

    let sol = solve_lattice(&g, &controls, &|x: f64| x * x, &grid)?;
    println!("x^2: Y(0,0) = {:.5}, a2*T = {a2}", sol.y(0, 0.0).unwrap());

    let fly = |x: f64| (x + 1.0).max(0.0) - 2.0 * x.max(0.0) + (x - 1.0).max(0.0);
    let sol = solve_lattice(&g, &controls, &fly, &grid)?;
    let k = grid.n_t / 2;
    for x in [-1.5, -0.5, 0.0, 0.5, 1.5] {
        let j = ((x - grid.x_lo) / grid.h()).round() as usize;
        let a = controls[sol.argmax(k, j) as usize].a;
        println!("butterfly at t = 0.5, x = {x:>4}: Y = {:.4}, Z = {:+.4}, chosen a = {a}", sol.y(k, x).unwrap(), sol.z(k, x).unwrap());
    }
    Ok(())
}
