//! Extracts the non-decreasing processes K under two volatility measures
//! and checks the minimum condition, then estimates the solution norms.

use bsdej_lab::generator::make_glevy_generator;
use bsdej_lab::levy::{Alpha, ControlSpec, JumpMap, LevyBaseMeasure};
use bsdej_lab::paths::{apply_control, simulate_reference, uniform_grid};
use bsdej_lab::pide::{LatticeControl, PideGrid};
use bsdej_lab::solver2::{
    check_minimum_condition, estimate_norms, extract_k, solve_lattice, FieldsOnPaths, MinimumOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (a1, a2) = (0.5, 1.0);
    let controls = [LatticeControl::diffusion(a1), LatticeControl::diffusion(a2)];
    let g = make_glevy_generator(a1, a2, 0.0, 0.0, 1.0)?;
    let mut grid = PideGrid::with_cfl(-8.0, 8.0, 320, 1.0, &controls)?;
    grid.n_t = grid.n_t.div_ceil(20) * 20;
    let sol = solve_lattice(&g, &controls, &|x: f64| x * x, &grid)?;

    let f = LevyBaseMeasure::zero();
    let reference = simulate_reference(&f, 20_000, &uniform_grid(1.0, 20), 5)?;
    let mut ks = Vec::new();
    let mut fields = Vec::new();
    for a in [a1, a2] {
        let c = ControlSpec::constant(1.0, Alpha::Scalar(a), JumpMap::identity());
        let b = apply_control(&reference, &c, &f)?;
        let mut k = extract_k(&sol, &b, &g)?;
        k.measure = format!("a = {a}");
        ks.push(k);
        fields.push(FieldsOnPaths::from_lattice(&sol, &b, &g)?);
    }
    let report = check_minimum_condition(&ks, MinimumOptions::with_scale(sol.y(0, 0.0).unwrap()));
    for m in &report.measures {
        println!("{}: E[K_T] = {:.4} ± {:.4}", m.measure, m.terminal.mean, m.terminal.se);
    }
    println!("minimum condition holds: {}", report.passed());

    let norms = estimate_norms(&fields);
    println!("sup|Y|^2 {:.3}, aZ^2 {:.3}, U^2 nu {:.3}, driver {:.3}", norms.y, norms.z, norms.u, norms.f0);
    Ok(())
}
