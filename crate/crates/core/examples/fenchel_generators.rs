//! Generators as conjugates of a Hamiltonian: the G-Lévy conjugate is zero
//! inside the characteristic box and infinite outside it.

use bsdej_lab::generator::{
    check_jump_monotonicity, check_lipschitz, discount_generator, fenchel_transform, glevy_h, DriverArgs,
    DriverSample, DriverValue, GeneratorRegistry, GeneratorParams,
};
use bsdej_lab::levy::make_base_measure;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
    let h = glevy_h(0.5, 1.0, 1.0, 3.0, 1.0, grid.clone(), grid)?;
    for (a, lam) in [(0.75, 2.0), (1.0, 3.0), (1.5, 2.0), (0.75, 4.0)] {
        let nu = make_base_measure(&[(1.0, lam)])?;
        let args = DriverArgs { t: 0.0, x: 0.0, y: 0.0, z: 0.0, u: &[0.0], a, nu: &nu };
        let v = fenchel_transform(&h, &args)?;
        let shown = match v {
            DriverValue::Finite(x) => format!("{x:.3e}"),
            DriverValue::OutOfDomain => "+inf".into(),
        };
        println!("F(a = {a}, lambda = {lam}) = {shown}");
    }

    let g = discount_generator(0.3);
    let nu = make_base_measure(&[(1.0, 1.0)])?;
    let samples: Vec<DriverSample> = (0..50)
        .map(|i| {
            let s = i as f64 / 10.0 - 2.5;
            DriverSample { t: 0.0, x: 0.0, y: s, z: -s, u: vec![s], a: 1.0, nu: nu.clone() }
        })
        .collect();
    println!("{:?}", check_lipschitz(&g, &samples));
    let pairs: Vec<(DriverSample, Vec<f64>)> = samples.iter().map(|s| (s.clone(), vec![s.u[0] + 1.0])).collect();
    println!("jump monotone: {}", check_jump_monotonicity(&g, &pairs).passed());

    let registry = GeneratorRegistry::default();
    let mut p = GeneratorParams::new();
    p.insert("c".into(), 0.05);
    println!("registry: {:?}, built {}", registry.names().collect::<Vec<_>>(), registry.build("discount", &p)?.name);
    Ok(())
}
