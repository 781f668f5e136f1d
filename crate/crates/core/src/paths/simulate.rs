use rayon::prelude::*;

use super::{check_grid, JumpMark, PathBundle, PathError, PathObservation};
use crate::levy::{pushforward, validate_control, ControlSpec, JumpMap, LevyBaseMeasure};
use crate::rng::{path_stream, StreamDomain};

fn step_of(grid: &[f64], t: f64) -> u32 {
    (grid.partition_point(|&s| s < t) - 1) as u32
}

struct PathData {
    cont: Vec<f64>,
    jumps: Vec<JumpMark>,
    qv: Vec<f64>,
    comp: Vec<u32>,
}

fn assemble(
    grid: &[f64],
    data: Vec<PathData>,
    compensators: Vec<LevyBaseMeasure>,
    base: LevyBaseMeasure,
    seed: u64,
    measure_tag: String,
) -> PathBundle {
    let n = grid.len() - 1;
    let n_paths = data.len();
    let mut b = PathBundle {
        grid: grid.to_vec(),
        n_paths,
        values: vec![0.0; n_paths * (n + 1)],
        cont_increments: Vec::with_capacity(n_paths * n),
        jumps: Vec::with_capacity(n_paths),
        qv_density: Vec::with_capacity(n_paths * n),
        compensators,
        compensator_index: Vec::with_capacity(n_paths * n),
        base,
        seed,
        measure_tag,
    };
    for d in data {
        b.cont_increments.extend(d.cont);
        b.qv_density.extend(d.qv);
        b.compensator_index.extend(d.comp);
        b.jumps.push(d.jumps);
    }
    b.values = b.rebuilt_values();
    b
}

/// Reference process under the base measure `f`: a standard Brownian motion
/// plus the compensated compound Poisson process with Lévy measure `f`.
///
/// Jump times are exact (one exponential clock per atom); each path draws
/// from its own stream so the bundle does not depend on the thread count.
pub fn simulate_reference(
    f: &LevyBaseMeasure,
    n_paths: usize,
    grid: &[f64],
    seed: u64,
) -> Result<PathBundle, PathError> {
    check_grid(grid)?;
    if n_paths == 0 {
        return Err(PathError::NoPaths);
    }
    let n = grid.len() - 1;
    let horizon = grid[n];
    let data: Vec<PathData> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_stream(seed, StreamDomain::ReferencePaths, p as u64);
            let mut jumps = Vec::new();
            for (i, a) in f.atoms().iter().enumerate() {
                let mut t = 0.0;
                loop {
                    t += rng.exp1() / a.intensity;
                    if t > horizon {
                        break;
                    }
                    jumps.push(JumpMark { time: t, size: a.location, step: step_of(grid, t), atom: i as u32 });
                }
            }
            jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
            let cont = (0..n).map(|k| rng.normal() * (grid[k + 1] - grid[k]).sqrt()).collect();
            PathData { cont, jumps, qv: vec![1.0; n], comp: vec![0; n] }
        })
        .collect();
    Ok(assemble(grid, data, vec![f.clone()], f.clone(), seed, format!("reference:{}", f.label())))
}

/// Per (cell, branch): `alpha`, `sqrt(alpha)`, jump map, compensator slot.
struct BranchTable {
    rows: Vec<Vec<(f64, f64, JumpMap, u32)>>,
    compensators: Vec<LevyBaseMeasure>,
}

fn branch_table(c: &ControlSpec, f: &LevyBaseMeasure) -> Result<BranchTable, PathError> {
    let mut compensators: Vec<LevyBaseMeasure> = Vec::new();
    let mut rows = Vec::new();
    for cell in c.cells() {
        let mut row = Vec::new();
        for b in &cell.branches {
            let alpha = b.alpha.scalar().ok_or(PathError::UnsupportedDimension)?;
            let image = pushforward(f, &b.beta).map_err(|e| PathError::InvalidControl(e.to_string()))?;
            let slot = match compensators.iter().position(|m| *m == image) {
                Some(s) => s,
                None => {
                    compensators.push(image);
                    compensators.len() - 1
                }
            };
            row.push((alpha, alpha.sqrt(), b.beta.clone(), slot as u32));
        }
        rows.push(row);
    }
    Ok(BranchTable { rows, compensators })
}

fn check_control_grid(c: &ControlSpec, grid: &[f64]) -> Result<(), PathError> {
    let horizon = grid[grid.len() - 1];
    let tol = 1e-12 * horizon.abs().max(1.0);
    if (c.horizon() - horizon).abs() > tol {
        return Err(PathError::InvalidControl(format!("control horizon {} differs from grid horizon {horizon}", c.horizon())));
    }
    for &t in c.breakpoints() {
        if !grid.iter().any(|&s| (s - t).abs() <= tol) {
            return Err(PathError::OffGrid { t });
        }
    }
    Ok(())
}

fn cell_on_step(c: &ControlSpec, grid: &[f64], k: usize) -> usize {
    let tol = 1e-12 * grid[grid.len() - 1].abs().max(1.0);
    c.cell_index(grid[k] + tol)
}

/// Controlled process `X = ∫ α^{1/2} dB^c + ∫∫ β(x) (μ_B − F)(dx, ds)` built
/// path by path from a reference bundle.
///
/// The control reads the reference path, so `qv_density` holds `α` along the
/// path and every jump of size `x` becomes a jump of size `β(x)`.
pub fn apply_control(bundle: &PathBundle, c: &ControlSpec, f: &LevyBaseMeasure) -> Result<PathBundle, PathError> {
    if bundle.base() != f || bundle.compensators.len() != 1 || bundle.compensators[0] != *f {
        return Err(PathError::MeasureMismatch);
    }
    let report = validate_control(c, f);
    if !report.passed() {
        return Err(PathError::InvalidControl(report.failures.join("; ")));
    }
    check_control_grid(c, bundle.grid())?;
    let table = branch_table(c, f)?;
    let grid = bundle.grid();
    let n = bundle.n_steps();
    let data: Result<Vec<PathData>, PathError> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let obs = bundle.observation(p);
            let mut d = PathData { cont: Vec::with_capacity(n), jumps: Vec::new(), qv: Vec::with_capacity(n), comp: Vec::with_capacity(n) };
            for k in 0..n {
                let cell = cell_on_step(c, grid, k);
                let b = c.cells()[cell]
                    .branches
                    .iter()
                    .position(|b| b.when.eval(&obs))
                    .ok_or_else(|| PathError::InvalidControl(format!("no branch holds on path {p} at step {k}")))?;
                let (alpha, sqrt_alpha, beta, slot) = &table.rows[cell][b];
                d.cont.push(sqrt_alpha * bundle.cont_increment(p, k));
                d.qv.push(*alpha);
                d.comp.push(*slot);
                for j in bundle.jumps_in_step(p, k) {
                    let size = beta.apply(j.size).ok_or(PathError::AtomMismatch)?;
                    d.jumps.push(JumpMark { size, ..*j });
                }
            }
            Ok(d)
        })
        .collect();
    Ok(assemble(
        grid,
        data?,
        table.compensators,
        f.clone(),
        bundle.seed(),
        format!("controlled:{}", f.label()),
    ))
}

/// Recovers the reference path from a controlled one by inverting the
/// control step by step: `dW = α^{-1/2} dX^c` and jumps `β^{-1}(ΔX)`.
///
/// The control is evaluated on the reference path reconstructed so far, so
/// branch events are decided exactly as they were in [`apply_control`].
pub fn reconstruct_reference(
    bundle: &PathBundle,
    c: &ControlSpec,
    f: &LevyBaseMeasure,
) -> Result<PathBundle, PathError> {
    if bundle.base() != f {
        return Err(PathError::MeasureMismatch);
    }
    check_control_grid(c, bundle.grid())?;
    let table = branch_table(c, f)?;
    let grid = bundle.grid();
    let n = bundle.n_steps();
    let atoms = f.locations();
    let data: Result<Vec<PathData>, PathError> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut values = vec![0.0; n + 1];
            let mut jumps: Vec<JumpMark> = Vec::new();
            let mut cont = Vec::with_capacity(n);
            let drift = |k: usize| -f.first_moment() * (grid[k + 1] - grid[k]);
            for k in 0..n {
                let cell = cell_on_step(c, grid, k);
                let b = {
                    let obs = PathObservation { grid, values: &values, jumps: &jumps };
                    c.cells()[cell].branches.iter().position(|b| b.when.eval(&obs)).ok_or_else(|| {
                        PathError::InvalidControl(format!("no branch holds on path {p} at step {k}"))
                    })?
                };
                let (_, sqrt_alpha, beta, _) = &table.rows[cell][b];
                cont.push(bundle.cont_increment(p, k) / sqrt_alpha);
                for j in bundle.jumps_in_step(p, k) {
                    let err = || PathError::NonInvertibleCell { path: p, step: k, size: j.size };
                    let x = beta.invert(j.size, &atoms).ok_or_else(err)?;
                    let atom = f.find_atom(x).ok_or_else(err)?;
                    jumps.push(JumpMark { size: f.atoms()[atom].location, atom: atom as u32, ..*j });
                }
                let first = jumps.partition_point(|j| (j.step as usize) < k);
                let mut v = values[k] + cont[k] + drift(k);
                for j in &jumps[first..] {
                    v += j.size;
                }
                values[k + 1] = v;
            }
            Ok(PathData { cont, jumps, qv: vec![1.0; n], comp: vec![0; n] })
        })
        .collect();
    Ok(assemble(grid, data?, vec![f.clone()], f.clone(), bundle.seed(), format!("reference:{}", f.label())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{make_base_measure, Alpha, Predicate};
    use crate::paths::uniform_grid;
    use crate::stats::Estimate;

    fn poisson(lambda: f64) -> LevyBaseMeasure {
        make_base_measure(&[(1.0, lambda)]).unwrap().with_label("poisson")
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let f = poisson(1.0);
        assert_eq!(simulate_reference(&f, 0, &uniform_grid(1.0, 10), 1).unwrap_err(), PathError::NoPaths);
        assert_eq!(simulate_reference(&f, 5, &[0.0], 1).unwrap_err(), PathError::EmptyGrid);
        assert_eq!(simulate_reference(&f, 5, &[0.0, 0.5, 0.5], 1).unwrap_err(), PathError::EmptyGrid);
    }

    #[test]
    fn pure_brownian_is_centered() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 20_000, &uniform_grid(1.0, 20), 11).unwrap();
        assert!(b.mean_at(20).within(0.0, 3.0));
        assert!(b.jumps.iter().all(Vec::is_empty));
    }

    #[test]
    fn poisson_second_moment() {
        // E[B_T] = 0, E[B_T^2] = T + λT for a unit atom
        let (lambda, t) = (2.0, 1.0);
        let b = simulate_reference(&poisson(lambda), 40_000, &uniform_grid(t, 25), 5).unwrap();
        let xt = b.terminal_values();
        assert!(Estimate::from_samples(&xt).within(0.0, 3.0));
        let sq: Vec<f64> = xt.iter().map(|x| x * x).collect();
        let e = Estimate::from_samples(&sq);
        assert!(e.within(t + lambda * t, 3.0), "{e:?}");
    }

    #[test]
    fn identity_control_reproduces_paths_bitwise() {
        let f = poisson(1.5);
        let grid = uniform_grid(1.0, 16);
        let b = simulate_reference(&f, 200, &grid, 3).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(1.0), JumpMap::identity());
        let x = apply_control(&b, &c, &f).unwrap();
        assert_eq!(x.values, b.values);
        assert!(x.bookkeeping_exact());
    }

    #[test]
    fn doubled_jump_map_doubles_every_jump() {
        let f = poisson(3.0);
        let grid = uniform_grid(1.0, 10);
        let b = simulate_reference(&f, 300, &grid, 9).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(1.0), JumpMap::linear(2.0));
        let x = apply_control(&b, &c, &f).unwrap();
        assert!(x.jumps.iter().flatten().count() > 0);
        assert!(x.jumps.iter().flatten().all(|j| j.size == 2.0));
        assert_eq!(x.compensator(0, 0).atoms()[0].location, 2.0);
    }

    #[test]
    fn scaled_brownian_variance() {
        let a = 2.5;
        let grid = uniform_grid(1.0, 10);
        let b = simulate_reference(&LevyBaseMeasure::zero(), 40_000, &grid, 21).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(a), JumpMap::identity());
        let x = apply_control(&b, &c, &LevyBaseMeasure::zero()).unwrap();
        let sq: Vec<f64> = x.terminal_values().iter().map(|v| v * v).collect();
        assert!(Estimate::from_samples(&sq).within(a, 3.0));
    }

    #[test]
    fn round_trip_through_branching_control() {
        let f = make_base_measure(&[(1.0, 2.0), (-0.5, 1.0)]).unwrap();
        let grid = uniform_grid(1.0, 20);
        let b = simulate_reference(&f, 500, &grid, 17).unwrap();
        let base = ControlSpec::constant(1.0, Alpha::Scalar(0.5), JumpMap::linear(1.5));
        let hi = ControlSpec::constant(1.0, Alpha::Scalar(2.0), JumpMap::linear(0.5));
        let c = crate::levy::bifurcate(
            &[
                (Predicate::StateAtLeast { at: 0.5, level: 0.0 }, hi),
                (Predicate::StateBelow { at: 0.5, level: 0.0 }, base.clone()),
            ],
            0.5,
            &base,
        )
        .unwrap();
        let x = apply_control(&b, &c, &f).unwrap();
        let r = reconstruct_reference(&x, &c, &f).unwrap();
        let per_step = 1e-9;
        for p in 0..b.n_paths() {
            for k in 0..=20 {
                assert!((r.value(p, k) - b.value(p, k)).abs() <= per_step * k.max(1) as f64);
            }
        }
        assert!(r.bookkeeping_exact());
    }

    #[test]
    fn tampered_jump_is_not_invertible() {
        let f = poisson(4.0);
        let grid = uniform_grid(1.0, 10);
        let b = simulate_reference(&f, 50, &grid, 2).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(1.0), JumpMap::linear(2.0));
        let mut x = apply_control(&b, &c, &f).unwrap();
        let p = (0..50).find(|&p| !x.jumps[p].is_empty()).unwrap();
        x.jumps[p][0].size = 3.0;
        assert!(matches!(reconstruct_reference(&x, &c, &f), Err(PathError::NonInvertibleCell { .. })));
    }

    #[test]
    fn same_seed_same_bundle() {
        let f = poisson(1.0);
        let grid = uniform_grid(1.0, 8);
        let a = simulate_reference(&f, 64, &grid, 99).unwrap();
        let b = simulate_reference(&f, 64, &grid, 99).unwrap();
        assert_eq!(a, b);
    }
}
