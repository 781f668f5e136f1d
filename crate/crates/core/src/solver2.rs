//! Second-order solution as a supremum of classical solutions.
//!
//! On the lattice the supremum over measures is taken node by node
//! ([`solve_lattice`]), which realizes the best feedback control. In Monte
//! Carlo it is taken over a finite family of separable controls
//! ([`sup_over_controls`]) and is a lower bound. The non-decreasing process
//! `K^P` of a measure is recovered as the residual
//!
//! ```text
//! K_t = Y_0 − Y_t − ∫ F̂ ds + ∫ Z dB^c + ∫∫ U dμ̃
//! ```
//!
//! along paths of that measure ([`extract_k`]).

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::bsdej::{solve_regression, BsdejError, BsdejSolution, PathPayoff, RegressionOptions};
use crate::generator::{DriverArgs, GeneratorSpec};
use crate::levy::{validate_control, ControlSpec, LevyBaseMeasure};
use crate::paths::{apply_control, simulate_reference, PathBundle, PathError};
use crate::pide::{solve_fullynonlinear, LatticeControl, PideError, PideGrid, ValueFunction};
use crate::stats::{pairwise_sum, Estimate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Solver2Error {
    #[error("control set is empty")]
    EmptyControlGrid,
    #[error("control {index} is invalid: {message}")]
    InvalidControl { index: usize, message: String },
    #[error("bundle grid is not a subgrid of the lattice time grid")]
    GridMismatch,
    #[error("measure at path {path}, step {step} is outside the generator domain")]
    ControlOutsideDomain { path: usize, step: usize },
    #[error("every path left the space grid")]
    AllPathsOutOfGrid,
    #[error(transparent)]
    Lattice(#[from] PideError),
    #[error(transparent)]
    Regression(#[from] BsdejError),
    #[error(transparent)]
    Paths(#[from] PathError),
}

/// Lattice value function of the second-order equation with its feedback
/// control and the `Z`, `U` fields read off by finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution2 {
    pub controls: Vec<LatticeControl>,
    pub value: ValueFunction,
    argmax: Vec<u32>,
}

impl Solution2 {
    pub fn grid(&self) -> &PideGrid {
        &self.value.grid
    }

    pub fn y(&self, k: usize, x: f64) -> Option<f64> {
        self.value.interp(k, x)
    }

    /// Index of the control maximizing the update at `(t_k, x_j)`.
    pub fn argmax(&self, k: usize, j: usize) -> u32 {
        self.argmax[k * (self.grid().n_x + 1) + j]
    }

    /// `Z = ∂_x Y` at time index `k`: central differences on the nodes,
    /// one-sided at the two ends, interpolated linearly in between.
    pub fn z(&self, k: usize, x: f64) -> Option<f64> {
        let g = self.grid();
        if !(x >= g.x_lo && x <= g.x_hi) {
            return None;
        }
        let h = g.h();
        let r = self.value.row(k);
        let m = g.n_x;
        let d = |j: usize| {
            if j == 0 {
                (r[1] - r[0]) / h
            } else if j == m {
                (r[m] - r[m - 1]) / h
            } else {
                (r[j + 1] - r[j - 1]) / (2.0 * h)
            }
        };
        let s = (x - g.x_lo) / h;
        let i = (s.floor() as usize).min(m - 1);
        let w = s - i as f64;
        Some(if w == 0.0 { d(i) } else { (1.0 - w) * d(i) + w * d(i + 1) })
    }

    /// `U(x; size) = Y(x + size) − Y(x)` at time index `k`.
    pub fn u(&self, k: usize, x: f64, size: f64) -> Option<f64> {
        Some(self.y(k, x + size)? - self.y(k, x)?)
    }
}

/// Bellman lattice over the constant controls `(a, ν)`; ties go to the
/// lowest control index. A single control gives the classical lattice
/// solution bit for bit.
pub fn solve_lattice(
    g: &GeneratorSpec,
    controls: &[LatticeControl],
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<Solution2, Solver2Error> {
    if controls.is_empty() {
        return Err(Solver2Error::EmptyControlGrid);
    }
    let s = solve_fullynonlinear(controls, g, terminal, grid)?;
    let w = grid.n_x + 1;
    let argmax = (0..grid.n_t * w).map(|i| s.argmax(i / w, i % w)).collect();
    Ok(Solution2 { controls: controls.to_vec(), value: s.value, argmax })
}

/// Result of a Monte Carlo supremum over a control family.
#[derive(Debug, Clone, PartialEq)]
pub struct SupResult {
    /// `Y_0` under each control, in family order.
    pub values: Vec<Estimate>,
    pub best: usize,
    pub best_control: ControlSpec,
}

impl SupResult {
    pub fn value(&self) -> Estimate {
        self.values[self.best]
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("control,y0,se\n");
        for (i, e) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{}", e.mean, e.se);
        }
        out
    }
}

/// Monte Carlo settings shared by every measure of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct McSetup {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub regression: RegressionOptions,
}

/// Regression `Y_0` under every control of `family`, all driven by one
/// reference bundle; the largest estimate (lowest index on ties) is a
/// statistical lower bound for the second-order `Y_0`.
pub fn sup_over_controls(
    family: &[ControlSpec],
    f: &LevyBaseMeasure,
    g: &GeneratorSpec,
    payoff: PathPayoff,
    setup: &McSetup,
) -> Result<SupResult, Solver2Error> {
    if family.is_empty() {
        return Err(Solver2Error::EmptyControlGrid);
    }
    for (index, c) in family.iter().enumerate() {
        let r = validate_control(c, f);
        if !r.passed() {
            return Err(Solver2Error::InvalidControl { index, message: r.failures.join("; ") });
        }
    }
    let reference = simulate_reference(f, setup.n_paths, &setup.grid, setup.seed)?;
    let mut values = Vec::with_capacity(family.len());
    for (index, c) in family.iter().enumerate() {
        let bundle = apply_control(&reference, c, f)
            .map_err(|e| Solver2Error::InvalidControl { index, message: e.to_string() })?;
        values.push(solve_regression(&bundle, g, payoff, &setup.regression)?.y0());
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.mean > values[best].mean {
            best = i;
        }
    }
    Ok(SupResult { best_control: family[best].clone(), values, best })
}

/// `K^P` along the paths of one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct KPaths {
    pub measure: String,
    pub grid: Vec<f64>,
    /// Indices of the paths that stayed on the space grid.
    pub included: Vec<usize>,
    /// Total number of paths in the bundle.
    pub n_total: usize,
    /// Row per included path, `N + 1` values starting at 0.
    k: Vec<f64>,
}

impl KPaths {
    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.grid.len();
        &self.k[i * w..(i + 1) * w]
    }

    pub fn excluded_fraction(&self) -> f64 {
        1.0 - self.included.len() as f64 / self.n_total as f64
    }

    pub fn terminal(&self) -> Estimate {
        let n = self.n_steps();
        let xs: Vec<f64> = (0..self.included.len()).map(|i| self.path(i)[n]).collect();
        Estimate::from_samples(&xs)
    }

    /// Mean increment `E[K_{t_{k+1}} − K_{t_k}]` per step.
    pub fn mean_increments(&self) -> Vec<Estimate> {
        (0..self.n_steps())
            .map(|k| {
                let xs: Vec<f64> = (0..self.included.len()).map(|i| self.path(i)[k + 1] - self.path(i)[k]).collect();
                Estimate::from_samples(&xs)
            })
            .collect()
    }
}

fn lattice_index(sol: &Solution2, t: f64) -> Option<usize> {
    let g = sol.grid();
    let s = t / g.dt();
    let k = s.round();
    ((s - k).abs() <= 1e-9 * s.max(1.0)).then_some(k as usize)
}

/// Accumulates `ΔK = Y_k − Y_{k+1} − F̂ Δt + Z ΔB^c + Σ_j U_j (ΔN_j − λ_j Δt)`
/// along each path, with `Z`, `U` and the driver's `y` read from the
/// lattice row of `t_{k+1}` at the state `B_{t_k}`, matching the explicit
/// lattice step. Paths that leave the space grid are excluded.
pub fn extract_k(sol: &Solution2, bundle: &PathBundle, g: &GeneratorSpec) -> Result<KPaths, Solver2Error> {
    let grid = bundle.grid();
    if (grid[grid.len() - 1] - sol.grid().horizon).abs() > 1e-12 * sol.grid().horizon {
        return Err(Solver2Error::GridMismatch);
    }
    let rows: Vec<usize> = grid.iter().map(|&t| lattice_index(sol, t)).collect::<Option<_>>().ok_or(Solver2Error::GridMismatch)?;
    let n = bundle.n_steps();
    let per_path: Vec<Result<Option<Vec<f64>>, Solver2Error>> = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut k_path = vec![0.0; n + 1];
            let mut u = Vec::new();
            for k in 0..n {
                let (x, x1) = (bundle.value(p, k), bundle.value(p, k + 1));
                let (r0, r1) = (rows[k], rows[k + 1]);
                let (Some(y0), Some(y1), Some(y_next), Some(z)) =
                    (sol.y(r0, x), sol.y(r1, x1), sol.y(r1, x), sol.z(r1, x))
                else {
                    return Ok(None);
                };
                let nu = bundle.compensator(p, k);
                let dt = bundle.dt(k);
                u.clear();
                for atom in nu.atoms() {
                    match sol.u(r1, x, atom.location) {
                        Some(v) => u.push(v),
                        None => return Ok(None),
                    }
                }
                let a = bundle.qv_density(p, k);
                let args = DriverArgs { t: grid[k], x, y: y_next, z, u: &u, a, nu };
                let f = g.eval(&args).finite().ok_or(Solver2Error::ControlOutsideDomain { path: p, step: k })?;
                let counts = bundle.jump_counts(p, k);
                let mut mart = z * bundle.cont_increment(p, k);
                for (j, atom) in nu.atoms().iter().enumerate() {
                    mart += u[j] * (counts[j] as f64 - atom.intensity * dt);
                }
                k_path[k + 1] = k_path[k] + (y0 - y1 - f * dt + mart);
            }
            Ok(Some(k_path))
        })
        .collect();
    let mut out = KPaths {
        measure: bundle.measure_tag().to_string(),
        grid: grid.to_vec(),
        included: Vec::new(),
        n_total: bundle.n_paths(),
        k: Vec::new(),
    };
    for (p, r) in per_path.into_iter().enumerate() {
        if let Some(row) = r? {
            out.included.push(p);
            out.k.extend(row);
        }
    }
    if out.included.is_empty() {
        return Err(Solver2Error::AllPathsOutOfGrid);
    }
    Ok(out)
}

/// Tolerances of the minimum-condition check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimumOptions {
    /// `max(1, |Y(0, x0)|)`.
    pub scale: f64,
    /// Allowed `min E[K_T]`, relative to `scale`.
    pub tol_terminal: f64,
    /// Allowed negative mean increment per step beyond `3·SE`, relative to `scale`.
    pub tol_step: f64,
    /// Allowed fraction of steps with a negative mean increment.
    pub violation_bound: f64,
}

impl MinimumOptions {
    pub fn with_scale(scale: f64) -> Self {
        MinimumOptions { scale: scale.abs().max(1.0), tol_terminal: 5e-2, tol_step: 1e-3, violation_bound: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSummary {
    pub measure: String,
    pub terminal: Estimate,
    pub violation_fraction: f64,
    pub excluded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimumReport {
    pub measures: Vec<KSummary>,
    /// Index of the measure with the smallest `E[K_T]`.
    pub argmin: usize,
    pub options: MinimumOptions,
}

impl MinimumReport {
    pub fn min_terminal(&self) -> Estimate {
        self.measures[self.argmin].terminal
    }

    pub fn passed(&self) -> bool {
        self.min_terminal().mean <= self.options.tol_terminal * self.options.scale
            && self.measures.iter().all(|m| m.violation_fraction <= self.options.violation_bound)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("measure,e_kt,se,violation_fraction,excluded_fraction\n");
        for m in &self.measures {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m.measure, m.terminal.mean, m.terminal.se, m.violation_fraction, m.excluded_fraction
            );
        }
        out
    }
}

/// `min_P E[K^P_T]` over the measures, and per measure the fraction of steps
/// whose mean increment falls below `−(3·SE + tol_step·scale)`.
pub fn check_minimum_condition(ks: &[KPaths], opts: MinimumOptions) -> MinimumReport {
    let measures: Vec<KSummary> = ks
        .iter()
        .map(|k| {
            let inc = k.mean_increments();
            let bad = inc.iter().filter(|e| e.mean < -(3.0 * e.se + opts.tol_step * opts.scale)).count();
            KSummary {
                measure: k.measure.clone(),
                terminal: k.terminal(),
                violation_fraction: bad as f64 / inc.len().max(1) as f64,
                excluded_fraction: k.excluded_fraction(),
            }
        })
        .collect();
    let mut argmin = 0;
    for (i, m) in measures.iter().enumerate() {
        if m.terminal.mean < measures[argmin].terminal.mean {
            argmin = i;
        }
    }
    MinimumReport { measures, argmin, options: opts }
}

/// `(Y, Z, U)` together with the measure's characteristics, sampled on the
/// paths of one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldsOnPaths {
    pub dt: Vec<f64>,
    pub n_paths: usize,
    pub n_atoms: usize,
    /// `n_paths × (N + 1)`.
    pub y: Vec<f64>,
    /// `n_paths × N`.
    pub z: Vec<f64>,
    /// `n_paths × N × n_atoms`.
    pub u: Vec<f64>,
    /// `n_paths × N`: `â`.
    pub a: Vec<f64>,
    /// `n_paths × N × n_atoms`: intensities of the compensator.
    pub intensities: Vec<f64>,
    /// `n_paths × N`: `F̂^{P,0}`.
    pub f0: Vec<f64>,
}

fn driver_at_zero(bundle: &PathBundle, g: &GeneratorSpec, p: usize, k: usize) -> Result<f64, Solver2Error> {
    let nu = bundle.compensator(p, k);
    g.at_zero(bundle.grid()[k], bundle.value(p, k), bundle.qv_density(p, k), nu)
        .finite()
        .ok_or(Solver2Error::ControlOutsideDomain { path: p, step: k })
}

fn characteristics(bundle: &PathBundle, g: &GeneratorSpec) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), Solver2Error> {
    let (n, steps) = (bundle.n_paths(), bundle.n_steps());
    let mut a = Vec::with_capacity(n * steps);
    let mut lam = Vec::new();
    let mut f0 = Vec::with_capacity(n * steps);
    for p in 0..n {
        for k in 0..steps {
            a.push(bundle.qv_density(p, k));
            lam.extend(bundle.compensator(p, k).intensities());
            f0.push(driver_at_zero(bundle, g, p, k)?);
        }
    }
    Ok((a, lam, f0))
}

impl FieldsOnPaths {
    /// Regression solution on the bundle it was computed from.
    pub fn from_regression(sol: &BsdejSolution, bundle: &PathBundle, g: &GeneratorSpec) -> Result<Self, Solver2Error> {
        let (n, steps) = (bundle.n_paths(), bundle.n_steps());
        if sol.grid != bundle.grid() || sol.n_paths != n {
            return Err(Solver2Error::GridMismatch);
        }
        let (a, intensities, f0) = characteristics(bundle, g)?;
        let mut f = FieldsOnPaths {
            dt: (0..steps).map(|k| bundle.dt(k)).collect(),
            n_paths: n,
            n_atoms: sol.n_atoms,
            y: Vec::with_capacity(n * (steps + 1)),
            z: Vec::with_capacity(n * steps),
            u: Vec::with_capacity(n * steps * sol.n_atoms),
            a,
            intensities,
            f0,
        };
        for p in 0..n {
            f.y.extend_from_slice(sol.y_path(p));
            for k in 0..steps {
                f.z.push(sol.z(p, k));
                f.u.extend_from_slice(sol.u_row(p, k));
            }
        }
        Ok(f)
    }

    /// Lattice fields read along the bundle paths; paths leaving the space
    /// grid are dropped.
    pub fn from_lattice(sol: &Solution2, bundle: &PathBundle, g: &GeneratorSpec) -> Result<Self, Solver2Error> {
        let grid = bundle.grid();
        let rows: Vec<usize> = grid.iter().map(|&t| lattice_index(sol, t)).collect::<Option<_>>().ok_or(Solver2Error::GridMismatch)?;
        let steps = bundle.n_steps();
        let n_atoms = bundle.base().len();
        let mut f = FieldsOnPaths {
            dt: (0..steps).map(|k| bundle.dt(k)).collect(),
            n_paths: 0,
            n_atoms,
            y: vec![],
            z: vec![],
            u: vec![],
            a: vec![],
            intensities: vec![],
            f0: vec![],
        };
        'paths: for p in 0..bundle.n_paths() {
            let mut y = Vec::with_capacity(steps + 1);
            let mut z = Vec::with_capacity(steps);
            let mut u = Vec::with_capacity(steps * n_atoms);
            for k in 0..=steps {
                let Some(v) = sol.y(rows[k], bundle.value(p, k)) else { continue 'paths };
                y.push(v);
                if k == steps {
                    break;
                }
                let x = bundle.value(p, k);
                let Some(zk) = sol.z(rows[k + 1], x) else { continue 'paths };
                z.push(zk);
                for atom in bundle.compensator(p, k).atoms() {
                    let Some(v) = sol.u(rows[k + 1], x, atom.location) else { continue 'paths };
                    u.push(v);
                }
            }
            f.n_paths += 1;
            f.y.extend(y);
            f.z.extend(z);
            f.u.extend(u);
            for k in 0..steps {
                f.a.push(bundle.qv_density(p, k));
                f.intensities.extend(bundle.compensator(p, k).intensities());
                f.f0.push(driver_at_zero(bundle, g, p, k)?);
            }
        }
        if f.n_paths == 0 {
            return Err(Solver2Error::AllPathsOutOfGrid);
        }
        Ok(f)
    }
}

/// Monte Carlo estimates of the four squared norms under one measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    /// `E[sup_t |Y_t|²]`.
    pub y: Estimate,
    /// `E[∫ |â^{1/2} Z|² dt]`.
    pub z: Estimate,
    /// `E[∫∫ |U|² ν dt]`.
    pub u: Estimate,
    /// `E[(∫ |F̂^{P,0}| dt)²]`.
    pub f0: Estimate,
}

/// Grid maximum over measures of each squared norm. The nested essential
/// supremum of the driver norm is replaced by its value at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub per_measure: Vec<NormEstimate>,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub f0: f64,
}

pub fn estimate_norms(measures: &[FieldsOnPaths]) -> NormReport {
    let per_measure: Vec<NormEstimate> = measures
        .iter()
        .map(|f| {
            let steps = f.dt.len();
            let (mut ys, mut zs, mut us, mut fs) = (vec![], vec![], vec![], vec![]);
            for p in 0..f.n_paths {
                let row = &f.y[p * (steps + 1)..(p + 1) * (steps + 1)];
                let sup = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                ys.push(sup * sup);
                let mut zi = Vec::with_capacity(steps);
                let mut ui = Vec::with_capacity(steps * f.n_atoms);
                let mut fi = Vec::with_capacity(steps);
                for k in 0..steps {
                    let i = p * steps + k;
                    zi.push(f.a[i] * f.z[i] * f.z[i] * f.dt[k]);
                    for j in 0..f.n_atoms {
                        let ij = i * f.n_atoms + j;
                        ui.push(f.u[ij] * f.u[ij] * f.intensities[ij] * f.dt[k]);
                    }
                    fi.push(f.f0[i].abs() * f.dt[k]);
                }
                zs.push(pairwise_sum(&zi));
                us.push(pairwise_sum(&ui));
                let fsum = pairwise_sum(&fi);
                fs.push(fsum * fsum);
            }
            NormEstimate {
                y: Estimate::from_samples(&ys),
                z: Estimate::from_samples(&zs),
                u: Estimate::from_samples(&us),
                f0: Estimate::from_samples(&fs),
            }
        })
        .collect();
    let max = |sel: fn(&NormEstimate) -> f64| per_measure.iter().map(sel).fold(0.0, f64::max);
    NormReport {
        y: max(|n| n.y.mean),
        z: max(|n| n.z.mean),
        u: max(|n| n.u.mean),
        f0: max(|n| n.f0.mean),
        per_measure,
    }
}
