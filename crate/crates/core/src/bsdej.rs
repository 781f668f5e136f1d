//! Classical BSDE with jumps under one measure
//!
//! ```text
//! Y_t = ξ + ∫_t^T F̂(Y, Z, U) ds − ∫_t^T Z dB^c − ∫_t^T ∫ U(x) μ̃(dx, ds)
//! ```
//!
//! solved by least-squares regression on a [`PathBundle`], and by the
//! explicit lattice of [`crate::pide`] in the Markovian case.
//!
//! The regression scheme is explicit: on step `k` it estimates `Z_k` and
//! `U_k` from the covariation of `Y_{k+1}` with the increments, evaluates the
//! driver at `(Y_{k+1}, Z_k, U_k)` and projects
//! `Y_{k+1} + F̂ Δt − Z_k ΔB^c − Σ_j U_{k,j} (ΔN_j − λ_j Δt)` on polynomials
//! of `B_{t_k}`. The martingale terms have zero conditional mean, so they
//! change the projection only through variance reduction, and the residual is
//! orthogonal to the basis by construction.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::generator::{DriverArgs, GeneratorSpec};
use crate::levy::LevyBaseMeasure;
use crate::paths::PathBundle;
use crate::pide::{self, PideError, PideGrid, ValueFunction};
use crate::stats::{pairwise_sum, Estimate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BsdejError {
    #[error("regression at step {step} is singular ({paths} paths for {basis} basis functions)")]
    SingularRegression { step: usize, paths: usize, basis: usize },
    #[error("measure at path {path}, step {step} is outside the generator domain")]
    ControlOutsideDomain { path: usize, step: usize },
    #[error("solutions live on different grids or bundles")]
    GridMismatch,
    #[error(transparent)]
    Lattice(#[from] PideError),
}

/// Terminal condition as a function of the grid path.
pub type PathPayoff<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    /// Highest power of the standardized state in the basis.
    pub degree: usize,
    /// Added to the diagonal of the normalized normal equations.
    pub ridge: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions { degree: 4, ridge: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub basis_size: usize,
    /// Condition number of the normalized normal matrix.
    pub condition: f64,
    /// Largest `|<φ_m, Y_k − target>| / n`, relative to the target scale.
    pub residual_projection: f64,
    /// Standard deviation of the `Y` regression residual.
    pub residual_sd: f64,
}

impl StepDiagnostics {
    /// Standard error of a fitted value: `sd · sqrt(basis / n)`.
    pub fn fit_se(&self, n_paths: usize) -> f64 {
        self.residual_sd * (self.basis_size as f64 / n_paths as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsdejSolution {
    pub grid: Vec<f64>,
    pub n_paths: usize,
    pub n_atoms: usize,
    pub measure_tag: String,
    pub seed: u64,
    y: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    /// `ξ + Σ F̂ Δt − Σ Z ΔB^c − Σ U (ΔN − λΔt)` per path; its mean is `Y_0`.
    pathwise: Vec<f64>,
    /// Per step `0..N`.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Fraction of (path, step) cells with two or more jumps of one atom.
    pub multi_jump_fraction: f64,
}

impl BsdejSolution {
    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn y(&self, p: usize, k: usize) -> f64 {
        self.y[p * self.grid.len() + k]
    }

    pub fn y_path(&self, p: usize) -> &[f64] {
        let w = self.grid.len();
        &self.y[p * w..(p + 1) * w]
    }

    pub fn z(&self, p: usize, k: usize) -> f64 {
        self.z[p * self.n_steps() + k]
    }

    /// `U_k` at source atom `j`.
    pub fn u(&self, p: usize, k: usize, j: usize) -> f64 {
        self.u[(p * self.n_steps() + k) * self.n_atoms + j]
    }

    pub fn u_row(&self, p: usize, k: usize) -> &[f64] {
        let i = (p * self.n_steps() + k) * self.n_atoms;
        &self.u[i..i + self.n_atoms]
    }

    pub fn y_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.y(p, k)).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.y_at(self.n_steps())
    }

    /// `Y_0` with the standard error of the pathwise estimator.
    pub fn y0(&self) -> Estimate {
        let e = Estimate::from_samples(&self.pathwise);
        Estimate { mean: self.y(0, 0), ..e }
    }

    pub fn mean_y_at(&self, k: usize) -> Estimate {
        Estimate::from_samples(&self.y_at(k))
    }

    /// CSV with columns `t,Y_mean,Y_se,Z_mean,U_mean_0,…`; the last row has
    /// no `Z`/`U` (empty fields).
    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("t,Y_mean,Y_se,Z_mean");
        for j in 0..self.n_atoms {
            let _ = write!(out, ",U_mean_{j}");
        }
        out.push('\n');
        for k in 0..=self.n_steps() {
            let e = if k == 0 { self.y0() } else { self.mean_y_at(k) };
            let _ = write!(out, "{},{},{}", self.grid[k], e.mean, e.se);
            if k < self.n_steps() {
                let z: Vec<f64> = (0..self.n_paths).map(|p| self.z(p, k)).collect();
                let _ = write!(out, ",{}", crate::stats::mean(&z));
                for j in 0..self.n_atoms {
                    let u: Vec<f64> = (0..self.n_paths).map(|p| self.u(p, k, j)).collect();
                    let _ = write!(out, ",{}", crate::stats::mean(&u));
                }
            } else {
                out.push_str(&",".repeat(1 + self.n_atoms));
            }
            out.push('\n');
        }
        out
    }
}

const CHUNK: usize = 2048;

/// Monomials of the standardized state up to `degree`.
struct Basis {
    mean: f64,
    sd: f64,
    degree: usize,
}

impl Basis {
    fn new(states: &[f64], degree: usize) -> Self {
        let m = Estimate::from_samples(states);
        let sd = m.variance().sqrt();
        let degree = if sd > 1e-12 * m.mean.abs().max(1.0) { degree } else { 0 };
        Basis { mean: m.mean, sd, degree }
    }

    fn size(&self) -> usize {
        self.degree + 1
    }

    fn matrix(&self, states: &[f64], rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.size(), |r, j| {
            let x = if self.degree == 0 { 0.0 } else { (states[rows[r]] - self.mean) / self.sd };
            x.powi(j as i32)
        })
    }
}

/// Least-squares projector on the rows of one basis matrix.
struct Projector {
    basis: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl Projector {
    fn new(basis: DMatrix<f64>, ridge: f64, step: usize) -> Result<Self, BsdejError> {
        let (n, size) = basis.shape();
        let singular = BsdejError::SingularRegression { step, paths: n, basis: size };
        if n <= size {
            return Err(singular);
        }
        let mut gram = chunked(n, |lo, hi| {
            let rows = basis.rows(lo, hi - lo);
            rows.transpose() * rows
        })
        .unwrap_or_else(|| DMatrix::zeros(size, size));
        gram /= n as f64;
        for i in 0..size {
            gram[(i, i)] += ridge;
        }
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
        let chol = gram.cholesky().ok_or(singular)?;
        Ok(Projector { basis, chol, condition: hi / lo })
    }

    fn size(&self) -> usize {
        self.basis.ncols()
    }

    /// Normalized moments `Φᵀ y / n`.
    fn moments(&self, y: &[f64]) -> DVector<f64> {
        let n = y.len();
        let v = DVector::from_column_slice(y);
        let s = chunked(n, |lo, hi| self.basis.rows(lo, hi - lo).transpose() * v.rows(lo, hi - lo))
            .unwrap_or_else(|| DVector::zeros(self.size()));
        s / n as f64
    }

    fn coefficients(&self, y: &[f64]) -> DVector<f64> {
        self.chol.solve(&self.moments(y))
    }

    fn fit(&self, y: &[f64]) -> Vec<f64> {
        (&self.basis * self.coefficients(y)).as_slice().to_vec()
    }
}

/// Two-fold cross-fitting: coefficients estimated on even paths are applied
/// to odd paths and vice versa, so a path's martingale correction never
/// uses its own increments.
struct CrossFit {
    folds: [Vec<usize>; 2],
    projectors: [Projector; 2],
}

impl CrossFit {
    fn new(basis: &Basis, states: &[f64], ridge: f64, step: usize) -> Result<Self, BsdejError> {
        let even: Vec<usize> = (0..states.len()).step_by(2).collect();
        let odd: Vec<usize> = (1..states.len()).step_by(2).collect();
        let pe = Projector::new(basis.matrix(states, &even), ridge, step)?;
        let po = Projector::new(basis.matrix(states, &odd), ridge, step)?;
        Ok(CrossFit { folds: [even, odd], projectors: [pe, po] })
    }

    fn fit(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        for f in 0..2 {
            let own: Vec<f64> = self.folds[f].iter().map(|&p| y[p]).collect();
            let c = self.projectors[f].coefficients(&own);
            let other = &self.projectors[1 - f];
            for (r, &p) in self.folds[1 - f].iter().enumerate() {
                out[p] = other.basis.row(r).dot(&c.transpose());
            }
        }
        out
    }
}

/// Sum of `f(lo, hi)` over fixed chunks of `0..n`, added in chunk order so
/// the result does not depend on the thread count.
fn chunked<T: Send + std::ops::Add<Output = T>>(n: usize, f: impl Fn(usize, usize) -> T + Sync) -> Option<T> {
    let parts: Vec<T> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| f(c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect();
    parts.into_iter().reduce(|a, b| a + b)
}

/// Backward regression scheme on `bundle`.
pub fn solve_regression(
    bundle: &PathBundle,
    g: &GeneratorSpec,
    payoff: PathPayoff,
    opts: &RegressionOptions,
) -> Result<BsdejSolution, BsdejError> {
    let n = bundle.n_paths();
    let steps = bundle.n_steps();
    let w = steps + 1;
    let atoms = bundle.base().len();
    let mut y = vec![0.0; n * w];
    let mut z = vec![0.0; n * steps];
    let mut u = vec![0.0; n * steps * atoms];
    let mut pathwise: Vec<f64> = (0..n).map(|p| payoff(bundle.path(p))).collect();
    let mut diagnostics = Vec::with_capacity(steps);
    let mut multi = 0usize;
    for p in 0..n {
        y[p * w + steps] = pathwise[p];
    }
    let all: Vec<usize> = (0..n).collect();
    let mut next: Vec<f64> = pathwise.clone();
    for k in (0..steps).rev() {
        let dt = bundle.dt(k);
        let t = bundle.grid()[k];
        let states = bundle.values_at(k);
        let basis = Basis::new(&states, opts.degree);
        let proj = Projector::new(basis.matrix(&states, &all), opts.ridge, k)?;
        let cross = CrossFit::new(&basis, &states, opts.ridge, k)?;
        let cond_next = proj.fit(&next);
        let centered: Vec<f64> = next.iter().zip(&cond_next).map(|(a, b)| a - b).collect();

        let z_target: Vec<f64> = (0..n)
            .map(|p| centered[p] * bundle.cont_increment(p, k) / (bundle.qv_density(p, k) * dt))
            .collect();
        let zk = cross.fit(&z_target);
        let counts: Vec<Vec<u32>> = (0..n).map(|p| bundle.jump_counts(p, k)).collect();
        multi += counts.iter().filter(|c| c.iter().any(|&c| c > 1)).count();
        let mut uk = vec![vec![0.0; atoms]; n];
        for j in 0..atoms {
            let target: Vec<f64> = (0..n)
                .map(|p| {
                    let lam = bundle.compensator(p, k).atoms()[j].intensity;
                    centered[p] * (counts[p][j] as f64 - lam * dt) / (lam * dt)
                })
                .collect();
            for (p, v) in cross.fit(&target).into_iter().enumerate() {
                uk[p][j] = v;
            }
        }

        let targets: Vec<Result<(f64, f64), BsdejError>> = (0..n)
            .into_par_iter()
            .map(|p| {
                let nu = bundle.compensator(p, k);
                let a = bundle.qv_density(p, k);
                let args = DriverArgs { t, x: states[p], y: next[p], z: zk[p], u: &uk[p], a, nu };
                let f = g.eval(&args).finite().ok_or(BsdejError::ControlOutsideDomain { path: p, step: k })?;
                let mut mart = zk[p] * bundle.cont_increment(p, k);
                for (j, atom) in nu.atoms().iter().enumerate() {
                    mart += uk[p][j] * (counts[p][j] as f64 - atom.intensity * dt);
                }
                Ok((f * dt, mart))
            })
            .collect();
        let mut target = Vec::with_capacity(n);
        for (p, r) in targets.into_iter().enumerate() {
            let (fdt, mart) = r?;
            target.push(next[p] + fdt - mart);
            pathwise[p] += fdt - mart;
        }
        let yk = proj.fit(&target);
        let resid: Vec<f64> = yk.iter().zip(&target).map(|(a, b)| a - b).collect();
        let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let residual_projection = proj.moments(&resid).amax() / scale;
        diagnostics.push(StepDiagnostics {
            basis_size: proj.size(),
            condition: proj.condition,
            residual_projection,
            residual_sd: Estimate::from_samples(&resid).variance().sqrt(),
        });
        for p in 0..n {
            y[p * w + k] = yk[p];
            z[p * steps + k] = zk[p];
            u[(p * steps + k) * atoms..(p * steps + k + 1) * atoms].copy_from_slice(&uk[p]);
        }
        next = yk;
    }
    diagnostics.reverse();
    Ok(BsdejSolution {
        grid: bundle.grid().to_vec(),
        n_paths: n,
        n_atoms: atoms,
        measure_tag: bundle.measure_tag().to_string(),
        seed: bundle.seed(),
        y,
        z,
        u,
        pathwise,
        diagnostics,
        multi_jump_fraction: multi as f64 / (n * steps) as f64,
    })
}

/// Markovian lattice solution with constant `(a, ν)`; the same scheme as
/// [`pide::solve_semilinear`].
pub fn solve_lattice_1d(
    a: f64,
    nu: &LevyBaseMeasure,
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<ValueFunction, BsdejError> {
    Ok(pide::solve_semilinear(a, nu, g, terminal, grid)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Per grid time: fraction of paths with `Y¹ > Y²`.
    pub fraction: Vec<f64>,
    /// Per grid time: largest `Y¹ − Y²` (0 when none).
    pub max_violation: Vec<f64>,
    /// Per grid time: `3 · sqrt(se¹² + se²²)` with the fitted-value errors.
    pub allowance: Vec<f64>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.max_violation.iter().zip(&self.allowance).all(|(v, a)| v <= a)
    }

    pub fn worst(&self) -> f64 {
        self.max_violation.iter().copied().fold(0.0, f64::max)
    }
}

fn same_setup(a: &BsdejSolution, b: &BsdejSolution) -> Result<(), BsdejError> {
    if a.grid != b.grid || a.n_paths != b.n_paths || a.seed != b.seed || a.measure_tag != b.measure_tag {
        return Err(BsdejError::GridMismatch);
    }
    Ok(())
}

/// Statistics of `Y¹ > Y²` events for two solutions on the same bundle.
pub fn check_comparison(sol1: &BsdejSolution, sol2: &BsdejSolution) -> Result<ComparisonReport, BsdejError> {
    same_setup(sol1, sol2)?;
    let n = sol1.n_paths;
    let mut r = ComparisonReport { fraction: vec![], max_violation: vec![], allowance: vec![] };
    for k in 0..=sol1.n_steps() {
        let (mut count, mut worst) = (0usize, 0.0f64);
        for p in 0..n {
            let d = sol1.y(p, k) - sol2.y(p, k);
            if d > 0.0 {
                count += 1;
                worst = worst.max(d);
            }
        }
        let se = |s: &BsdejSolution| s.diagnostics.get(k).map_or(0.0, |d| d.fit_se(n));
        r.fraction.push(count as f64 / n as f64);
        r.max_violation.push(worst);
        r.allowance.push(3.0 * se(sol1).hypot(se(sol2)));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `E[sup_k |Y¹_k − Y²_k|²]^{1/2}`.
    pub solution_gap: f64,
    /// `E[|ξ¹ − ξ²|²]^{1/2}`.
    pub terminal_gap: f64,
    pub ratio: f64,
    /// Set when both gaps vanish and the ratio is reported as 0.
    pub degenerate: bool,
}

/// Size of the solution difference relative to the terminal difference.
pub fn stability_gap(sol1: &BsdejSolution, sol2: &BsdejSolution) -> Result<StabilityReport, BsdejError> {
    same_setup(sol1, sol2)?;
    let sup_sq: Vec<f64> = (0..sol1.n_paths)
        .map(|p| {
            let m = sol1.y_path(p).iter().zip(sol2.y_path(p)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            m * m
        })
        .collect();
    let xi_sq: Vec<f64> = sol1.terminal().iter().zip(sol2.terminal()).map(|(a, b)| (a - b) * (a - b)).collect();
    let solution_gap = (pairwise_sum(&sup_sq) / sup_sq.len() as f64).sqrt();
    let terminal_gap = (pairwise_sum(&xi_sq) / xi_sq.len() as f64).sqrt();
    let degenerate = solution_gap == 0.0 && terminal_gap == 0.0;
    let ratio = if degenerate { 0.0 } else { solution_gap / terminal_gap };
    Ok(StabilityReport { solution_gap, terminal_gap, ratio, degenerate })
}

/// Adapts a terminal function of the state into a path payoff.
pub fn terminal_payoff(f: impl Fn(f64) -> f64 + Sync) -> impl Fn(&[f64]) -> f64 + Sync {
    move |path: &[f64]| f(path[path.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{discount_generator, zero_generator};
    use crate::levy::{make_base_measure, Alpha, ControlSpec, JumpMap};
    use crate::paths::{apply_control, simulate_reference, uniform_grid};

    fn opts() -> RegressionOptions {
        RegressionOptions::default()
    }

    #[test]
    fn terminal_value_is_exact_and_martingale_payoff_is_centered() {
        let f = make_base_measure(&[(1.0, 1.0), (-0.5, 2.0)]).unwrap();
        let b = simulate_reference(&f, 20_000, &uniform_grid(1.0, 20), 1).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(0.6), JumpMap::linear(1.3));
        let x = apply_control(&b, &c, &f).unwrap();
        let pay = terminal_payoff(|x| x);
        let s = solve_regression(&x, &zero_generator(), &pay, &opts()).unwrap();
        assert_eq!(s.terminal(), x.terminal_values());
        assert!(s.y0().within(0.0, 3.0), "{:?}", s.y0());
        assert!(s.diagnostics.iter().all(|d| d.residual_projection <= 1e-8));
    }

    #[test]
    fn brownian_second_moment() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 20_000, &uniform_grid(1.0, 25), 2).unwrap();
        let s = solve_regression(&b, &zero_generator(), &terminal_payoff(|x| x * x), &opts()).unwrap();
        assert!(s.y0().within(1.0, 3.0), "{:?}", s.y0());
    }

    #[test]
    fn discounting_matches_closed_form() {
        let c = 0.7;
        let n = 50;
        let b = simulate_reference(&LevyBaseMeasure::zero(), 2_000, &uniform_grid(1.0, n), 3).unwrap();
        let s = solve_regression(&b, &discount_generator(c), &|_: &[f64]| 1.0, &opts()).unwrap();
        let y0 = s.y0();
        // explicit scheme: (1 − cΔt)^N; continuous limit e^{−cT}
        let discrete = (1.0 - c / n as f64).powi(n as i32);
        assert!((y0.mean - discrete).abs() <= 1e-6);
        assert!((y0.mean - (-c).exp()).abs() <= c * c / n as f64);
    }

    #[test]
    fn zero_driver_is_plain_expectation() {
        let f = make_base_measure(&[(0.5, 3.0)]).unwrap();
        let b = simulate_reference(&f, 20_000, &uniform_grid(1.0, 10), 4).unwrap();
        let pay = terminal_payoff(|x| (x - 0.2).max(0.0));
        let s = solve_regression(&b, &zero_generator(), &pay, &opts()).unwrap();
        let plain = Estimate::from_samples(&b.terminal_values().iter().map(|&x| (x - 0.2).max(0.0)).collect::<Vec<_>>());
        assert!((s.y0().mean - plain.mean).abs() <= 3.0 * plain.se);
    }

    #[test]
    fn too_few_paths_is_singular() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 4, &uniform_grid(1.0, 4), 3).unwrap();
        let e = solve_regression(&b, &zero_generator(), &terminal_payoff(|x| x), &opts()).unwrap_err();
        assert!(matches!(e, BsdejError::SingularRegression { .. }));
    }

    #[test]
    fn shifted_terminal_and_identical_inputs() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 5_000, &uniform_grid(1.0, 10), 5).unwrap();
        let g = zero_generator();
        let s1 = solve_regression(&b, &g, &terminal_payoff(|x| x.sin()), &opts()).unwrap();
        let s2 = solve_regression(&b, &g, &terminal_payoff(|x| x.sin() + 1.0), &opts()).unwrap();
        let r = check_comparison(&s1, &s2).unwrap();
        assert!(r.passed());
        for p in (0..5_000).step_by(97) {
            assert!((s2.y(p, 0) - s1.y(p, 0) - 1.0).abs() < 1e-6);
        }
        let same = check_comparison(&s1, &s1).unwrap();
        assert_eq!(same.worst(), 0.0);
        assert!(same.fraction.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn stability_ratio() {
        let b = simulate_reference(&LevyBaseMeasure::zero(), 5_000, &uniform_grid(1.0, 10), 6).unwrap();
        let g = zero_generator();
        let base = solve_regression(&b, &g, &terminal_payoff(|x| x.cos()), &opts()).unwrap();
        let r0 = stability_gap(&base, &base).unwrap();
        assert!(r0.degenerate && r0.ratio == 0.0);
        let ratios: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| {
                let s = solve_regression(&b, &g, &terminal_payoff(move |x| x.cos() + e), &opts()).unwrap();
                stability_gap(&base, &s).unwrap().ratio
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() <= 0.1);
        }
    }

    #[test]
    fn lattice_entry_point_matches_pide() {
        let nu = make_base_measure(&[(1.0, 1.0)]).unwrap();
        let grid = PideGrid::with_cfl(-6.0, 6.0, 120, 1.0, &[pide::LatticeControl::new(1.0, nu.clone())]).unwrap();
        let sq = |x: f64| x * x;
        let a = solve_lattice_1d(1.0, &nu, &zero_generator(), &sq, &grid).unwrap();
        let b = pide::solve_semilinear(1.0, &nu, &zero_generator(), &sq, &grid).unwrap();
        assert_eq!(a, b);
    }
}
