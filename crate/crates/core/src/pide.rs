//! Explicit monotone finite-difference schemes for
//!
//! ```text
//! −∂_t u = ½ a D²u + Σ_i λ_i [u(x+z_i) − u(x) − z_i Du] + F(t, x, u, Du, U u, a, ν)
//! ```
//!
//! on a uniform grid, and for its Bellman form (pointwise maximum over a
//! finite set of `(a, ν)`). The jump term is the generator of a martingale,
//! so the compensation is written as the drift `−(Σ λ_i z_i) Du`; it equals
//! the small-jump gradient term plus the large-jump compensator.
//!
//! Jump targets between two nodes are split over both with linear
//! interpolation weights, which keeps the total intensity per node and the
//! scheme monotone. Targets beyond the grid read the boundary rule.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::generator::{DriverArgs, GeneratorSpec};
use crate::levy::LevyBaseMeasure;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PideError {
    #[error("explicit scheme unstable: dt * rate = {ratio:.4} > 1/2 (need at least {min_steps} time steps)")]
    CflViolation { ratio: f64, min_steps: usize },
    #[error("control set is empty")]
    EmptyControlGrid,
    #[error("control (a = {a}, ν = {nu}) is outside the generator domain")]
    ControlOutsideDomain { a: f64, nu: String },
    #[error("value functions live on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("io: {0}")]
    Io(String),
}

/// Values outside `[x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// Boundary nodes and out-of-grid jump targets keep the terminal
    /// function's value. Monotone.
    #[default]
    Dirichlet,
    /// Boundary nodes and out-of-grid targets continue the value function
    /// linearly from the two outermost nodes. Not monotone in general.
    LinearExtrapolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PideGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Number of space intervals; there are `n_x + 1` nodes.
    pub n_x: usize,
    pub horizon: f64,
    pub n_t: usize,
    pub boundary: BoundaryRule,
}

impl PideGrid {
    pub fn new(x_lo: f64, x_hi: f64, n_x: usize, horizon: f64, n_t: usize) -> Result<Self, PideError> {
        if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() || n_x < 2 {
            return Err(PideError::BadGrid(format!("space [{x_lo}, {x_hi}] with {n_x} intervals")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() || n_t == 0 {
            return Err(PideError::BadGrid(format!("horizon {horizon} with {n_t} steps")));
        }
        Ok(PideGrid { x_lo, x_hi, n_x, horizon, n_t, boundary: BoundaryRule::Dirichlet })
    }

    /// Grid with the fewest time steps the stability bound allows for the
    /// given controls.
    pub fn with_cfl(x_lo: f64, x_hi: f64, n_x: usize, horizon: f64, controls: &[LatticeControl]) -> Result<Self, PideError> {
        let g = PideGrid::new(x_lo, x_hi, n_x, horizon, 1)?;
        let rate = controls.iter().map(|c| g.rate(c)).fold(0.0, f64::max);
        let n_t = ((2.0 * horizon * rate).ceil() as usize).max(1);
        Ok(PideGrid { n_t, ..g })
    }

    pub fn with_boundary(mut self, rule: BoundaryRule) -> Self {
        self.boundary = rule;
        self
    }

    pub fn h(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.n_x as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_lo + (self.x_hi - self.x_lo) * j as f64 / self.n_x as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_x).map(|j| self.node(j)).collect()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.n_t as f64
    }

    /// Twice the grid spacing in each direction.
    pub fn refined(&self) -> PideGrid {
        PideGrid { n_x: 2 * self.n_x, n_t: 4 * self.n_t, ..self.clone() }
    }

    fn central_drift(&self, c: &LatticeControl) -> bool {
        c.a / self.h() >= c.nu.first_moment().abs()
    }

    /// Total outflow rate of a node; the scheme is stable and monotone when
    /// `dt * rate ≤ 1/2`.
    pub fn rate(&self, c: &LatticeControl) -> f64 {
        let h = self.h();
        let drift = if self.central_drift(c) { 0.0 } else { c.nu.first_moment().abs() / h };
        c.a / (h * h) + c.nu.total_intensity() + drift
    }

    pub fn check_cfl(&self, controls: &[LatticeControl]) -> Result<(), PideError> {
        let rate = controls.iter().map(|c| self.rate(c)).fold(0.0, f64::max);
        let ratio = self.dt() * rate;
        if ratio > 0.5 * (1.0 + 1e-12) {
            return Err(PideError::CflViolation { ratio, min_steps: (2.0 * self.horizon * rate).ceil() as usize });
        }
        Ok(())
    }
}

/// Constant characteristics `(a, ν)` of one semilinear equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeControl {
    pub a: f64,
    pub nu: LevyBaseMeasure,
}

impl LatticeControl {
    pub fn new(a: f64, nu: LevyBaseMeasure) -> Self {
        LatticeControl { a, nu }
    }

    pub fn diffusion(a: f64) -> Self {
        LatticeControl { a, nu: LevyBaseMeasure::zero() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum JumpTarget {
    /// `(1 − w) u_i + w u_{i+1}`.
    Split { i: usize, w: f64 },
    Outside { y: f64 },
}

/// Precomputed per-node stencil of one control.
#[derive(Debug, Clone)]
pub struct Stencil {
    a: f64,
    drift: f64,
    central: bool,
    intensities: Vec<f64>,
    targets: Vec<Vec<JumpTarget>>,
}

impl Stencil {
    pub fn new(grid: &PideGrid, c: &LatticeControl) -> Self {
        let h = grid.h();
        let targets = (0..=grid.n_x)
            .map(|j| {
                c.nu.atoms()
                    .iter()
                    .map(|atom| {
                        let y = grid.node(j) + atom.location;
                        let s = (y - grid.x_lo) / h;
                        if y < grid.x_lo || y > grid.x_hi {
                            JumpTarget::Outside { y }
                        } else {
                            let i = (s.floor() as usize).min(grid.n_x - 1);
                            let w = (s - i as f64).clamp(0.0, 1.0);
                            JumpTarget::Split { i, w }
                        }
                    })
                    .collect()
            })
            .collect();
        Stencil {
            a: c.a,
            drift: -c.nu.first_moment(),
            central: grid.central_drift(c),
            intensities: c.nu.intensities(),
            targets,
        }
    }

    /// Sum of the jump intensities attached to node `j`.
    pub fn node_intensity(&self, j: usize) -> f64 {
        self.targets[j].iter().zip(&self.intensities).map(|(_, l)| l).sum()
    }
}

/// Value of `u` (known on the nodes) at the jump target.
fn target_value(t: JumpTarget, u: &[f64], grid: &PideGrid, terminal: &(dyn Fn(f64) -> f64 + Sync)) -> f64 {
    match t {
        JumpTarget::Split { i, w } => {
            if w == 0.0 {
                u[i]
            } else {
                (1.0 - w) * u[i] + w * u[i + 1]
            }
        }
        JumpTarget::Outside { y } => match grid.boundary {
            BoundaryRule::Dirichlet => terminal(y),
            BoundaryRule::LinearExtrapolation => {
                let h = grid.h();
                let m = grid.n_x;
                if y < grid.x_lo {
                    u[0] + (y - grid.x_lo) * (u[1] - u[0]) / h
                } else {
                    u[m] + (y - grid.x_hi) * (u[m] - u[m - 1]) / h
                }
            }
        },
    }
}

/// One explicit backward step at interior node `j`: returns `u^k_j` from the
/// values `u = u^{k+1}`.
#[allow(clippy::too_many_arguments)]
fn node_update(
    j: usize,
    t: f64,
    u: &[f64],
    grid: &PideGrid,
    s: &Stencil,
    nu: &LevyBaseMeasure,
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    jump_buf: &mut Vec<f64>,
) -> f64 {
    let h = grid.h();
    let dt = grid.dt();
    let (um, u0, up) = (u[j - 1], u[j], u[j + 1]);
    let diffusion = 0.5 * s.a * (up - 2.0 * u0 + um) / (h * h);
    let drift = if s.central {
        s.drift * (up - um) / (2.0 * h)
    } else if s.drift > 0.0 {
        s.drift * (up - u0) / h
    } else {
        s.drift * (u0 - um) / h
    };
    jump_buf.clear();
    let mut jumps = 0.0;
    for (target, lam) in s.targets[j].iter().zip(&s.intensities) {
        let du = target_value(*target, u, grid, terminal) - u0;
        jump_buf.push(du);
        jumps += lam * du;
    }
    let args = DriverArgs { t, x: grid.node(j), y: u0, z: (up - um) / (2.0 * h), u: jump_buf, a: s.a, nu };
    let f = g.eval(&args).finite().unwrap_or(f64::NAN);
    u0 + dt * (diffusion + drift + jumps) + dt * f
}

/// Value function on the full space-time grid; row `k` is time `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: PideGrid,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * (self.grid.n_x + 1) + j]
    }

    /// All nodes, time-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.grid.n_x + 1;
        &self.values[k * w..(k + 1) * w]
    }

    /// Linear interpolation in space at time index `k`; `None` off the grid.
    pub fn interp(&self, k: usize, x: f64) -> Option<f64> {
        let g = &self.grid;
        if !(x >= g.x_lo && x <= g.x_hi) {
            return None;
        }
        let s = (x - g.x_lo) / g.h();
        let i = (s.floor() as usize).min(g.n_x - 1);
        let w = s - i as f64;
        let r = self.row(k);
        Some(if w == 0.0 { r[i] } else { (1.0 - w) * r[i] + w * r[i + 1] })
    }

    /// `u(0, x0)`.
    pub fn initial_value(&self, x0: f64) -> Option<f64> {
        self.interp(0, x0)
    }

    /// CSV text `t,x,u` for every `stride`-th time row.
    pub fn to_csv(&self, stride: usize, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("t,x,u\n");
        let stride = stride.max(1);
        let mut ks: Vec<usize> = (0..=self.grid.n_t).step_by(stride).collect();
        if ks.last() != Some(&self.grid.n_t) {
            ks.push(self.grid.n_t);
        }
        for k in ks {
            let t = self.grid.time(k);
            for (j, u) in self.row(k).iter().enumerate() {
                let _ = writeln!(out, "{t},{},{u}", self.grid.node(j));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path, stride: usize, header: &str) -> Result<(), PideError> {
        std::fs::write(path, self.to_csv(stride, header)).map_err(|e| PideError::Io(e.to_string()))
    }
}

/// Fully nonlinear solution with the maximising control index per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSolution {
    pub value: ValueFunction,
    /// Row `k < n_t`: index into the control set chosen at `(t_k, x_j)`.
    argmax: Vec<u32>,
}

impl NonlinearSolution {
    pub fn argmax(&self, k: usize, j: usize) -> u32 {
        self.argmax[k * (self.value.grid.n_x + 1) + j]
    }
}

fn check_controls(controls: &[LatticeControl], g: &GeneratorSpec, grid: &PideGrid) -> Result<(), PideError> {
    if controls.is_empty() {
        return Err(PideError::EmptyControlGrid);
    }
    for c in controls {
        if !g.in_domain(c.a, &c.nu) {
            return Err(PideError::ControlOutsideDomain { a: c.a, nu: format!("{:?}", c.nu.atoms()) });
        }
    }
    grid.check_cfl(controls)
}

/// Shared backward sweep: per node, the largest one-step update over the
/// controls, ties going to the lowest index.
fn sweep(
    controls: &[LatticeControl],
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<NonlinearSolution, PideError> {
    check_controls(controls, g, grid)?;
    let w = grid.n_x + 1;
    let stencils: Vec<Stencil> = controls.iter().map(|c| Stencil::new(grid, c)).collect();
    let mut values = vec![0.0; (grid.n_t + 1) * w];
    let mut argmax = vec![0u32; grid.n_t * w];
    for (j, v) in values[grid.n_t * w..].iter_mut().enumerate() {
        *v = terminal(grid.node(j));
    }
    let mut next = vec![0.0; w];
    let mut choice = vec![0u32; w];
    for k in (0..grid.n_t).rev() {
        let t = grid.time(k);
        let (head, tail) = values.split_at_mut((k + 1) * w);
        let u = &tail[..w];
        next.par_iter_mut()
            .zip(choice.par_iter_mut())
            .enumerate()
            .for_each_init(Vec::new, |buf, (j, (out, arg))| {
                if j == 0 || j == grid.n_x {
                    return;
                }
                let mut best = f64::NEG_INFINITY;
                for (i, (s, c)) in stencils.iter().zip(controls).enumerate() {
                    let v = node_update(j, t, u, grid, s, &c.nu, g, terminal, buf);
                    if i == 0 || v > best {
                        best = v;
                        *arg = i as u32;
                    }
                }
                *out = best;
            });
        match grid.boundary {
            BoundaryRule::Dirichlet => {
                next[0] = u[0];
                next[grid.n_x] = u[grid.n_x];
            }
            BoundaryRule::LinearExtrapolation => {
                next[0] = 2.0 * next[1] - next[2];
                next[grid.n_x] = 2.0 * next[grid.n_x - 1] - next[grid.n_x - 2];
            }
        }
        if next.iter().any(|v| v.is_nan()) {
            let c = &controls[0];
            return Err(PideError::ControlOutsideDomain { a: c.a, nu: "driver undefined at some node".into() });
        }
        head[k * w..].copy_from_slice(&next);
        argmax[k * w..(k + 1) * w].copy_from_slice(&choice);
    }
    Ok(NonlinearSolution { value: ValueFunction { grid: grid.clone(), values }, argmax })
}

/// Semilinear equation with constant `(a, ν)`.
pub fn solve_semilinear(
    a: f64,
    nu: &LevyBaseMeasure,
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<ValueFunction, PideError> {
    Ok(sweep(&[LatticeControl::new(a, nu.clone())], g, terminal, grid)?.value)
}

/// Bellman equation: per node, the maximum of the semilinear one-step
/// updates over `controls`. A single control reproduces
/// [`solve_semilinear`] bit for bit.
pub fn solve_fullynonlinear(
    controls: &[LatticeControl],
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<NonlinearSolution, PideError> {
    sweep(controls, g, terminal, grid)
}

/// `u_fullynonlinear(0, x_j) − max_c u^c(0, x_j)` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    pub x: Vec<f64>,
    pub nonlinear: Vec<f64>,
    pub best_constant: Vec<f64>,
    pub best_index: Vec<usize>,
    pub gap: Vec<f64>,
}

impl GapTable {
    pub fn max_gap(&self) -> f64 {
        self.gap.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_gap(&self) -> f64 {
        self.gap.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = String::from(header);
        out.push_str("x,nonlinear,best_constant,best_index,gap\n");
        for j in 0..self.x.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.x[j], self.nonlinear[j], self.best_constant[j], self.best_index[j], self.gap[j]
            );
        }
        out
    }
}

/// Gap between the Bellman solution and the best constant control.
pub fn gap_table(nonlinear: &ValueFunction, constants: &[ValueFunction]) -> Result<GapTable, PideError> {
    if constants.is_empty() {
        return Err(PideError::EmptyControlGrid);
    }
    if constants.iter().any(|c| c.grid != nonlinear.grid) {
        return Err(PideError::GridMismatch);
    }
    let n = nonlinear.grid.n_x + 1;
    let mut t = GapTable {
        x: nonlinear.grid.nodes(),
        nonlinear: nonlinear.row(0).to_vec(),
        best_constant: Vec::with_capacity(n),
        best_index: Vec::with_capacity(n),
        gap: Vec::with_capacity(n),
    };
    for j in 0..n {
        let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
        for (i, c) in constants.iter().enumerate() {
            if c.at(0, j) > best {
                best = c.at(0, j);
                idx = i;
            }
        }
        t.best_constant.push(best);
        t.best_index.push(idx);
        t.gap.push(t.nonlinear[j] - best);
    }
    Ok(t)
}

/// Solves the Bellman equation and every constant-control equation on the
/// same grid and tabulates the gap.
pub fn compare_representation(
    controls: &[LatticeControl],
    g: &GeneratorSpec,
    terminal: &(dyn Fn(f64) -> f64 + Sync),
    grid: &PideGrid,
) -> Result<GapTable, PideError> {
    let full = solve_fullynonlinear(controls, g, terminal, grid)?;
    let constants = controls
        .iter()
        .map(|c| solve_semilinear(c.a, &c.nu, g, terminal, grid))
        .collect::<Result<Vec<_>, _>>()?;
    gap_table(&full.value, &constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{discount_generator, make_glevy_generator, zero_generator};
    use crate::levy::make_base_measure;

    fn poisson(l: f64) -> LevyBaseMeasure {
        make_base_measure(&[(1.0, l)]).unwrap()
    }

    fn square(x: f64) -> f64 {
        x * x
    }

    #[test]
    fn heat_moment() {
        let c = [LatticeControl::diffusion(1.0)];
        let grid = PideGrid::with_cfl(-8.0, 8.0, 400, 1.0, &c).unwrap();
        let u = solve_semilinear(1.0, &LevyBaseMeasure::zero(), &zero_generator(), &square, &grid).unwrap();
        assert!((u.initial_value(0.0).unwrap() - 1.0).abs() <= 1e-2);
    }

    #[test]
    fn compensated_poisson_moment() {
        let lam = 2.0;
        let c = [LatticeControl::new(1.0, poisson(lam))];
        let grid = PideGrid::with_cfl(-10.0, 10.0, 400, 1.0, &c).unwrap();
        let u = solve_semilinear(1.0, &poisson(lam), &zero_generator(), &square, &grid).unwrap();
        assert!((u.initial_value(0.0).unwrap() - (1.0 + lam)).abs() <= 2e-2);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let grid = PideGrid::new(-5.0, 5.0, 400, 1.0, 10).unwrap();
        let e = solve_semilinear(1.0, &LevyBaseMeasure::zero(), &zero_generator(), &square, &grid).unwrap_err();
        assert!(matches!(e, PideError::CflViolation { .. }));
    }

    #[test]
    fn stencil_keeps_total_intensity() {
        let nu = make_base_measure(&[(0.37, 1.5), (-2.2, 0.5), (30.0, 0.25)]).unwrap();
        let c = LatticeControl::new(1.0, nu.clone());
        let grid = PideGrid::new(-5.0, 5.0, 100, 1.0, 1000).unwrap();
        let s = Stencil::new(&grid, &c);
        for j in 0..=grid.n_x {
            assert!((s.node_intensity(j) - nu.total_intensity()).abs() < 1e-15);
        }
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let nu = make_base_measure(&[(0.3, 4.0), (-1.7, 1.0)]).unwrap();
        let c = [LatticeControl::new(0.7, nu.clone())];
        let grid = PideGrid::with_cfl(-4.0, 4.0, 80, 1.0, &c).unwrap();
        let u = solve_semilinear(0.7, &nu, &zero_generator(), &|_| 2.5, &grid).unwrap();
        assert!((0..=grid.n_t).all(|k| u.row(k).iter().all(|&v| v == 2.5)));
    }

    #[test]
    fn discounting_is_geometric() {
        let c = [LatticeControl::diffusion(1.0)];
        let grid = PideGrid::with_cfl(-4.0, 4.0, 40, 1.0, &c).unwrap().with_boundary(BoundaryRule::LinearExtrapolation);
        let u = solve_semilinear(1.0, &LevyBaseMeasure::zero(), &discount_generator(0.5), &|_| 1.0, &grid).unwrap();
        let exact = (1.0 - 0.5 * grid.dt()).powi(grid.n_t as i32);
        assert!((u.at(0, 20) - exact).abs() < 1e-12);
    }

    #[test]
    fn singleton_bellman_is_semilinear_bitwise() {
        let nu = poisson(1.5);
        let c = [LatticeControl::new(0.8, nu.clone())];
        let grid = PideGrid::with_cfl(-6.0, 6.0, 120, 1.0, &c).unwrap();
        let g = discount_generator(0.3);
        let a = solve_semilinear(0.8, &nu, &g, &square, &grid).unwrap();
        let b = solve_fullynonlinear(&c, &g, &square, &grid).unwrap();
        assert_eq!(a, b.value);
    }

    #[test]
    fn volatility_uncertainty_picks_top_volatility() {
        let (a1, a2) = (0.5, 1.5);
        let controls: Vec<_> = (0..9).map(|i| LatticeControl::diffusion(a1 + (a2 - a1) * i as f64 / 8.0)).collect();
        let grid = PideGrid::with_cfl(-8.0, 8.0, 400, 1.0, &controls).unwrap();
        let g = make_glevy_generator(a1, a2, 0.0, 0.0, 1.0).unwrap();
        let s = solve_fullynonlinear(&controls, &g, &square, &grid).unwrap();
        assert!((s.value.initial_value(0.0).unwrap() - a2).abs() <= 2e-2);
        assert_eq!(s.argmax(0, 200), 8);
    }

    #[test]
    fn out_of_domain_control_is_rejected() {
        let g = make_glevy_generator(0.5, 1.0, 0.0, 0.0, 1.0).unwrap();
        let c = [LatticeControl::diffusion(2.0)];
        let grid = PideGrid::with_cfl(-4.0, 4.0, 40, 1.0, &c).unwrap();
        assert!(matches!(solve_fullynonlinear(&c, &g, &square, &grid), Err(PideError::ControlOutsideDomain { .. })));
        assert_eq!(solve_fullynonlinear(&[], &g, &square, &grid).unwrap_err(), PideError::EmptyControlGrid);
    }

    #[test]
    fn butterfly_gains_from_adaptivity() {
        let controls: Vec<_> = [0.2, 1.0].iter().map(|&a| LatticeControl::diffusion(a)).collect();
        let grid = PideGrid::with_cfl(-6.0, 6.0, 200, 1.0, &controls).unwrap();
        let g = make_glevy_generator(0.2, 1.0, 0.0, 0.0, 1.0).unwrap();
        let fly = |x: f64| (x + 1.0).max(0.0) - 2.0 * x.max(0.0) + (x - 1.0).max(0.0);
        let t = compare_representation(&controls, &g, &fly, &grid).unwrap();
        assert!(t.min_gap() >= -1e-12);
        assert!(t.max_gap() > 3e-2);
    }
}
