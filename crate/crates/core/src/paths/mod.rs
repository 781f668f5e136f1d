//! Simulation of the reference process and of controlled processes.
//!
//! A [`PathBundle`] stores, per path, the grid values of the canonical
//! process, the increments of its continuous martingale part, the exact jump
//! marks, the volatility in force on every step and the jump compensator in
//! force on every step. The grid value recursion is
//!
//! ```text
//! B_{k+1} = B_k + ΔB^c_k − (∫ x ν_k(dx)) Δt_k + Σ_{jumps in (t_k, t_{k+1}]} ΔB
//! ```
//!
//! and is evaluated in exactly that order everywhere, so the bookkeeping
//! identity holds bit for bit.

mod io;
mod likelihood;
mod qv;
mod simulate;

pub use io::{read_bundle, summary_csv, write_bundle, write_summary_csv, BundleSidecar};
pub use likelihood::likelihood_ratio;
pub use qv::{estimate_qv_density, QvEstimate};
pub use simulate::{apply_control, reconstruct_reference, simulate_reference};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy::{LevyBaseMeasure, Observation};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("time grid must start at 0 and increase strictly")]
    EmptyGrid,
    #[error("at least one path is required")]
    NoPaths,
    #[error("bundle was not simulated under this base measure")]
    MeasureMismatch,
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("control time {t} is not a grid point")]
    OffGrid { t: f64 },
    #[error("only scalar volatility is simulated")]
    UnsupportedDimension,
    #[error("window {window} exceeds the {steps} grid steps")]
    WindowTooLarge { window: usize, steps: usize },
    #[error("path {path}, step {step}: jump size {size} has no preimage")]
    NonInvertibleCell { path: usize, step: usize, size: f64 },
    #[error("measures or jumps do not share atom locations")]
    AtomMismatch,
    #[error("io: {0}")]
    Io(String),
    #[error("malformed bundle file: {0}")]
    Format(String),
}

/// One jump: exact time, size, grid step containing it, and the index of the
/// atom of the step's compensator it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpMark {
    pub time: f64,
    pub size: f64,
    pub step: u32,
    pub atom: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub(crate) grid: Vec<f64>,
    pub(crate) n_paths: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) cont_increments: Vec<f64>,
    pub(crate) jumps: Vec<Vec<JumpMark>>,
    pub(crate) qv_density: Vec<f64>,
    pub(crate) compensators: Vec<LevyBaseMeasure>,
    pub(crate) compensator_index: Vec<u32>,
    pub(crate) base: LevyBaseMeasure,
    pub(crate) seed: u64,
    pub(crate) measure_tag: String,
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<(), PathError> {
    let ok = grid.len() >= 2 && grid[0] == 0.0 && grid.windows(2).all(|w| w[1] > w[0]) && grid.iter().all(|t| t.is_finite());
    if ok {
        Ok(())
    } else {
        Err(PathError::EmptyGrid)
    }
}

/// Uniform grid `0, T/n, …, T`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

impl PathBundle {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.n_steps()]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.grid[k + 1] - self.grid[k]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn measure_tag(&self) -> &str {
        &self.measure_tag
    }

    /// Base measure of the reference process the bundle derives from.
    pub fn base(&self) -> &LevyBaseMeasure {
        &self.base
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[p * w..(p + 1) * w]
    }

    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.values[p * self.grid.len() + k]
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, self.n_steps())).collect()
    }

    pub fn values_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, k)).collect()
    }

    /// Increment of the continuous martingale part on step `k`.
    pub fn cont_increment(&self, p: usize, k: usize) -> f64 {
        self.cont_increments[p * self.n_steps() + k]
    }

    pub fn qv_density(&self, p: usize, k: usize) -> f64 {
        self.qv_density[p * self.n_steps() + k]
    }

    pub fn compensator(&self, p: usize, k: usize) -> &LevyBaseMeasure {
        &self.compensators[self.compensator_index[p * self.n_steps() + k] as usize]
    }

    pub fn compensators(&self) -> &[LevyBaseMeasure] {
        &self.compensators
    }

    /// Compensator drift `−(∫ x ν(dx)) Δt` on step `k`.
    pub fn drift(&self, p: usize, k: usize) -> f64 {
        -self.compensator(p, k).first_moment() * self.dt(k)
    }

    pub fn jumps(&self, p: usize) -> &[JumpMark] {
        &self.jumps[p]
    }

    pub fn jumps_in_step(&self, p: usize, k: usize) -> &[JumpMark] {
        let js = &self.jumps[p];
        let lo = js.partition_point(|j| (j.step as usize) < k);
        let hi = js.partition_point(|j| (j.step as usize) <= k);
        &js[lo..hi]
    }

    /// Jump counts per source atom on step `k` (length = atoms of the compensator).
    pub fn jump_counts(&self, p: usize, k: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.compensator(p, k).len()];
        for j in self.jumps_in_step(p, k) {
            counts[j.atom as usize] += 1;
        }
        counts
    }

    /// Path values recomputed from the stored increments and jumps.
    pub fn rebuilt_values(&self) -> Vec<f64> {
        let n = self.n_steps();
        let mut out = vec![0.0; self.values.len()];
        for p in 0..self.n_paths {
            let row = &mut out[p * (n + 1)..(p + 1) * (n + 1)];
            accumulate_path(row, |k| self.cont_increment(p, k), |k| self.drift(p, k), &self.jumps[p]);
        }
        out
    }

    /// Bit-level check of the bookkeeping identity.
    pub fn bookkeeping_exact(&self) -> bool {
        self.rebuilt_values().iter().zip(&self.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn observation(&self, p: usize) -> PathObservation<'_> {
        PathObservation { grid: &self.grid, values: self.path(p), jumps: &self.jumps[p] }
    }

    /// Mean and standard error of the path value at grid index `k`.
    pub fn mean_at(&self, k: usize) -> Estimate {
        Estimate::from_samples(&self.values_at(k))
    }

    /// Per path `∫ â dt + ∫∫ x² ν(dx) dt` over the whole horizon.
    pub fn bracket_compensator(&self) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| {
                (0..self.n_steps())
                    .map(|k| (self.qv_density(p, k) + self.compensator(p, k).second_moment()) * self.dt(k))
                    .sum()
            })
            .collect()
    }
}

/// Shared value recursion; `row` has one slot per grid point, `row[0]` is the
/// start value.
pub(crate) fn accumulate_path(
    row: &mut [f64],
    cont: impl Fn(usize) -> f64,
    drift: impl Fn(usize) -> f64,
    jumps: &[JumpMark],
) {
    let mut j = 0;
    for k in 0..row.len() - 1 {
        let mut v = row[k] + cont(k) + drift(k);
        while j < jumps.len() && jumps[j].step as usize == k {
            v += jumps[j].size;
            j += 1;
        }
        row[k + 1] = v;
    }
}

/// Path prefix seen through the predicate vocabulary.
pub struct PathObservation<'a> {
    pub grid: &'a [f64],
    pub values: &'a [f64],
    pub jumps: &'a [JumpMark],
}

pub(crate) fn grid_index_at(grid: &[f64], t: f64) -> usize {
    let tol = 1e-12 * grid[grid.len() - 1].abs().max(1.0);
    grid.partition_point(|&s| s <= t + tol).saturating_sub(1)
}

impl Observation for PathObservation<'_> {
    fn state_at(&self, t: f64) -> f64 {
        self.values[grid_index_at(self.grid, t)]
    }

    fn jumps_up_to(&self, t: f64) -> u32 {
        self.jumps.iter().take_while(|j| j.time <= t).count() as u32
    }
}
