use serde::{Deserialize, Serialize};

use super::measure::same_point;

/// Jump-size transformation applied to the jumps of the reference process.
///
/// Only two parametric forms exist: multiplication by a slope, and a table of
/// values on the atom set. A table may hold any values; whether it is
/// admissible (strictly monotone, hence invertible) is decided by
/// [`validate_control`](super::validate_control), not at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpMap {
    Linear { slope: f64 },
    Table { points: Vec<TablePoint> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TablePoint {
    pub x: f64,
    pub value: f64,
}

impl JumpMap {
    pub fn identity() -> Self {
        JumpMap::Linear { slope: 1.0 }
    }

    pub fn linear(slope: f64) -> Self {
        JumpMap::Linear { slope }
    }

    /// Tabulates `f` on the given points.
    pub fn tabulate(points: &[f64], f: impl Fn(f64) -> f64) -> Self {
        JumpMap::Table { points: points.iter().map(|&x| TablePoint { x, value: f(x) }).collect() }
    }

    pub fn apply(&self, x: f64) -> Option<f64> {
        match self {
            JumpMap::Linear { slope } => Some(slope * x),
            JumpMap::Table { points } => points.iter().find(|p| same_point(p.x, x)).map(|p| p.value),
        }
    }

    /// Preimage of `y` among `atoms` (or the exact inverse for a slope).
    pub fn invert(&self, y: f64, atoms: &[f64]) -> Option<f64> {
        match self {
            JumpMap::Linear { slope } => {
                if *slope == 0.0 {
                    return None;
                }
                let x = y / slope;
                // the preimage must be a charged atom when a support is given
                if atoms.is_empty() || atoms.iter().any(|&a| same_point(a, x)) {
                    Some(x)
                } else {
                    None
                }
            }
            JumpMap::Table { .. } => {
                let mut hits = atoms.iter().filter(|&&a| self.apply(a).is_some_and(|v| same_point(v, y)));
                let first = hits.next().copied();
                if hits.next().is_some() {
                    None
                } else {
                    first
                }
            }
        }
    }

    /// Strict monotonicity on the given support.
    pub fn is_strictly_monotone_on(&self, atoms: &[f64]) -> bool {
        let mut xs: Vec<f64> = atoms.to_vec();
        xs.sort_by(f64::total_cmp);
        let ys: Option<Vec<f64>> = xs.iter().map(|&x| self.apply(x)).collect();
        let Some(ys) = ys else { return false };
        let increasing = ys.windows(2).all(|w| w[1] > w[0]);
        let decreasing = ys.windows(2).all(|w| w[1] < w[0]);
        increasing || decreasing
    }

    /// Smallest `C` with `|beta(x)| <= C (1 ∧ |x|)` on the support.
    pub fn bound_constant(&self, atoms: &[f64]) -> Option<f64> {
        atoms
            .iter()
            .map(|&x| self.apply(x).map(|y| y.abs() / x.abs().min(1.0)))
            .try_fold(0.0_f64, |acc, r| r.map(|r| acc.max(r)))
    }

    pub(crate) fn tag(&self) -> String {
        match self {
            JumpMap::Linear { slope } => format!("x*{slope}"),
            JumpMap::Table { points } => format!("table{}", points.len()),
        }
    }
}
