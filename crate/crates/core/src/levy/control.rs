use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::predicate::{check_partition, Observation, PartitionDefect, Predicate};
use super::{pushforward, JumpMap, LevyBaseMeasure, LevyError};

/// Volatility control: a positive scalar in dimension one, otherwise a
/// symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Alpha {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Alpha::Scalar(a) => Some(*a),
            Alpha::Matrix(_) => None,
        }
    }

    /// Smallest and largest eigenvalue, `None` when not symmetric.
    pub fn spectrum_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Alpha::Scalar(a) => Some((*a, *a)),
            Alpha::Matrix(rows) => {
                let d = rows.len();
                if d == 0 || rows.iter().any(|r| r.len() != d) {
                    return None;
                }
                let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return None;
                }
                let eig = m.symmetric_eigenvalues();
                Some((eig.min(), eig.max()))
            }
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.spectrum_bounds().is_some_and(|(lo, hi)| lo > 0.0 && hi.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub when: Predicate,
    pub alpha: Alpha,
    pub beta: JumpMap,
}

/// Branch table in force on one interval `[tau_n, tau_{n+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub branches: Vec<Branch>,
}

impl Cell {
    pub fn constant(alpha: Alpha, beta: JumpMap) -> Self {
        Cell { branches: vec![Branch { when: Predicate::Always, alpha, beta }] }
    }

    pub fn select(&self, obs: &dyn Observation) -> Option<&Branch> {
        self.branches.iter().find(|b| b.when.eval(obs))
    }
}

/// Piecewise-constant control on a deterministic grid of breakpoints.
///
/// `breakpoints` runs from `0` to the horizon; cell `n` covers
/// `[breakpoints[n], breakpoints[n+1])` (the last cell also contains the
/// horizon itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawControl", into = "RawControl")]
pub struct ControlSpec {
    breakpoints: Vec<f64>,
    cells: Vec<Cell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawControl {
    breakpoints: Vec<f64>,
    cells: Vec<Cell>,
}

impl TryFrom<RawControl> for ControlSpec {
    type Error = LevyError;
    fn try_from(raw: RawControl) -> Result<Self, LevyError> {
        ControlSpec::piecewise(raw.breakpoints, raw.cells)
    }
}

impl From<ControlSpec> for RawControl {
    fn from(c: ControlSpec) -> Self {
        RawControl { breakpoints: c.breakpoints, cells: c.cells }
    }
}

impl ControlSpec {
    pub fn constant(horizon: f64, alpha: Alpha, beta: JumpMap) -> Self {
        ControlSpec { breakpoints: vec![0.0, horizon], cells: vec![Cell::constant(alpha, beta)] }
    }

    pub fn piecewise(breakpoints: Vec<f64>, cells: Vec<Cell>) -> Result<Self, LevyError> {
        let ok = breakpoints.len() >= 2
            && breakpoints[0] == 0.0
            && breakpoints.windows(2).all(|w| w[1] > w[0])
            && breakpoints.iter().all(|t| t.is_finite())
            && cells.len() + 1 == breakpoints.len()
            && cells.iter().all(|c| !c.branches.is_empty());
        if !ok {
            return Err(LevyError::BadBreakpoints);
        }
        Ok(ControlSpec { breakpoints, cells })
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("at least two breakpoints")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Cell containing `t` (the horizon belongs to the last cell).
    pub fn cell_index(&self, t: f64) -> usize {
        let n = self.cells.len();
        self.breakpoints[1..n].iter().take_while(|&&b| b <= t).count()
    }

    pub fn cell_start(&self, n: usize) -> f64 {
        self.breakpoints[n]
    }

    pub fn branch_at(&self, t: f64, obs: &dyn Observation) -> Option<&Branch> {
        self.cells[self.cell_index(t)].select(obs)
    }

    /// `(alpha, beta)` when the control ignores both time and path.
    pub fn as_constant(&self) -> Option<(&Alpha, &JumpMap)> {
        let first = self.cells.first()?.branches.first()?;
        let all_same = self.cells.iter().all(|c| {
            c.branches.len() == 1
                && c.branches[0].when == Predicate::Always
                && c.branches[0].alpha == first.alpha
                && c.branches[0].beta == first.beta
        });
        all_same.then_some((&first.alpha, &first.beta))
    }

    /// Merges neighbouring cells with identical branch tables.
    pub fn normalized(&self) -> ControlSpec {
        let mut bps = vec![self.breakpoints[0]];
        let mut cells: Vec<Cell> = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            if cells.last() == Some(c) {
                *bps.last_mut().unwrap() = self.breakpoints[i + 1];
            } else {
                cells.push(c.clone());
                bps.push(self.breakpoints[i + 1]);
            }
        }
        ControlSpec { breakpoints: bps, cells }
    }

    pub fn all_branches(&self) -> impl Iterator<Item = &Branch> {
        self.cells.iter().flat_map(|c| c.branches.iter())
    }
}

/// Breakpoints of `before` that precede `t`, then `t`, then those of `after`
/// past `t`, plus both ends.
fn merged_breakpoints(before: &[f64], after: &[&[f64]], t: f64, horizon: f64) -> Vec<f64> {
    let mut all: Vec<f64> = before
        .iter()
        .copied()
        .filter(|&s| s < t)
        .chain(after.iter().flat_map(|p| p.iter().copied()).filter(|&s| s > t))
        .chain([0.0, t, horizon])
        .collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// `c1` on `[0, t)`, `c2` on `[t, T]`.
pub fn concatenate(c1: &ControlSpec, c2: &ControlSpec, t: f64) -> Result<ControlSpec, LevyError> {
    let horizon = c1.horizon();
    if c2.horizon() != horizon {
        return Err(LevyError::HorizonMismatch);
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(LevyError::TimeOutOfRange { t, horizon });
    }
    let bps = merged_breakpoints(&c1.breakpoints, &[&c2.breakpoints], t, horizon);
    let cells = bps[..bps.len() - 1]
        .iter()
        .map(|&s| if s < t { c1.cells[c1.cell_index(s)].clone() } else { c2.cells[c2.cell_index(s)].clone() })
        .collect();
    ControlSpec::piecewise(bps, cells)
}

/// `base` on `[0, t)`; from `t` on, follows `branches[i].1` on the event
/// `branches[i].0`. The events must read the path no later than `t` and must
/// partition the path space.
pub fn bifurcate(branches: &[(Predicate, ControlSpec)], t: f64, base: &ControlSpec) -> Result<ControlSpec, LevyError> {
    let horizon = base.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(LevyError::TimeOutOfRange { t, horizon });
    }
    if branches.iter().any(|(_, c)| c.horizon() != horizon) {
        return Err(LevyError::HorizonMismatch);
    }
    if let Some((p, _)) = branches.iter().find(|(p, _)| p.latest_observation() > t) {
        return Err(LevyError::NotAdapted { at: p.latest_observation(), t });
    }
    let events: Vec<Predicate> = branches.iter().map(|(p, _)| p.clone()).collect();
    check_partition(&events).map_err(LevyError::NonPartition)?;

    let parts: Vec<&[f64]> = branches.iter().map(|(_, c)| c.breakpoints()).collect();
    let bps = merged_breakpoints(base.breakpoints(), &parts, t, horizon);
    let cells = bps[..bps.len() - 1]
        .iter()
        .map(|&s| {
            if s < t {
                return base.cells[base.cell_index(s)].clone();
            }
            let branches = branches
                .iter()
                .flat_map(|(event, c)| {
                    c.cells[c.cell_index(s)].branches.iter().map(move |b| Branch {
                        when: event.clone().and(b.when.clone()),
                        alpha: b.alpha.clone(),
                        beta: b.beta.clone(),
                    })
                })
                .collect();
            Cell { branches }
        })
        .collect();
    ControlSpec::piecewise(bps, cells)
}

/// Pointwise equality of two controls as functions of (time, path) on the
/// supplied observations and times.
pub fn agree_on(a: &ControlSpec, b: &ControlSpec, observations: &[&dyn Observation], times: &[f64]) -> bool {
    observations.iter().all(|obs| {
        times.iter().all(|&t| match (a.branch_at(t, *obs), b.branch_at(t, *obs)) {
            (Some(x), Some(y)) => x.alpha == y.alpha && x.beta == y.beta,
            (None, None) => true,
            _ => false,
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub index: usize,
    pub start: f64,
    pub partition: Result<(), PartitionDefect>,
    pub adapted: bool,
    /// Per branch: strict monotonicity of the jump map on the atoms.
    pub monotone: Vec<bool>,
    /// Per branch: pushforward `(∫1∧x², ∫_{|x|>1}|x|)`, `None` when the image is invalid.
    pub integrability: Vec<Option<(f64, f64)>>,
}

/// Verdicts of [`validate_control`]. Validation never errors; it reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub jump_bound: f64,
    pub cells: Vec<CellReport>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_control(c: &ControlSpec, f: &LevyBaseMeasure) -> ValidationReport {
    let atoms = f.locations();
    let mut failures = Vec::new();
    let mut alpha_min = f64::INFINITY;
    let mut alpha_max = f64::NEG_INFINITY;
    let mut jump_bound: f64 = 0.0;
    let mut cells = Vec::new();
    for (n, cell) in c.cells().iter().enumerate() {
        let start = c.cell_start(n);
        let preds: Vec<Predicate> = cell.branches.iter().map(|b| b.when.clone()).collect();
        let partition = check_partition(&preds);
        if let Err(defect) = &partition {
            failures.push(format!("cell {n}: branch events do not partition the path space ({defect:?})"));
        }
        let adapted = preds.iter().all(|p| p.latest_observation() <= start);
        if !adapted {
            failures.push(format!("cell {n}: a branch reads the path after the cell start {start}"));
        }
        let mut monotone = Vec::new();
        let mut integrability = Vec::new();
        for (b, branch) in cell.branches.iter().enumerate() {
            match branch.alpha.spectrum_bounds() {
                Some((lo, hi)) if lo > 0.0 && hi.is_finite() => {
                    alpha_min = alpha_min.min(lo);
                    alpha_max = alpha_max.max(hi);
                }
                _ => failures.push(format!("cell {n} branch {b}: α not positive definite")),
            }
            if let JumpMap::Linear { slope } = branch.beta {
                if slope <= 0.0 {
                    failures.push(format!("cell {n} branch {b}: jump map slope {slope} is not positive"));
                }
            }
            let mono = branch.beta.is_strictly_monotone_on(&atoms);
            if !mono {
                failures.push(format!("cell {n} branch {b}: jump map not strictly monotone on the atoms"));
            }
            monotone.push(mono);
            match branch.beta.bound_constant(&atoms) {
                Some(cb) => jump_bound = jump_bound.max(cb),
                None => failures.push(format!("cell {n} branch {b}: jump map undefined on an atom")),
            }
            let integ = pushforward(f, &branch.beta).ok().map(|p| p.integrability());
            match integ {
                Some((s, l)) if s.is_finite() && l.is_finite() => {}
                Some(_) => failures.push(format!("cell {n} branch {b}: pushforward not integrable")),
                None => failures.push(format!("cell {n} branch {b}: pushforward is not a valid measure")),
            }
            integrability.push(integ);
        }
        cells.push(CellReport { index: n, start, partition, adapted, monotone, integrability });
    }
    ValidationReport { alpha_min, alpha_max, jump_bound, cells, failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::make_base_measure;

    struct Fixed {
        state: f64,
        jumps: u32,
    }
    impl Observation for Fixed {
        fn state_at(&self, _t: f64) -> f64 {
            self.state
        }
        fn jumps_up_to(&self, _t: f64) -> u32 {
            self.jumps
        }
    }

    fn vol(a: f64) -> ControlSpec {
        ControlSpec::constant(1.0, Alpha::Scalar(a), JumpMap::identity())
    }

    #[test]
    fn concatenation_boundaries() {
        let (c1, c2) = (vol(1.0), vol(2.0));
        assert_eq!(concatenate(&c1, &c1, 0.3).unwrap().normalized(), c1);
        assert_eq!(concatenate(&c1, &c2, 0.0).unwrap(), c2);
        assert_eq!(concatenate(&c1, &c2, 1.0).unwrap(), c1);
        assert!(matches!(concatenate(&c1, &c2, 1.5), Err(LevyError::TimeOutOfRange { .. })));
        let mid = concatenate(&c1, &c2, 0.5).unwrap();
        let obs = Fixed { state: 0.0, jumps: 0 };
        assert_eq!(mid.branch_at(0.49, &obs).unwrap().alpha, Alpha::Scalar(1.0));
        assert_eq!(mid.branch_at(0.5, &obs).unwrap().alpha, Alpha::Scalar(2.0));
        assert_eq!(mid.branch_at(1.0, &obs).unwrap().alpha, Alpha::Scalar(2.0));
    }

    #[test]
    fn single_branch_bifurcation_is_concatenation() {
        let (base, c2) = (vol(1.0), vol(3.0));
        let b = bifurcate(&[(Predicate::Always, c2.clone())], 0.4, &base).unwrap();
        assert_eq!(b, concatenate(&base, &c2, 0.4).unwrap());
    }

    #[test]
    fn sign_bifurcation_with_same_payload_matches_concatenation() {
        let (base, c2) = (vol(1.0), vol(3.0));
        let b = bifurcate(
            &[
                (Predicate::StateAtLeast { at: 0.4, level: 0.0 }, c2.clone()),
                (Predicate::StateBelow { at: 0.4, level: 0.0 }, c2.clone()),
            ],
            0.4,
            &base,
        )
        .unwrap();
        let cat = concatenate(&base, &c2, 0.4).unwrap();
        let obs: Vec<Fixed> = [-1.0, 0.0, 2.0].iter().map(|&s| Fixed { state: s, jumps: 1 }).collect();
        let refs: Vec<&dyn Observation> = obs.iter().map(|o| o as &dyn Observation).collect();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        assert!(agree_on(&b, &cat, &refs, &times));
    }

    #[test]
    fn overlapping_events_are_rejected() {
        let p = Predicate::StateAtLeast { at: 0.4, level: 0.0 };
        let err = bifurcate(&[(p.clone(), vol(2.0)), (p, vol(3.0))], 0.4, &vol(1.0));
        assert!(matches!(err, Err(LevyError::NonPartition(PartitionDefect::Overlap { .. }))));
    }

    #[test]
    fn future_looking_event_is_rejected() {
        let p = Predicate::StateAtLeast { at: 0.6, level: 0.0 };
        let q = Predicate::StateBelow { at: 0.6, level: 0.0 };
        let err = bifurcate(&[(p, vol(2.0)), (q, vol(3.0))], 0.4, &vol(1.0));
        assert!(matches!(err, Err(LevyError::NotAdapted { .. })));
    }

    #[test]
    fn validation_verdicts() {
        let f = make_base_measure(&[(1.0, 2.0)]).unwrap();
        let ok = validate_control(&vol(1.0), &f);
        assert!(ok.passed(), "{:?}", ok.failures);
        assert_eq!((ok.alpha_min, ok.alpha_max), (1.0, 1.0));

        let zero = validate_control(&vol(0.0), &f);
        assert!(zero.failures.iter().any(|m| m.contains("α not positive definite")));

        let g = make_base_measure(&[(1.0, 1.0), (-1.0, 1.0), (0.5, 1.0), (-0.5, 1.0)]).unwrap();
        let cubic = JumpMap::tabulate(&g.locations(), |x| x * x * x - x);
        let c = ControlSpec::constant(1.0, Alpha::Scalar(1.0), cubic);
        let r = validate_control(&c, &g);
        assert!(!r.passed());
        assert_eq!(r.cells[0].monotone, vec![false]);
    }

    #[test]
    fn matrix_alpha_spectrum() {
        let a = Alpha::Matrix(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (lo, hi) = a.spectrum_bounds().unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
        assert!(!Alpha::Matrix(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_positive_definite());
    }
}
