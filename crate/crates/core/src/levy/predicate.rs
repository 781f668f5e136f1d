use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// What a control may look at when it branches: the path value and the
/// running jump count at past observation times.
pub trait Observation {
    fn state_at(&self, t: f64) -> f64;
    fn jumps_up_to(&self, t: f64) -> u32;
}

/// Event selector from the fixed vocabulary of threshold tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum Predicate {
    Always,
    /// `B_at >= level`
    StateAtLeast { at: f64, level: f64 },
    /// `B_at < level`
    StateBelow { at: f64, level: f64 },
    /// `N_at >= count`
    JumpsAtLeast { at: f64, count: u32 },
    /// `N_at < count`
    JumpsBelow { at: f64, count: u32 },
    All { of: Vec<Predicate> },
}

impl Predicate {
    pub fn eval(&self, obs: &dyn Observation) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::StateAtLeast { at, level } => obs.state_at(*at) >= *level,
            Predicate::StateBelow { at, level } => obs.state_at(*at) < *level,
            Predicate::JumpsAtLeast { at, count } => obs.jumps_up_to(*at) >= *count,
            Predicate::JumpsBelow { at, count } => obs.jumps_up_to(*at) < *count,
            Predicate::All { of } => of.iter().all(|p| p.eval(obs)),
        }
    }

    /// Conjunction with trivial factors removed.
    pub fn and(self, other: Predicate) -> Predicate {
        match (self, other) {
            (Predicate::Always, p) | (p, Predicate::Always) => p,
            (Predicate::All { mut of }, Predicate::All { of: rest }) => {
                of.extend(rest);
                Predicate::All { of }
            }
            (Predicate::All { mut of }, p) => {
                of.push(p);
                Predicate::All { of }
            }
            (p, Predicate::All { mut of }) => {
                of.insert(0, p);
                Predicate::All { of }
            }
            (a, b) => Predicate::All { of: vec![a, b] },
        }
    }

    /// Latest time the predicate reads.
    pub fn latest_observation(&self) -> f64 {
        match self {
            Predicate::Always => 0.0,
            Predicate::StateAtLeast { at, .. }
            | Predicate::StateBelow { at, .. }
            | Predicate::JumpsAtLeast { at, .. }
            | Predicate::JumpsBelow { at, .. } => *at,
            Predicate::All { of } => of.iter().map(Predicate::latest_observation).fold(0.0, f64::max),
        }
    }

    fn collect_thresholds(&self, states: &mut BTreeMap<Key, Vec<f64>>, jumps: &mut BTreeMap<Key, Vec<u32>>) {
        match self {
            Predicate::Always => {}
            Predicate::StateAtLeast { at, level } | Predicate::StateBelow { at, level } => {
                states.entry(Key(*at)).or_default().push(*level)
            }
            Predicate::JumpsAtLeast { at, count } | Predicate::JumpsBelow { at, count } => {
                jumps.entry(Key(*at)).or_default().push(*count)
            }
            Predicate::All { of } => of.iter().for_each(|p| p.collect_thresholds(states, jumps)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Outcome of a failed partition test with the offending sample point.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionDefect {
    Overlap { branches: Vec<usize>, witness: String },
    Gap { witness: String },
}

struct Assignment<'a> {
    states: &'a [(f64, f64)],
    jumps: &'a [(f64, u32)],
}

impl Observation for Assignment<'_> {
    fn state_at(&self, t: f64) -> f64 {
        self.states.iter().find(|(s, _)| *s == t).map(|p| p.1).unwrap_or(0.0)
    }
    fn jumps_up_to(&self, t: f64) -> u32 {
        // latest assigned observation not after t
        self.jumps.iter().filter(|(s, _)| *s <= t).last().map(|p| p.1).unwrap_or(0)
    }
}

const MAX_SAMPLE_POINTS: usize = 1 << 20;

/// Checks that exactly one predicate holds at every reachable sample point.
/// Overlaps are reported in preference to gaps.
///
/// Sample points are built from every threshold in use (each level, the
/// midpoints between levels and points outside the range), which visits every
/// region cut out by the threshold tests. Jump-count assignments that decrease
/// in time are unreachable and skipped.
pub fn check_partition(predicates: &[Predicate]) -> Result<(), PartitionDefect> {
    let mut states: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut jumps: BTreeMap<Key, Vec<u32>> = BTreeMap::new();
    for p in predicates {
        p.collect_thresholds(&mut states, &mut jumps);
    }
    let state_axes: Vec<(f64, Vec<f64>)> = states
        .into_iter()
        .map(|(k, mut levels)| {
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            let mut pts = vec![levels[0] - 1.0, levels[levels.len() - 1] + 1.0];
            pts.extend(levels.iter().copied());
            pts.extend(levels.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            (k.0, pts)
        })
        .collect();
    let jump_axes: Vec<(f64, Vec<u32>)> = jumps
        .into_iter()
        .map(|(k, counts)| {
            let mut pts = vec![0u32];
            for c in counts {
                pts.push(c);
                pts.push(c.saturating_sub(1));
                pts.push(c + 1);
            }
            pts.sort_unstable();
            pts.dedup();
            (k.0, pts)
        })
        .collect();
    let total: usize = state_axes
        .iter()
        .map(|a| a.1.len())
        .chain(jump_axes.iter().map(|a| a.1.len()))
        .try_fold(1usize, |acc, n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    assert!(total <= MAX_SAMPLE_POINTS, "partition check needs {total} sample points");

    let mut idx = vec![0usize; state_axes.len() + jump_axes.len()];
    let mut st: Vec<(f64, f64)> = state_axes.iter().map(|a| (a.0, 0.0)).collect();
    let mut jp: Vec<(f64, u32)> = jump_axes.iter().map(|a| (a.0, 0)).collect();
    let mut first_gap = None;
    loop {
        for (i, a) in state_axes.iter().enumerate() {
            st[i].1 = a.1[idx[i]];
        }
        for (i, a) in jump_axes.iter().enumerate() {
            jp[i].1 = a.1[idx[state_axes.len() + i]];
        }
        let reachable = jp.windows(2).all(|w| w[0].1 <= w[1].1);
        if reachable {
            let obs = Assignment { states: &st, jumps: &jp };
            let hits: Vec<usize> =
                predicates.iter().enumerate().filter(|(_, p)| p.eval(&obs)).map(|(i, _)| i).collect();
            let witness = || format!("states {st:?}, jump counts {jp:?}");
            match hits.len() {
                1 => {}
                0 => {
                    if first_gap.is_none() {
                        first_gap = Some(PartitionDefect::Gap { witness: witness() });
                    }
                }
                _ => return Err(PartitionDefect::Overlap { branches: hits, witness: witness() }),
            }
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d == idx.len() {
                return first_gap.map_or(Ok(()), Err);
            }
            let len = if d < state_axes.len() { state_axes[d].1.len() } else { jump_axes[d - state_axes.len()].1.len() };
            idx[d] += 1;
            if idx[d] < len {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_split_is_a_partition() {
        let p = [Predicate::StateAtLeast { at: 0.5, level: 0.0 }, Predicate::StateBelow { at: 0.5, level: 0.0 }];
        assert_eq!(check_partition(&p), Ok(()));
    }

    #[test]
    fn duplicated_branch_overlaps() {
        let p = [Predicate::StateAtLeast { at: 0.5, level: 0.0 }, Predicate::StateAtLeast { at: 0.5, level: 0.0 }];
        assert!(matches!(check_partition(&p), Err(PartitionDefect::Overlap { .. })));
    }

    #[test]
    fn shifted_thresholds_leave_a_gap() {
        let p = [Predicate::StateAtLeast { at: 0.5, level: 1.0 }, Predicate::StateBelow { at: 0.5, level: 0.0 }];
        assert!(matches!(check_partition(&p), Err(PartitionDefect::Gap { .. })));
    }

    #[test]
    fn nested_jump_and_state_split() {
        let s_hi = Predicate::StateAtLeast { at: 0.25, level: 0.0 };
        let s_lo = Predicate::StateBelow { at: 0.25, level: 0.0 };
        let j_hi = Predicate::JumpsAtLeast { at: 0.5, count: 2 };
        let j_lo = Predicate::JumpsBelow { at: 0.5, count: 2 };
        let p = [
            s_hi.clone().and(j_hi.clone()),
            s_hi.and(j_lo.clone()),
            s_lo.clone().and(j_hi),
            s_lo.and(j_lo),
        ];
        assert_eq!(check_partition(&p), Ok(()));
    }

    #[test]
    fn always_alone_is_a_partition() {
        assert_eq!(check_partition(&[Predicate::Always]), Ok(()));
        assert!(check_partition(&[]).is_err());
    }
}
