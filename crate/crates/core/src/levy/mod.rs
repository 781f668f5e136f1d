//! Base jump measures, admissible controls and the separable-class algebra.
//!
//! A controlled measure is described by a base Lévy measure `F` (finitely many
//! atoms) and a control `(alpha, beta)`: a volatility `alpha` and a jump map
//! `beta`, both piecewise constant between deterministic breakpoints and
//! allowed to branch on threshold events of the path observed so far.
//! Controls are built from constants with [`concatenate`] and [`bifurcate`].

mod catalog;
mod control;
mod jump_map;
mod measure;
mod predicate;

pub use catalog::{ControlEntry, ModelCatalog};
pub use control::{
    agree_on, bifurcate, concatenate, validate_control, Alpha, Branch, Cell, CellReport, ControlSpec,
    ValidationReport,
};
pub use jump_map::{JumpMap, TablePoint};
pub use measure::{make_base_measure, pushforward, Atom, LevyBaseMeasure};
pub(crate) use measure::same_point;
pub use predicate::{check_partition, Observation, PartitionDefect, Predicate};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    #[error("atom at location 0")]
    ZeroAtom,
    #[error("atom at {location} has non-positive intensity {intensity}")]
    NonpositiveIntensity { location: f64, intensity: f64 },
    #[error("duplicate atom at {location}")]
    DuplicateAtom { location: f64 },
    #[error("non-finite atom data")]
    NonFinite,
    #[error("atoms {first} and {second} have the same image")]
    NonInjectiveMap { first: f64, second: f64 },
    #[error("jump map undefined at atom {location}")]
    MapUndefined { location: f64 },
    #[error("jump map sends atom {location} to zero")]
    DegenerateImage { location: f64 },
    #[error("measures do not share atom locations")]
    AtomMismatch,
    #[error("breakpoints must start at 0, increase strictly and match the cells")]
    BadBreakpoints,
    #[error("controls have different horizons")]
    HorizonMismatch,
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("event reads the path at {at}, after the branching time {t}")]
    NotAdapted { at: f64, t: f64 },
    #[error("branch events do not partition the path space: {0:?}")]
    NonPartition(PartitionDefect),
    #[error("config: {0}")]
    Config(String),
}
