use serde::{Deserialize, Serialize};

use super::{JumpMap, LevyError};

/// One point mass of a finite-activity jump intensity measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    /// Expected number of jumps of this size per unit time.
    pub intensity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMeasure {
    #[serde(default)]
    label: String,
    #[serde(default)]
    atoms: Vec<Atom>,
}

/// Finite-activity Lévy measure given by a list of atoms.
///
/// Atom order is significant: pushforwards map atoms index by index, so the
/// `i`-th atom of `pushforward(F, beta)` is the image of the `i`-th atom of `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct LevyBaseMeasure {
    label: String,
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for LevyBaseMeasure {
    type Error = LevyError;

    fn try_from(raw: RawMeasure) -> Result<Self, Self::Error> {
        let pairs: Vec<(f64, f64)> = raw.atoms.iter().map(|a| (a.location, a.intensity)).collect();
        Ok(make_base_measure(&pairs)?.with_label(raw.label))
    }
}

impl From<LevyBaseMeasure> for RawMeasure {
    fn from(m: LevyBaseMeasure) -> Self {
        RawMeasure { label: m.label, atoms: m.atoms }
    }
}

/// Builds a validated measure from `(location, intensity)` pairs.
pub fn make_base_measure(atoms: &[(f64, f64)]) -> Result<LevyBaseMeasure, LevyError> {
    let mut out = Vec::with_capacity(atoms.len());
    for &(location, intensity) in atoms {
        if !location.is_finite() || !intensity.is_finite() {
            return Err(LevyError::NonFinite);
        }
        if location == 0.0 {
            return Err(LevyError::ZeroAtom);
        }
        if intensity <= 0.0 {
            return Err(LevyError::NonpositiveIntensity { location, intensity });
        }
        if out.iter().any(|a: &Atom| a.location == location) {
            return Err(LevyError::DuplicateAtom { location });
        }
        out.push(Atom { location, intensity });
    }
    let m = LevyBaseMeasure { label: String::new(), atoms: out };
    let (small, large) = m.integrability();
    if !small.is_finite() || !large.is_finite() || !m.total_intensity().is_finite() {
        return Err(LevyError::NonFinite);
    }
    Ok(m)
}

impl LevyBaseMeasure {
    /// Measure with no atoms: the pure-diffusion case.
    pub fn zero() -> Self {
        LevyBaseMeasure { label: "zero".into(), atoms: Vec::new() }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.location).collect()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.intensity).collect()
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity).sum()
    }

    /// `∫ x ν(dx)`: the drift that compensates the jumps per unit time.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity * a.location).sum()
    }

    /// `∫ x² ν(dx)`.
    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity * a.location * a.location).sum()
    }

    /// `(∫ 1∧x² ν(dx), ∫_{|x|>1} |x| ν(dx))`.
    pub fn integrability(&self) -> (f64, f64) {
        let small = self.atoms.iter().map(|a| a.intensity * (a.location * a.location).min(1.0)).sum();
        let large = self
            .atoms
            .iter()
            .filter(|a| a.location.abs() > 1.0)
            .map(|a| a.intensity * a.location.abs())
            .sum();
        (small, large)
    }

    /// Index of the atom at `location`, matched up to a relative tolerance.
    pub fn find_atom(&self, location: f64) -> Option<usize> {
        self.atoms.iter().position(|a| same_point(a.location, location))
    }

    /// True when both measures charge exactly the same set of locations.
    pub fn same_support(&self, other: &LevyBaseMeasure) -> bool {
        self.len() == other.len() && self.atoms.iter().all(|a| other.find_atom(a.location).is_some())
    }

    /// Replaces the intensities, keeping the atom locations.
    pub fn with_intensities(&self, intensities: &[f64]) -> Result<LevyBaseMeasure, LevyError> {
        if intensities.len() != self.atoms.len() {
            return Err(LevyError::AtomMismatch);
        }
        let pairs: Vec<(f64, f64)> =
            self.atoms.iter().zip(intensities).map(|(a, &l)| (a.location, l)).collect();
        Ok(make_base_measure(&pairs)?.with_label(self.label.clone()))
    }
}

pub(crate) fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Image of `f` under `beta`: atoms `(beta(x_i), lambda_i)`.
pub fn pushforward(f: &LevyBaseMeasure, beta: &JumpMap) -> Result<LevyBaseMeasure, LevyError> {
    let mut atoms = Vec::with_capacity(f.len());
    for a in f.atoms() {
        let y = beta.apply(a.location).ok_or(LevyError::MapUndefined { location: a.location })?;
        if y == 0.0 || !y.is_finite() {
            return Err(LevyError::DegenerateImage { location: a.location });
        }
        if let Some(prev) = atoms.iter().position(|b: &Atom| same_point(b.location, y)) {
            return Err(LevyError::NonInjectiveMap { first: f.atoms()[prev].location, second: a.location });
        }
        atoms.push(Atom { location: y, intensity: a.intensity });
    }
    Ok(LevyBaseMeasure { label: format!("{}#{}", f.label, beta.tag()), atoms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_atom_measure_has_mass_six() {
        let m = make_base_measure(&[(1.0, 2.0), (-1.0, 4.0)]).unwrap();
        assert_eq!(m.total_intensity(), 6.0);
        assert_eq!(m.first_moment(), -2.0);
    }

    #[test]
    fn empty_list_is_pure_diffusion() {
        let m = make_base_measure(&[]).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.total_intensity(), 0.0);
    }

    #[test]
    fn rejects_zero_intensity_and_zero_atom() {
        assert!(matches!(make_base_measure(&[(1.0, 0.0)]), Err(LevyError::NonpositiveIntensity { .. })));
        assert!(matches!(make_base_measure(&[(0.0, 1.0)]), Err(LevyError::ZeroAtom)));
    }

    #[test]
    fn pushforward_scales_locations() {
        let f = make_base_measure(&[(1.0, 2.0), (-1.0, 4.0)]).unwrap();
        let p = pushforward(&f, &JumpMap::linear(2.0)).unwrap();
        assert_eq!(p.atoms(), &[Atom { location: 2.0, intensity: 2.0 }, Atom { location: -2.0, intensity: 4.0 }]);
        assert_eq!(p.total_intensity(), f.total_intensity());
    }

    #[test]
    fn identity_pushforward_is_noop() {
        let f = make_base_measure(&[(1.0, 3.5)]).unwrap();
        let p = pushforward(&f, &JumpMap::identity()).unwrap();
        assert_eq!(p.atoms(), f.atoms());
    }

    #[test]
    fn square_map_collides() {
        let f = make_base_measure(&[(1.0, 2.0), (-1.0, 4.0)]).unwrap();
        let sq = JumpMap::tabulate(&f.locations(), |x| x * x);
        assert!(matches!(pushforward(&f, &sq), Err(LevyError::NonInjectiveMap { .. })));
    }
}
