use super::{PathBundle, PathError};

/// Density of the jump law with measure `f2` against the one with `f1` on
/// the same atoms, evaluated on each path:
/// `Π_i exp((λ1_i − λ2_i) T) (λ2_i / λ1_i)^{N_i}` where `N_i` counts the jumps
/// on atom `i`.
pub fn likelihood_ratio(
    bundle: &PathBundle,
    f1: &crate::levy::LevyBaseMeasure,
    f2: &crate::levy::LevyBaseMeasure,
) -> Result<Vec<f64>, PathError> {
    if !f1.same_support(f2) {
        return Err(PathError::AtomMismatch);
    }
    let horizon = bundle.horizon();
    let a1 = f1.atoms();
    let a2 = f2.atoms();
    let log_base: f64 = a1.iter().zip(a2).map(|(x, y)| (x.intensity - y.intensity) * horizon).sum();
    let log_ratio: Vec<f64> = a1.iter().zip(a2).map(|(x, y)| (y.intensity / x.intensity).ln()).collect();
    (0..bundle.n_paths())
        .map(|p| {
            let mut l = log_base;
            for j in bundle.jumps(p) {
                let i = f1.find_atom(j.size).ok_or(PathError::AtomMismatch)?;
                l += log_ratio[i];
            }
            Ok(l.exp())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::make_base_measure;
    use crate::paths::{simulate_reference, uniform_grid};
    use crate::stats::Estimate;

    #[test]
    fn ratio_has_unit_mean() {
        let f1 = make_base_measure(&[(1.0, 1.0), (-0.5, 2.0)]).unwrap();
        let f2 = make_base_measure(&[(1.0, 2.5), (-0.5, 0.5)]).unwrap();
        let b = simulate_reference(&f1, 100_000, &uniform_grid(1.0, 2), 4).unwrap();
        let l = likelihood_ratio(&b, &f1, &f2).unwrap();
        assert!(Estimate::from_samples(&l).within(1.0, 3.0));
    }

    #[test]
    fn reweighted_jump_count_matches_target_intensity() {
        let f1 = make_base_measure(&[(1.0, 1.0)]).unwrap();
        let f2 = make_base_measure(&[(1.0, 3.0)]).unwrap();
        let b = simulate_reference(&f1, 100_000, &uniform_grid(1.0, 2), 6).unwrap();
        let l = likelihood_ratio(&b, &f1, &f2).unwrap();
        let w: Vec<f64> = l.iter().enumerate().map(|(p, l)| l * b.jumps(p).len() as f64).collect();
        assert!(Estimate::from_samples(&w).within(3.0, 3.0));
    }

    #[test]
    fn rejects_different_supports() {
        let f1 = make_base_measure(&[(1.0, 1.0)]).unwrap();
        let f2 = make_base_measure(&[(2.0, 1.0)]).unwrap();
        let b = simulate_reference(&f1, 10, &uniform_grid(1.0, 2), 6).unwrap();
        assert_eq!(likelihood_ratio(&b, &f1, &f2).unwrap_err(), PathError::AtomMismatch);
    }
}
