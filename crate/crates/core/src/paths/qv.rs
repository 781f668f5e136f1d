use super::{PathBundle, PathError};
use crate::stats::Estimate;

/// Backward-window realized volatility per path and step.
#[derive(Debug, Clone, PartialEq)]
pub struct QvEstimate {
    pub window: usize,
    n_paths: usize,
    n_steps: usize,
    values: Vec<f64>,
}

impl QvEstimate {
    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.values[p * self.n_steps + k]
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_steps..(p + 1) * self.n_steps]
    }

    /// Cross-path mean of the estimate on step `k`.
    pub fn mean_at(&self, k: usize) -> Estimate {
        let xs: Vec<f64> = (0..self.n_paths).map(|p| self.value(p, k)).collect();
        Estimate::from_samples(&xs)
    }
}

/// Estimates `â` on step `k` from the squared grid increments with the
/// recorded jumps removed, averaged over steps `k+1−window ..= k` (fewer
/// near the start of the grid).
pub fn estimate_qv_density(bundle: &PathBundle, window: usize) -> Result<QvEstimate, PathError> {
    let n = bundle.n_steps();
    if window == 0 || window > n {
        return Err(PathError::WindowTooLarge { window, steps: n });
    }
    let mut values = Vec::with_capacity(bundle.n_paths() * n);
    for p in 0..bundle.n_paths() {
        let sq: Vec<f64> = (0..n)
            .map(|k| {
                let jumps: f64 = bundle.jumps_in_step(p, k).iter().map(|j| j.size).sum();
                let d = bundle.value(p, k + 1) - bundle.value(p, k) - jumps;
                d * d
            })
            .collect();
        for k in 0..n {
            let lo = (k + 1).saturating_sub(window);
            let num: f64 = sq[lo..=k].iter().sum();
            let den = bundle.grid()[k + 1] - bundle.grid()[lo];
            values.push(num / den);
        }
    }
    Ok(QvEstimate { window, n_paths: bundle.n_paths(), n_steps: n, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{make_base_measure, Alpha, ControlSpec, JumpMap};
    use crate::paths::{apply_control, simulate_reference, uniform_grid};

    #[test]
    fn window_must_fit_grid() {
        let b = simulate_reference(&crate::levy::LevyBaseMeasure::zero(), 4, &uniform_grid(1.0, 10), 1).unwrap();
        assert_eq!(estimate_qv_density(&b, 11).unwrap_err(), PathError::WindowTooLarge { window: 11, steps: 10 });
        assert!(estimate_qv_density(&b, 0).is_err());
    }

    #[test]
    fn recovers_constant_volatility_with_jumps() {
        let f = make_base_measure(&[(0.8, 3.0), (-0.4, 2.0)]).unwrap();
        let grid = uniform_grid(1.0, 400);
        let b = simulate_reference(&f, 200, &grid, 8).unwrap();
        let c = ControlSpec::constant(1.0, Alpha::Scalar(0.36), JumpMap::linear(1.2));
        let x = apply_control(&b, &c, &f).unwrap();
        let q = estimate_qv_density(&x, 50).unwrap();
        for k in 49..400 {
            let m = q.mean_at(k).mean;
            assert!((m - 0.36).abs() <= 0.1 * 0.36, "step {k}: {m}");
        }
    }
}
