//! Stochastic exponentials of discretized martingales with jumps bounded
//! below, their negative powers, and the constant `C_{n,δ}` with
//! `(1+x)^{-n} - 1 + nx <= C x²` on `[-1+δ, ∞)`.
//!
//! A [`MartingalePath`] stores the continuous part of `M` per step (the
//! Brownian increment together with the jump compensator drift), the
//! predictable bracket `⟨M^c⟩` at the grid nodes, and the jumps at their
//! exact times. With that split the exponential is exact:
//!
//! ```text
//! E(M)_t = exp(M^c_t - ½⟨M^c⟩_t) · Π_{s<=t} (1 + ΔM_s)
//! ```

use std::fmt::Write as _;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::{path_stream, StreamDomain};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MartingaleError {
    #[error("jump of size {size} at t={time} is below the floor -1+{delta}")]
    JumpBelowFloor { time: f64, size: f64, delta: f64 },
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("order must be at least 1")]
    BadOrder,
    #[error("bracket decreases at node {0}")]
    BracketDecreasing(usize),
    #[error("negative power must be nonnegative, got {0}")]
    BadPower(f64),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    /// Index `k` of the step `(t_k, t_{k+1}]` holding the jump.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    grid: Vec<f64>,
    cont: Vec<f64>,
    bracket: Vec<f64>,
    jumps: Vec<Jump>,
    delta: f64,
    /// `(size, intensity)` of the jump law, used for the compensator of
    /// negative powers.
    law: Vec<(f64, f64)>,
}

impl MartingalePath {
    pub fn new(
        grid: Vec<f64>,
        cont: Vec<f64>,
        bracket: Vec<f64>,
        mut jumps: Vec<Jump>,
        delta: f64,
        law: Vec<(f64, f64)>,
    ) -> Result<Self, MartingaleError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MartingaleError::BadDelta(delta));
        }
        let n = grid.len().checked_sub(1).filter(|&n| n > 0).ok_or(MartingaleError::Shape("grid needs two points".into()))?;
        if cont.len() != n || bracket.len() != n + 1 {
            return Err(MartingaleError::Shape(format!(
                "expected {n} increments and {} bracket values, got {} and {}",
                n + 1,
                cont.len(),
                bracket.len()
            )));
        }
        if let Some(k) = (0..n).find(|&k| bracket[k + 1] < bracket[k]) {
            return Err(MartingaleError::BracketDecreasing(k + 1));
        }
        let floor = -1.0 + delta;
        let sizes = jumps.iter().map(|j| (j.time, j.size)).chain(law.iter().map(|&(size, _)| (f64::NAN, size)));
        for (time, size) in sizes {
            if !(size >= floor) {
                return Err(MartingaleError::JumpBelowFloor { time, size, delta });
            }
        }
        if let Some(j) = jumps.iter().find(|j| j.step >= n) {
            return Err(MartingaleError::Shape(format!("jump at step {} beyond grid", j.step)));
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(MartingalePath { grid, cont, bracket, jumps, delta, law })
    }

    pub fn zero(grid: Vec<f64>) -> Self {
        let n = grid.len() - 1;
        MartingalePath { grid, cont: vec![0.0; n], bracket: vec![0.0; n + 1], jumps: vec![], delta: 0.5, law: vec![] }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.cont.len()
    }

    pub fn cont_increments(&self) -> &[f64] {
        &self.cont
    }

    pub fn bracket(&self) -> &[f64] {
        &self.bracket
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn law(&self) -> &[(f64, f64)] {
        &self.law
    }

    /// `M` at the grid nodes.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.grid.len()];
        let mut it = self.jumps.iter().peekable();
        for k in 0..self.n_steps() {
            v[k + 1] = v[k] + self.cont[k];
            while let Some(j) = it.next_if(|j| j.step == k) {
                v[k + 1] += j.size;
            }
        }
        v
    }
}

/// `E(M)` at the grid nodes; jumps inside a step are applied before the node
/// closing it.
pub fn doleans_exponential(m: &MartingalePath) -> Vec<f64> {
    let mut log = 0.0;
    let mut out = Vec::with_capacity(m.grid.len());
    out.push(1.0);
    let mut it = m.jumps.iter().peekable();
    for k in 0..m.n_steps() {
        log += m.cont[k] - 0.5 * (m.bracket[k + 1] - m.bracket[k]);
        while let Some(j) = it.next_if(|j| j.step == k) {
            log += j.size.ln_1p();
        }
        out.push(log.exp());
    }
    out
}

/// `M + N + [M, N]` for two paths on one grid. `cross` holds `⟨M^c, N^c⟩`
/// at the nodes; simultaneous jumps contribute `ΔM ΔN`.
pub fn yor_sum(m: &MartingalePath, n: &MartingalePath, cross: &[f64]) -> Result<MartingalePath, MartingaleError> {
    if m.grid != n.grid || cross.len() != m.grid.len() {
        return Err(MartingaleError::Shape("paths must share one grid".into()));
    }
    let steps = m.n_steps();
    let cont = (0..steps).map(|k| m.cont[k] + n.cont[k] + cross[k + 1] - cross[k]).collect();
    let bracket = (0..=steps).map(|k| m.bracket[k] + n.bracket[k] + 2.0 * cross[k]).collect();
    let mut jumps: Vec<Jump> = Vec::with_capacity(m.jumps.len() + n.jumps.len());
    let (mut i, mut j) = (0, 0);
    while i < m.jumps.len() || j < n.jumps.len() {
        let a = m.jumps.get(i);
        let b = n.jumps.get(j);
        match (a, b) {
            (Some(a), Some(b)) if a.time == b.time => {
                jumps.push(Jump { size: a.size + b.size + a.size * b.size, ..*a });
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a.time < b.time => {
                jumps.push(*a);
                i += 1;
            }
            (Some(a), None) => {
                jumps.push(*a);
                i += 1;
            }
            (_, Some(b)) => {
                jumps.push(*b);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    // (1+a)(1+b) >= δ_m δ_n, so the product floor is admissible.
    let delta = m.delta * n.delta;
    MartingalePath::new(m.grid.clone(), cont, bracket, jumps, delta, vec![])
}

/// `E(M)^{-λ} = E(Ñ) · exp(A)` with
/// `A = ½λ(λ+1)⟨M^c⟩ + V`, `V_t = t Σ ℓ ((1+β)^{-λ} - 1 + λβ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePower {
    pub lambda: f64,
    pub n_tilde: MartingalePath,
    /// `A` at the grid nodes.
    pub a: Vec<f64>,
    /// `V` at the grid nodes.
    pub v: Vec<f64>,
}

impl NegativePower {
    /// `E(Ñ)·exp(A)` at the grid nodes.
    pub fn product(&self) -> Vec<f64> {
        doleans_exponential(&self.n_tilde).iter().zip(&self.a).map(|(e, a)| e * a.exp()).collect()
    }

    /// Largest relative gap between [`NegativePower::product`] and `E(M)^{-λ}`.
    pub fn max_relative_error(&self, m: &MartingalePath) -> f64 {
        let direct = doleans_exponential(m);
        self.product()
            .iter()
            .zip(direct)
            .map(|(p, d)| {
                let d = d.powf(-self.lambda);
                (p - d).abs() / d
            })
            .fold(0.0, f64::max)
    }
}

/// Per-unit-time rate of `V` for a jump law `(β, ℓ)`.
pub fn v_rate(law: &[(f64, f64)], lambda: f64) -> f64 {
    law.iter().map(|&(b, l)| l * ((1.0 + b).powf(-lambda) - 1.0 + lambda * b)).sum()
}

pub fn decompose_negative_power(m: &MartingalePath, lambda: f64) -> Result<NegativePower, MartingaleError> {
    if !(lambda >= 0.0) {
        return Err(MartingaleError::BadPower(lambda));
    }
    let rate = v_rate(&m.law, lambda);
    let t0 = m.grid[0];
    let v: Vec<f64> = m.grid.iter().map(|&t| rate * (t - t0)).collect();
    let a: Vec<f64> = m.bracket.iter().zip(&v).map(|(q, v)| 0.5 * lambda * (lambda + 1.0) * q + v).collect();
    let cont = (0..m.n_steps()).map(|k| -lambda * m.cont[k] - (v[k + 1] - v[k])).collect();
    let bracket = m.bracket.iter().map(|q| lambda * lambda * q).collect();
    let power = |s: f64| (1.0 + s).powf(-lambda) - 1.0;
    let jumps: Vec<Jump> = m.jumps.iter().map(|j| Jump { size: power(j.size), ..*j }).collect();
    let law: Vec<(f64, f64)> = m.law.iter().map(|&(b, l)| (power(b), l)).collect();
    let lowest = jumps.iter().map(|j| j.size).chain(law.iter().map(|p| p.0)).fold(0.0, f64::min);
    let delta = (0.5 * (1.0 + lowest)).min(0.5);
    let n_tilde = MartingalePath::new(m.grid.clone(), cont, bracket, jumps, delta, law)?;
    Ok(NegativePower { lambda, n_tilde, a, v })
}

/// `M = σB + Σ_j β_j (N_j - ℓ_j t)` with independent Poisson `N_j` of
/// intensity `ℓ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMartingale {
    pub sigma: f64,
    /// `(β, ℓ)` pairs.
    pub atoms: Vec<(f64, f64)>,
    pub delta: f64,
}

impl LevyMartingale {
    pub fn check(&self) -> Result<(), MartingaleError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MartingaleError::BadDelta(self.delta));
        }
        match self.atoms.iter().find(|(b, _)| !(*b >= -1.0 + self.delta)) {
            Some(&(size, _)) => Err(MartingaleError::JumpBelowFloor { time: f64::NAN, size, delta: self.delta }),
            None => Ok(()),
        }
    }

    /// `E[E(M)_t^{-λ}] = exp(½λ(λ+1)σ²t + t Σ ℓ((1+β)^{-λ} - 1 + λβ))`.
    pub fn negative_moment(&self, lambda: f64, t: f64) -> f64 {
        (0.5 * lambda * (lambda + 1.0) * self.sigma * self.sigma * t + t * v_rate(&self.atoms, lambda)).exp()
    }

    fn drift(&self) -> f64 {
        -self.atoms.iter().map(|(b, l)| b * l).sum::<f64>()
    }

    /// One path on `grid`, stream `path` of `seed`.
    pub fn sample_path(&self, grid: &[f64], seed: u64, path: u64) -> Result<MartingalePath, MartingaleError> {
        self.check()?;
        let mut rng = path_stream(seed, StreamDomain::MartingaleMoments, path);
        let n = grid.len().saturating_sub(1);
        let s2 = self.sigma * self.sigma;
        let drift = self.drift();
        let cont = (0..n)
            .map(|k| {
                let dt = grid[k + 1] - grid[k];
                self.sigma * dt.sqrt() * rng.normal() + drift * dt
            })
            .collect();
        let bracket = grid.iter().map(|t| s2 * (t - grid[0])).collect();
        let horizon = grid[n];
        let mut jumps = Vec::new();
        for &(beta, l) in &self.atoms {
            if l <= 0.0 {
                continue;
            }
            let mut t = grid[0] + rng.exp1() / l;
            while t <= horizon {
                let step = grid.partition_point(|&g| g < t).saturating_sub(1).min(n - 1);
                jumps.push(Jump { time: t, size: beta, step });
                t += rng.exp1() / l;
            }
        }
        MartingalePath::new(grid.to_vec(), cont, bracket, jumps, self.delta, self.atoms.clone())
    }

    /// `E(M)_t^{-λ}` drawn exactly from `B_t` and the Poisson counts.
    fn sample_negative_power(&self, lambda: f64, t: f64, seed: u64, path: u64) -> f64 {
        let mut rng = path_stream(seed, StreamDomain::MartingaleMoments, path);
        let mut log = self.sigma * t.sqrt() * rng.normal() - 0.5 * self.sigma * self.sigma * t + self.drift() * t;
        for &(beta, l) in &self.atoms {
            if l * t > 0.0 {
                let count: f64 = Poisson::new(l * t).expect("positive mean").sample(rng.inner());
                log += count * beta.ln_1p();
            }
        }
        (-lambda * log).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub estimate: Estimate,
    pub closed_form: Option<f64>,
    /// Estimates on the nested prefixes `n/8, n/4, n/2, n`.
    pub levels: Vec<Estimate>,
    /// Set when successive prefix estimates disagree by more than three
    /// combined standard errors or the relative SE grows with `n`. A
    /// heuristic only: it cannot tell a huge finite moment from an
    /// infinite one.
    pub diverging: bool,
}

/// Monte Carlo estimate of `E[E(M)_t^{-λ}]`.
pub fn negative_moment_mc(
    spec: &LevyMartingale,
    lambda: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<MomentEstimate, MartingaleError> {
    spec.check()?;
    if !(lambda >= 0.0) {
        return Err(MartingaleError::BadPower(lambda));
    }
    let closed_form = Some(spec.negative_moment(lambda, t));
    if lambda == 0.0 {
        let e = Estimate { mean: 1.0, se: 0.0, n: n_paths };
        return Ok(MomentEstimate { estimate: e, closed_form, levels: vec![e], diverging: false });
    }
    let samples: Vec<f64> =
        (0..n_paths as u64).into_par_iter().map(|p| spec.sample_negative_power(lambda, t, seed, p)).collect();
    let levels: Vec<Estimate> = [8, 4, 2, 1]
        .iter()
        .map(|d| n_paths / d)
        .filter(|&n| n >= 2)
        .map(|n| Estimate::from_samples(&samples[..n]))
        .collect();
    let diverging = levels.windows(2).any(|w| {
        let jump = (w[1].mean - w[0].mean).abs() > 3.0 * w[0].se.hypot(w[1].se);
        let rel = |e: &Estimate| e.se / e.mean.abs().max(f64::MIN_POSITIVE);
        jump || rel(&w[1]) > rel(&w[0]) * 1.5
    });
    Ok(MomentEstimate { estimate: Estimate::from_samples(&samples), closed_form, levels, diverging })
}

/// Numeric `C_{n,δ}` with the data certifying it.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityConstant {
    pub n: u32,
    pub delta: f64,
    pub c: f64,
    pub argmax: f64,
    /// Limit of the ratio at `x = 0`, `n(n+1)/2`.
    pub taylor: f64,
    /// Bound `n / x_max` on the ratio beyond the sweep.
    pub tail_bound: f64,
    pub n_points: usize,
}

impl InequalityConstant {
    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{},{},{},{},{}", self.n, self.delta, self.c, self.argmax, self.taylor, self.tail_bound);
        s
    }
}

/// `((1+x)^{-n} - 1 + nx) / x²`, by its power series near zero.
pub fn inequality_ratio(n: u32, x: f64) -> f64 {
    let n = n as f64;
    if x.abs() < 1e-3 {
        // Σ_{k>=2} binom(-n, k) x^{k-2}
        let mut coeff = n * (n + 1.0) / 2.0;
        let mut sum = coeff;
        let mut pow = 1.0;
        for k in 3..12 {
            coeff *= -(n + k as f64 - 1.0) / k as f64;
            pow *= x;
            sum += coeff * pow;
        }
        return sum;
    }
    ((1.0 + x).powf(-n) - 1.0 + n * x) / (x * x)
}

const SWEEP_POINTS: usize = 100_000;
const X_MAX: f64 = 1e6;

pub fn inequality_constant(n: u32, delta: f64) -> Result<InequalityConstant, MartingaleError> {
    if n == 0 {
        return Err(MartingaleError::BadOrder);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MartingaleError::BadDelta(delta));
    }
    let lo = -1.0 + delta;
    let half = SWEEP_POINTS / 2;
    let tiny: f64 = 1e-8;
    let log_space = |a: f64, b: f64, i: usize, m: usize| (a.ln() + (b.ln() - a.ln()) * i as f64 / (m - 1) as f64).exp();
    let mut xs: Vec<f64> = Vec::with_capacity(SWEEP_POINTS + 1);
    xs.extend((0..half).map(|i| -log_space(tiny, -lo, half - 1 - i, half)));
    xs.push(0.0);
    xs.extend((0..half).map(|i| log_space(tiny, X_MAX, i, half)));
    let ratio = |x: f64| inequality_ratio(n, x);
    let mut best = 0;
    let vals: Vec<f64> = xs.iter().map(|&x| ratio(x)).collect();
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    let (mut c, mut argmax) = (vals[best], xs[best]);
    if best > 0 && best + 1 < xs.len() {
        let (x, v) = golden_max(ratio, xs[best - 1], xs[best + 1]);
        if v > c {
            c = v;
            argmax = x;
        }
    }
    let tail_bound = n as f64 / X_MAX;
    Ok(InequalityConstant {
        n,
        delta,
        c: c.max(tail_bound),
        argmax,
        taylor: n as f64 * (n as f64 + 1.0) / 2.0,
        tail_bound,
        n_points: xs.len(),
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
