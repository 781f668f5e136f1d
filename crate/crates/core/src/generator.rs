//! Drivers of the backward equations.
//!
//! A driver `F(t, x, y, z, u, a, ν)` is finite only on a domain of
//! volatilities `a` and compensators `ν`; outside it the value is the
//! explicit [`DriverValue::OutOfDomain`] flag. Drivers are either given in
//! closed form or obtained as the conjugate of a map `H(γ, ṽ)` over finite
//! grids ([`fenchel_transform`]).
//!
//! Jump arguments `u` are vectors aligned with the atoms of `ν`, so
//! `∫ u γ dν` is the finite sum `Σ u_i γ_i λ_i`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::levy::{same_point, LevyBaseMeasure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("control grid is empty")]
    EmptyGrid,
    #[error("measure atoms do not match the grid atoms")]
    AtomMismatch,
    #[error("bad interval: {0}")]
    BadInterval(String),
    #[error("unknown generator `{0}`")]
    Unknown(String),
    #[error("generator `{name}`: {message}")]
    BadParameter { name: String, message: String },
}

/// Arguments of a driver evaluation. `u[i]` is the jump response at atom `i`
/// of `nu`.
#[derive(Debug, Clone, Copy)]
pub struct DriverArgs<'a> {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: &'a [f64],
    pub a: f64,
    pub nu: &'a LevyBaseMeasure,
}

/// Owned version of [`DriverArgs`], used for validation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: Vec<f64>,
    pub a: f64,
    pub nu: LevyBaseMeasure,
}

impl DriverSample {
    pub fn args(&self) -> DriverArgs<'_> {
        DriverArgs { t: self.t, x: self.x, y: self.y, z: self.z, u: &self.u, a: self.a, nu: &self.nu }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriverValue {
    Finite(f64),
    OutOfDomain,
}

impl DriverValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            DriverValue::Finite(v) => Some(v),
            DriverValue::OutOfDomain => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, DriverValue::Finite(_))
    }
}

/// Closed interval of volatilities; a singleton when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainA {
    pub lo: f64,
    pub hi: f64,
}

impl DomainA {
    pub fn singleton(a: f64) -> Self {
        DomainA { lo: a, hi: a }
    }

    /// Every positive volatility.
    pub fn positive() -> Self {
        DomainA { lo: f64::MIN_POSITIVE, hi: f64::INFINITY }
    }

    pub fn contains(&self, a: f64) -> bool {
        let tol = 1e-12 * a.abs().max(1.0);
        a > 0.0 && a >= self.lo - tol && a <= self.hi + tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainNu {
    Any,
    /// Finitely many admissible compensators.
    Catalog(Vec<LevyBaseMeasure>),
    /// Fixed atom locations with intensities in a box; an atom with
    /// intensity 0 may be absent from the measure.
    IntensityBox { locations: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
}

fn same_measure(a: &LevyBaseMeasure, b: &LevyBaseMeasure) -> bool {
    a.same_support(b)
        && a.atoms().iter().all(|x| {
            let y = &b.atoms()[b.find_atom(x.location).expect("same support")];
            same_point(x.intensity, y.intensity)
        })
}

/// Intensities of `nu` on `locations` (0 for absent atoms), or `None` when
/// `nu` charges some other location.
fn intensities_on(nu: &LevyBaseMeasure, locations: &[f64]) -> Option<Vec<f64>> {
    if nu.atoms().iter().any(|a| !locations.iter().any(|&l| same_point(l, a.location))) {
        return None;
    }
    Some(locations.iter().map(|&l| nu.find_atom(l).map_or(0.0, |i| nu.atoms()[i].intensity)).collect())
}

impl DomainNu {
    pub fn contains(&self, nu: &LevyBaseMeasure) -> bool {
        match self {
            DomainNu::Any => true,
            DomainNu::Catalog(ms) => ms.iter().any(|m| same_measure(m, nu)),
            DomainNu::IntensityBox { locations, lo, hi } => match intensities_on(nu, locations) {
                Some(ls) => ls.iter().zip(lo.iter().zip(hi)).all(|(&l, (&lo, &hi))| {
                    let tol = 1e-12 * l.abs().max(1.0);
                    l >= lo - tol && l <= hi + tol
                }),
                None => false,
            },
        }
    }
}

/// Constants `(c1, c2, δ)` bounding the jump sensitivity kernel:
/// `c1 (1∧|x|) ≤ γ(x) ≤ c2 (1∧|x|)` with `−1+δ ≤ c1 ≤ 0 ≤ c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEnvelope {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
}

impl JumpEnvelope {
    pub fn is_admissible(&self) -> bool {
        self.delta > 0.0 && self.c1 >= -1.0 + self.delta && self.c1 <= 0.0 && self.c2 >= 0.0
    }
}

impl Default for JumpEnvelope {
    fn default() -> Self {
        JumpEnvelope { c1: 0.0, c2: 0.0, delta: 1.0 }
    }
}

pub type DriverFn = Arc<dyn Fn(&DriverArgs) -> DriverValue + Send + Sync>;

/// A driver together with its domain and declared regularity constants.
#[derive(Clone)]
pub struct GeneratorSpec {
    pub name: String,
    driver: DriverFn,
    pub domain_a: DomainA,
    pub domain_nu: DomainNu,
    pub lipschitz_y: f64,
    pub lipschitz_z: f64,
    pub jump_env: JumpEnvelope,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("domain_a", &self.domain_a)
            .field("domain_nu", &self.domain_nu)
            .field("lipschitz_y", &self.lipschitz_y)
            .field("lipschitz_z", &self.lipschitz_z)
            .field("jump_env", &self.jump_env)
            .finish_non_exhaustive()
    }
}

impl GeneratorSpec {
    /// Driver finite on the whole domain.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&DriverArgs) -> f64 + Send + Sync + 'static,
        domain_a: DomainA,
        domain_nu: DomainNu,
    ) -> Self {
        GeneratorSpec {
            name: name.into(),
            driver: Arc::new(move |args| DriverValue::Finite(f(args))),
            domain_a,
            domain_nu,
            lipschitz_y: 0.0,
            lipschitz_z: 0.0,
            jump_env: JumpEnvelope::default(),
        }
    }

    /// Driver that may itself report points outside its domain.
    pub fn from_partial(name: impl Into<String>, driver: DriverFn, domain_a: DomainA, domain_nu: DomainNu) -> Self {
        GeneratorSpec {
            name: name.into(),
            driver,
            domain_a,
            domain_nu,
            lipschitz_y: 0.0,
            lipschitz_z: 0.0,
            jump_env: JumpEnvelope::default(),
        }
    }

    pub fn with_lipschitz(mut self, y: f64, z: f64) -> Self {
        self.lipschitz_y = y;
        self.lipschitz_z = z;
        self
    }

    pub fn with_jump_envelope(mut self, env: JumpEnvelope) -> Self {
        self.jump_env = env;
        self
    }

    pub fn in_domain(&self, a: f64, nu: &LevyBaseMeasure) -> bool {
        self.domain_a.contains(a) && self.domain_nu.contains(nu)
    }

    pub fn eval(&self, args: &DriverArgs) -> DriverValue {
        if !self.in_domain(args.a, args.nu) {
            return DriverValue::OutOfDomain;
        }
        (self.driver)(args)
    }

    /// `F(t, x, 0, 0, 0, a, ν)`.
    pub fn at_zero(&self, t: f64, x: f64, a: f64, nu: &LevyBaseMeasure) -> DriverValue {
        let u = vec![0.0; nu.len()];
        self.eval(&DriverArgs { t, x, y: 0.0, z: 0.0, u: &u, a, nu })
    }
}

/// `F ≡ 0` on every volatility and compensator.
pub fn zero_generator() -> GeneratorSpec {
    GeneratorSpec::new("zero", |_| 0.0, DomainA::positive(), DomainNu::Any)
}

/// `F = −c y`, on every volatility and compensator.
pub fn discount_generator(c: f64) -> GeneratorSpec {
    GeneratorSpec::new("discount", move |a| -c * a.y, DomainA::positive(), DomainNu::Any).with_lipschitz(c.abs(), 0.0)
}

/// Classical driver `f` under the single measure with unit volatility and
/// compensator `nu_star`.
pub fn make_linear_generator(
    f: impl Fn(&DriverArgs) -> f64 + Send + Sync + 'static,
    nu_star: LevyBaseMeasure,
) -> GeneratorSpec {
    GeneratorSpec::new("linear", f, DomainA::singleton(1.0), DomainNu::Catalog(vec![nu_star]))
}

/// Indicator driver of the volatility interval `[a1, a2]` and the
/// single-atom intensity interval `[lam1, lam2]` at `atom`.
pub fn make_glevy_generator(a1: f64, a2: f64, lam1: f64, lam2: f64, atom: f64) -> Result<GeneratorSpec, GeneratorError> {
    if !(a1 > 0.0 && a1 <= a2 && a2.is_finite()) {
        return Err(GeneratorError::BadInterval(format!("volatility [{a1}, {a2}]")));
    }
    if !(lam1 >= 0.0 && lam1 <= lam2 && lam2.is_finite()) {
        return Err(GeneratorError::BadInterval(format!("intensity [{lam1}, {lam2}]")));
    }
    if atom == 0.0 || !atom.is_finite() {
        return Err(GeneratorError::BadInterval(format!("atom {atom}")));
    }
    let nu = DomainNu::IntensityBox { locations: vec![atom], lo: vec![lam1], hi: vec![lam2] };
    Ok(GeneratorSpec::new("glevy", |_| 0.0, DomainA { lo: a1, hi: a2 }, nu))
}

/// Arguments of `H`.
#[derive(Debug, Clone, Copy)]
pub struct HArgs<'a> {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: &'a [f64],
    pub gamma: f64,
    pub v: &'a [f64],
}

pub type HFn = Arc<dyn Fn(&HArgs) -> f64 + Send + Sync>;

/// `H(γ, ṽ)` with finite grids: `grid_gamma` for `γ` and one grid per atom
/// for `ṽ`; the conjugate searches their product.
#[derive(Clone)]
pub struct HSpec {
    h: HFn,
    pub atoms: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub grid_v: Vec<Vec<f64>>,
}

impl fmt::Debug for HSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HSpec")
            .field("atoms", &self.atoms)
            .field("grid_gamma", &self.grid_gamma)
            .field("grid_v", &self.grid_v)
            .finish_non_exhaustive()
    }
}

fn sorted_grid(mut g: Vec<f64>) -> Result<Vec<f64>, GeneratorError> {
    if g.is_empty() || g.iter().any(|x| !x.is_finite()) {
        return Err(GeneratorError::EmptyGrid);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

impl HSpec {
    pub fn new(
        h: impl Fn(&HArgs) -> f64 + Send + Sync + 'static,
        atoms: Vec<f64>,
        grid_gamma: Vec<f64>,
        grid_v: Vec<Vec<f64>>,
    ) -> Result<Self, GeneratorError> {
        if grid_v.len() != atoms.len() {
            return Err(GeneratorError::AtomMismatch);
        }
        Ok(HSpec {
            h: Arc::new(h),
            atoms,
            grid_gamma: sorted_grid(grid_gamma)?,
            grid_v: grid_v.into_iter().map(sorted_grid).collect::<Result<_, _>>()?,
        })
    }

    pub fn eval(&self, args: &HArgs) -> f64 {
        (self.h)(args)
    }
}

/// `H = ½γ + Σ ṽ_i λ*_i − f(y, z, u)`: the map whose conjugate is `f` at
/// `(1, ν*)` and infinite elsewhere.
pub fn linear_h(
    f: impl Fn(&HArgs) -> f64 + Send + Sync + 'static,
    nu_star: &LevyBaseMeasure,
    grid_gamma: Vec<f64>,
    grid_v: Vec<Vec<f64>>,
) -> Result<HSpec, GeneratorError> {
    let lam = nu_star.intensities();
    HSpec::new(
        move |h| 0.5 * h.gamma + h.v.iter().zip(&lam).map(|(v, l)| v * l).sum::<f64>() - f(h),
        nu_star.locations(),
        grid_gamma,
        grid_v,
    )
}

/// `H(γ, ṽ) = sup_{a ∈ [a1,a2], λ ∈ [λ1,λ2]} ½aγ + ṽλ` for one atom.
pub fn glevy_h(
    a1: f64,
    a2: f64,
    lam1: f64,
    lam2: f64,
    atom: f64,
    grid_gamma: Vec<f64>,
    grid_v: Vec<f64>,
) -> Result<HSpec, GeneratorError> {
    make_glevy_generator(a1, a2, lam1, lam2, atom)?;
    HSpec::new(
        move |h| 0.5 * (a1 * h.gamma).max(a2 * h.gamma) + (lam1 * h.v[0]).max(lam2 * h.v[0]),
        vec![atom],
        grid_gamma,
        vec![grid_v],
    )
}

/// Conjugate `sup_{γ, ṽ} ½ a γ + Σ ṽ_i λ_i − H(γ, ṽ)` over the product grid.
///
/// When the maximiser sits on the edge of the grid and the objective still
/// increases strictly towards that edge, the supremum over the unrestricted
/// domain is infinite and the result is [`DriverValue::OutOfDomain`].
pub fn fenchel_transform(h: &HSpec, args: &DriverArgs) -> Result<DriverValue, GeneratorError> {
    if h.grid_gamma.is_empty() || h.grid_v.iter().any(Vec::is_empty) {
        return Err(GeneratorError::EmptyGrid);
    }
    let lam = intensities_on(args.nu, &h.atoms).ok_or(GeneratorError::AtomMismatch)?;
    let dims: Vec<usize> = std::iter::once(h.grid_gamma.len()).chain(h.grid_v.iter().map(Vec::len)).collect();
    let mut v = vec![0.0; h.atoms.len()];
    let mut objective = |idx: &[usize]| {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = h.grid_v[i][idx[i + 1]];
        }
        let gamma = h.grid_gamma[idx[0]];
        let ha = HArgs { t: args.t, x: args.x, y: args.y, z: args.z, u: args.u, gamma, v: &v };
        0.5 * args.a * gamma + v.iter().zip(&lam).map(|(v, l)| v * l).sum::<f64>() - h.eval(&ha)
    };
    let mut idx = vec![0usize; dims.len()];
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = idx.clone();
    loop {
        let o = objective(&idx);
        if o > best {
            best = o;
            best_idx.clone_from(&idx);
        }
        let mut d = 0;
        while d < dims.len() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims.len() {
            break;
        }
    }
    let tol = 1e-12 * best.abs().max(1.0);
    for d in 0..dims.len() {
        if dims[d] < 2 {
            continue;
        }
        let inward = if best_idx[d] == 0 {
            1
        } else if best_idx[d] == dims[d] - 1 {
            dims[d] - 2
        } else {
            continue;
        };
        let mut n = best_idx.clone();
        n[d] = inward;
        if best > objective(&n) + tol {
            return Ok(DriverValue::OutOfDomain);
        }
    }
    Ok(DriverValue::Finite(best))
}

/// Generator whose driver is the grid conjugate of `h`.
pub fn make_fenchel_generator(name: impl Into<String>, h: HSpec, domain_a: DomainA, domain_nu: DomainNu) -> GeneratorSpec {
    let driver: DriverFn = Arc::new(move |args| fenchel_transform(&h, args).unwrap_or(DriverValue::OutOfDomain));
    GeneratorSpec::from_partial(name, driver, domain_a, domain_nu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub estimate_y: f64,
    pub estimate_z: f64,
    pub declared_y: f64,
    pub declared_z: f64,
    pub passed: bool,
}

fn finite_at(g: &GeneratorSpec, s: &DriverSample, y: f64, z: f64) -> Option<f64> {
    g.eval(&DriverArgs { y, z, ..s.args() }).finite()
}

/// Largest difference quotients in `y` and in `a^{1/2} z` over all sample
/// pairs. For a pair `(s, s')` only the coordinate under test is taken from
/// `s'`; everything else stays at `s`.
pub fn check_lipschitz(g: &GeneratorSpec, samples: &[DriverSample]) -> LipschitzReport {
    let mut ky: f64 = 0.0;
    let mut kz: f64 = 0.0;
    for s in samples {
        let Some(base) = finite_at(g, s, s.y, s.z) else { continue };
        for t in samples {
            if t.y != s.y {
                if let Some(v) = finite_at(g, s, t.y, s.z) {
                    ky = ky.max((v - base).abs() / (t.y - s.y).abs());
                }
            }
            if t.z != s.z {
                if let Some(v) = finite_at(g, s, s.y, t.z) {
                    kz = kz.max((v - base).abs() / (s.a.sqrt() * (t.z - s.z).abs()));
                }
            }
        }
    }
    let slack = 1.0 + 1e-6;
    LipschitzReport {
        estimate_y: ky,
        estimate_z: kz,
        declared_y: g.lipschitz_y,
        declared_z: g.lipschitz_z,
        passed: ky <= g.lipschitz_y * slack && kz <= g.lipschitz_z * slack,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Smallest and largest observed `D / Σ δu_i λ_i (1∧|x_i|)`.
    pub c1: f64,
    pub c2: f64,
    /// Per sample, the constant `c` with `γ = c (1∧|x|)` reproducing the
    /// observed difference (0 when `δu` pairs to zero).
    pub witness: Vec<f64>,
    pub failures: Vec<String>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `∫δu γ' dν ≤ F(u¹) − F(u²) ≤ ∫δu γ dν` for kernels inside the
/// declared envelope. The achievable pairings form an interval whose ends
/// use `c1` or `c2` atom by atom according to the sign of `δu`.
pub fn check_jump_monotonicity(g: &GeneratorSpec, samples: &[(DriverSample, Vec<f64>)]) -> MonotonicityReport {
    let env = g.jump_env;
    let mut failures = Vec::new();
    if !env.is_admissible() {
        failures.push(format!(
            "envelope (c1={}, c2={}, δ={}) violates −1+δ ≤ c1 ≤ 0 ≤ c2, δ > 0",
            env.c1, env.c2, env.delta
        ));
    }
    let (mut c1, mut c2) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut witness = Vec::with_capacity(samples.len());
    for (n, (s, u2)) in samples.iter().enumerate() {
        let f1 = g.eval(&s.args()).finite();
        let f2 = g.eval(&DriverArgs { u: u2, ..s.args() }).finite();
        let (Some(f1), Some(f2)) = (f1, f2) else {
            failures.push(format!("sample {n}: driver outside its domain"));
            witness.push(0.0);
            continue;
        };
        let d = f1 - f2;
        let (mut lo, mut hi, mut pairing) = (0.0, 0.0, 0.0);
        for (i, atom) in s.nu.atoms().iter().enumerate() {
            let w = (s.u[i] - u2[i]) * atom.intensity * atom.location.abs().min(1.0);
            pairing += w;
            let (a, b) = (w * env.c1, w * env.c2);
            lo += a.min(b);
            hi += a.max(b);
        }
        let tol = 1e-9 * d.abs().max(pairing.abs()).max(1.0);
        if d < lo - tol || d > hi + tol {
            failures.push(format!("sample {n}: difference {d} outside [{lo}, {hi}]"));
        }
        let r = if pairing.abs() > 1e-300 { d / pairing } else { 0.0 };
        if pairing.abs() > 1e-300 {
            c1 = c1.min(r);
            c2 = c2.max(r);
        } else if d.abs() > tol {
            failures.push(format!("sample {n}: difference {d} with zero jump pairing"));
        }
        witness.push(r);
    }
    if c1 > c2 {
        c1 = 0.0;
        c2 = 0.0;
    }
    MonotonicityReport { c1, c2, witness, failures }
}

/// Named generator parameters as read from a config file.
pub type GeneratorParams = BTreeMap<String, f64>;

pub type GeneratorBuilder = Arc<dyn Fn(&GeneratorParams) -> Result<GeneratorSpec, GeneratorError> + Send + Sync>;

/// Name → constructor table used by the experiment runner. Custom drivers
/// are added with [`GeneratorRegistry::register`].
#[derive(Clone)]
pub struct GeneratorRegistry {
    builders: BTreeMap<String, GeneratorBuilder>,
}

fn param(name: &str, p: &GeneratorParams, key: &str) -> Result<f64, GeneratorError> {
    p.get(key).copied().ok_or_else(|| GeneratorError::BadParameter {
        name: name.to_string(),
        message: format!("missing parameter `{key}`"),
    })
}

fn only_keys(name: &str, p: &GeneratorParams, keys: &[&str]) -> Result<(), GeneratorError> {
    match p.keys().find(|k| !keys.contains(&k.as_str())) {
        Some(k) => Err(GeneratorError::BadParameter { name: name.to_string(), message: format!("unknown parameter `{k}`") }),
        None => Ok(()),
    }
}

impl Default for GeneratorRegistry {
    /// Built-ins: `zero`, `discount {c}`, `glevy {a1, a2, lam1, lam2, atom}`.
    fn default() -> Self {
        let mut r = GeneratorRegistry { builders: BTreeMap::new() };
        r.register("zero", |p| {
            only_keys("zero", p, &[])?;
            Ok(zero_generator())
        });
        r.register("discount", |p| {
            only_keys("discount", p, &["c"])?;
            Ok(discount_generator(param("discount", p, "c")?))
        });
        r.register("glevy", |p| {
            only_keys("glevy", p, &["a1", "a2", "lam1", "lam2", "atom"])?;
            let get = |k| param("glevy", p, k);
            make_glevy_generator(get("a1")?, get("a2")?, get("lam1")?, get("lam2")?, get("atom")?)
        });
        r
    }
}

impl GeneratorRegistry {
    pub fn register(
        &mut self,
        name: &str,
        build: impl Fn(&GeneratorParams) -> Result<GeneratorSpec, GeneratorError> + Send + Sync + 'static,
    ) {
        self.builders.insert(name.to_string(), Arc::new(build));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &GeneratorParams) -> Result<GeneratorSpec, GeneratorError> {
        let b = self.builders.get(name).ok_or_else(|| GeneratorError::Unknown(name.to_string()))?;
        b(params)
    }
}
