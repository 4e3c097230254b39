//! The length law `P_τ` and the pinning law `P_Z`.
//!
//! `P_Z` is stored as an explicit Lebesgue decomposition
//! `a_sd·P^sd + a_sc·P^sc + a_ac·P^ac`: a finite atom list, a Cantor-type
//! singular-continuous part (the classical middle-thirds measure, affinely
//! placed), and a named absolutely continuous density. The singular support
//! `𝒵` (atoms ∪ Cantor set) has Lebesgue measure zero by construction and
//! carries the membership oracle that drives the conditional-law branches.
//!
//! `P_τ` is atoms plus an optional density part on `(0, ∞)`; length
//! integrals use half-open windows `(a, b]`, matching the `{t < τ}` /
//! `{τ ≤ t}` event algebra of the bridge formulas.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal as NormalDist, Uniform as UniformDist};
use serde::{Deserialize, Serialize};

use crate::density::LevyModel;
use crate::error::{Error, Result};
use crate::quad::{self, QuadratureConfig};

const WEIGHT_TOL: f64 = 1e-12;

/// Named absolutely continuous densities for `f_Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcDensity {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, std_dev: f64 },
    /// Piecewise-linear table; normalized to unit mass at validation.
    PiecewiseLinear { xs: Vec<f64>, ys: Vec<f64> },
}

impl AcDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            AcDensity::Uniform { lower, upper } => {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::invalid("uniform density needs finite lower < upper"));
                }
            }
            AcDensity::Normal { std_dev, mean } => {
                if !(std_dev > &0.0) || !mean.is_finite() {
                    return Err(Error::invalid("normal density needs σ > 0 and finite mean"));
                }
            }
            AcDensity::PiecewiseLinear { xs, ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return Err(Error::invalid(
                        "piecewise-linear density needs matching xs/ys with at least 2 nodes",
                    ));
                }
                if xs.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("piecewise-linear xs must be strictly increasing"));
                }
                if ys.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
                    return Err(Error::invalid("piecewise-linear ys must be nonnegative"));
                }
                if self.raw_mass() <= 0.0 {
                    return Err(Error::invalid("piecewise-linear table has zero mass"));
                }
            }
        }
        Ok(())
    }

    fn raw_mass(&self) -> f64 {
        match self {
            AcDensity::PiecewiseLinear { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
                .sum(),
            _ => 1.0,
        }
    }

    /// Density value at `x` (normalized to unit mass).
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            AcDensity::Uniform { lower, upper } => {
                if x >= *lower && x <= *upper {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            AcDensity::Normal { mean, std_dev } => {
                crate::density::normal_pdf(x, *mean, std_dev * std_dev)
            }
            AcDensity::PiecewiseLinear { xs, ys } => {
                if x < xs[0] || x > *xs.last().unwrap() {
                    return 0.0;
                }
                let i = match xs.partition_point(|&v| v <= x) {
                    0 => 0,
                    p => (p - 1).min(xs.len() - 2),
                };
                let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
                (ys[i] + w * (ys[i + 1] - ys[i])) / self.raw_mass()
            }
        }
    }

    /// Support interval (may be infinite for the normal family).
    pub fn support(&self) -> (f64, f64) {
        match self {
            AcDensity::Uniform { lower, upper } => (*lower, *upper),
            AcDensity::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            AcDensity::PiecewiseLinear { xs, .. } => (xs[0], *xs.last().unwrap()),
        }
    }

    /// `∫ g(x) f(x) dx` over the support.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, cfg: &QuadratureConfig) -> Result<f64> {
        let (lo, hi) = self.support();
        quad::integrate(|x| g(x) * self.pdf(x), lo, hi, cfg)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            AcDensity::Uniform { lower, upper } => {
                UniformDist::new(*lower, *upper).unwrap().sample(rng)
            }
            AcDensity::Normal { mean, std_dev } => {
                NormalDist::new(*mean, *std_dev).unwrap().sample(rng)
            }
            AcDensity::PiecewiseLinear { xs, ys } => {
                // Inversion through the piecewise-quadratic CDF.
                let mass = self.raw_mass();
                let u: f64 = rng.random::<f64>() * mass;
                let mut cum = 0.0;
                for i in 0..xs.len() - 1 {
                    let dx = xs[i + 1] - xs[i];
                    let cell = 0.5 * (ys[i] + ys[i + 1]) * dx;
                    if cum + cell >= u || i == xs.len() - 2 {
                        let target = u - cum;
                        let (y0, slope) = (ys[i], (ys[i + 1] - ys[i]) / dx);
                        // Solve y0·s + slope·s²/2 = target on s ∈ [0, dx].
                        let s = if slope.abs() < 1e-14 * y0.max(1.0) {
                            if y0 > 0.0 {
                                target / y0
                            } else {
                                0.5 * dx
                            }
                        } else {
                            let disc = (y0 * y0 + 2.0 * slope * target).max(0.0);
                            (disc.sqrt() - y0) / slope
                        };
                        return xs[i] + s.clamp(0.0, dx);
                    }
                    cum += cell;
                }
                unreachable!("cdf inversion walked past the last cell")
            }
        }
    }
}

/// Affinely placed middle-thirds Cantor measure on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub lower: f64,
    pub upper: f64,
    /// Depth of the self-similar approximation used by integration
    /// (2^depth evaluation points).
    #[serde(default = "default_cantor_depth")]
    pub integration_depth: u32,
}

fn default_cantor_depth() -> u32 {
    20
}

/// Number of random ternary digits drawn per Cantor sample.
pub const CANTOR_SAMPLE_DIGITS: u32 = 52;
/// Starting tolerance of the membership walk, covering the rounding of the
/// digit sum plus the affine support map. The tolerance triples per level,
/// so levels beyond f64 resolution pass automatically: the test decides a
/// conservative superset of the depth-52 set, exactly at the sampler's
/// representable resolution.
const CANTOR_WALK_TOL: f64 = 1e-14;

impl CantorSpec {
    pub fn unit() -> Self {
        CantorSpec {
            lower: 0.0,
            upper: 1.0,
            integration_depth: default_cantor_depth(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::invalid("Cantor support needs finite lower < upper"));
        }
        if self.integration_depth < 1 || self.integration_depth > 26 {
            return Err(Error::invalid(
                "Cantor integration depth must lie in 1..=26 (2^depth evaluation points)",
            ));
        }
        Ok(())
    }

    /// Membership in (a conservative superset of) the Cantor set: walks the
    /// ternary expansion to `CANTOR_SAMPLE_DIGITS` levels rejecting middle
    /// thirds, with a tolerance band that grows with the level so that
    /// every value produced by [`CantorSpec::sample`] re-identifies.
    pub fn contains(&self, x: f64) -> bool {
        if !(x >= self.lower && x <= self.upper) {
            return false;
        }
        let mut w = (x - self.lower) / (self.upper - self.lower);
        let mut tol = CANTOR_WALK_TOL;
        for _ in 0..CANTOR_SAMPLE_DIGITS {
            if tol >= 1.0 / 6.0 {
                return true;
            }
            if w >= -tol && w <= 1.0 / 3.0 + tol {
                w *= 3.0;
            } else if w >= 2.0 / 3.0 - tol && w <= 1.0 + tol {
                w = 3.0 * w - 2.0;
            } else {
                return false;
            }
            tol *= 3.0;
        }
        true
    }

    /// Draws `Σ c_i 3^{-i}` with `CANTOR_SAMPLE_DIGITS` random digits
    /// `c_i ∈ {0, 2}`, affinely mapped onto the support. The digit sum is
    /// accumulated exactly in integer arithmetic and rounded once.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let bits: u64 = rng.random();
        let mut numer: u128 = 0;
        for i in 0..CANTOR_SAMPLE_DIGITS {
            let digit = ((bits >> i) & 1) * 2;
            numer = numer * 3 + digit as u128;
        }
        let denom = 3u128.pow(CANTOR_SAMPLE_DIGITS);
        let unit = numer as f64 / denom as f64;
        self.lower + (self.upper - self.lower) * unit
    }

    /// Depth-`d` self-similar approximation of `∫ g dμ`: the equal-weight
    /// average of `g` over the `2^d` left endpoints of the surviving
    /// middle-thirds intervals. The error is bounded by
    /// `ω · (upper - lower) · 3^{-d}` for `ω`-Lipschitz `g`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, depth: u32) -> Result<f64> {
        if depth < 1 || depth > 26 {
            return Err(Error::invalid("Cantor integration depth must lie in 1..=26"));
        }
        let width = self.upper - self.lower;
        let offsets: Vec<f64> = (1..=depth)
            .map(|i| 2.0 * 3f64.powi(-(i as i32)) * width)
            .collect();
        let n: u64 = 1 << depth;
        let mut x = self.lower;
        let mut sum = g(x);
        let mut gray: u64 = 0;
        for k in 1..n {
            // Consecutive Gray codes differ in exactly one digit.
            let bit = k.trailing_zeros();
            gray ^= 1 << bit;
            if gray & (1 << bit) != 0 {
                x += offsets[bit as usize];
            } else {
                x -= offsets[bit as usize];
            }
            if k & 0xfff == 0 {
                // Rebuild from digits to keep float drift negligible.
                x = self.lower
                    + (0..depth)
                        .filter(|&i| gray & (1 << i) != 0)
                        .map(|i| offsets[i as usize])
                        .sum::<f64>();
            }
            sum += g(x);
        }
        Ok(sum / n as f64)
    }

    /// Error bound of [`CantorSpec::integrate`] for a Lipschitz integrand.
    pub fn integration_error_bound(&self, lipschitz: f64, depth: u32) -> f64 {
        lipschitz * (self.upper - self.lower) * 3f64.powi(-(depth as i32))
    }
}

/// Which part of the Lebesgue decomposition a pin draw came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PinComponent {
    Discrete,
    SingularContinuous,
    AbsolutelyContinuous,
}

/// A draw from the pinning law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinSample {
    pub value: f64,
    pub component: PinComponent,
}

/// The pinning law `P_Z` as an explicit three-part Lebesgue decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinningMeasure {
    /// Weight `a_sd` of the discrete part.
    pub weight_discrete: f64,
    /// Weight `a_sc` of the singular-continuous part.
    pub weight_singular: f64,
    /// Weight `a_ac` of the absolutely continuous part.
    pub weight_ac: f64,
    /// Atom locations with probabilities summing to 1 within the part.
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pub cantor: Option<CantorSpec>,
    #[serde(default)]
    pub ac_density: Option<AcDensity>,
}

impl PinningMeasure {
    /// Purely discrete law on the given atoms.
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let pm = PinningMeasure {
            weight_discrete: 1.0,
            weight_singular: 0.0,
            weight_ac: 0.0,
            atoms,
            cantor: None,
            ac_density: None,
        };
        pm.validate()?;
        Ok(pm)
    }

    /// Purely absolutely continuous law.
    pub fn absolutely_continuous(density: AcDensity) -> Result<Self> {
        let pm = PinningMeasure {
            weight_discrete: 0.0,
            weight_singular: 0.0,
            weight_ac: 1.0,
            atoms: Vec::new(),
            cantor: None,
            ac_density: Some(density),
        };
        pm.validate()?;
        Ok(pm)
    }

    /// Pure Cantor law on the given support.
    pub fn cantor(spec: CantorSpec) -> Result<Self> {
        let pm = PinningMeasure {
            weight_discrete: 0.0,
            weight_singular: 1.0,
            weight_ac: 0.0,
            atoms: Vec::new(),
            cantor: Some(spec),
            ac_density: None,
        };
        pm.validate()?;
        Ok(pm)
    }

    pub fn mixed(
        weights: (f64, f64, f64),
        atoms: Vec<(f64, f64)>,
        cantor: Option<CantorSpec>,
        ac_density: Option<AcDensity>,
    ) -> Result<Self> {
        let pm = PinningMeasure {
            weight_discrete: weights.0,
            weight_singular: weights.1,
            weight_ac: weights.2,
            atoms,
            cantor,
            ac_density,
        };
        pm.validate()?;
        Ok(pm)
    }

    pub fn a_ac(&self) -> f64 {
        self.weight_ac
    }

    pub fn validate(&self) -> Result<()> {
        let (asd, asc, aac) = (self.weight_discrete, self.weight_singular, self.weight_ac);
        if !(asd >= 0.0 && asc >= 0.0 && aac >= 0.0) {
            return Err(Error::invalid("pinning weights must be nonnegative"));
        }
        if (asd + asc + aac - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!(
                "pinning weights must sum to 1, got {}",
                asd + asc + aac
            )));
        }
        if asd > 0.0 {
            if self.atoms.is_empty() {
                return Err(Error::invalid("a_sd > 0 requires atoms"));
            }
            let total: f64 = self.atoms.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::invalid(format!(
                    "atom probabilities must sum to 1, got {total}"
                )));
            }
            if self
                .atoms
                .iter()
                .any(|&(z, p)| !z.is_finite() || !(p >= 0.0))
            {
                return Err(Error::invalid("atoms need finite locations and p ≥ 0"));
            }
        }
        if asc > 0.0 {
            match &self.cantor {
                Some(spec) => spec.validate()?,
                None => return Err(Error::invalid("a_sc > 0 requires a Cantor spec")),
            }
        }
        if aac > 0.0 {
            match &self.ac_density {
                Some(d) => d.validate()?,
                None => return Err(Error::invalid("a_ac > 0 requires an AC density")),
            }
        }
        Ok(())
    }

    /// Membership oracle for the singular support `𝒵`: exact equality with
    /// a stored atom, or the Cantor ternary-expansion walk. Lebesgue-a.e.
    /// reals test negative; every sampled atom or Cantor value re-identifies
    /// because sampled values are reused bit-for-bit.
    pub fn in_singular_support(&self, x: f64) -> bool {
        if self.weight_discrete > 0.0 && self.atoms.iter().any(|&(z, _)| z == x) {
            return true;
        }
        if self.weight_singular > 0.0 {
            if let Some(spec) = &self.cantor {
                return spec.contains(x);
            }
        }
        false
    }

    /// `f_Z(x)`: density of the AC part (without the `a_ac` weight).
    pub fn ac_pdf(&self, x: f64) -> f64 {
        match &self.ac_density {
            Some(d) if self.weight_ac > 0.0 => d.pdf(x),
            _ => 0.0,
        }
    }

    /// `∫ g dP_Z = a_sd·Σ p_i g(z_i) + a_sc·CantorIntegral(g) + a_ac·∫ g f_Z`.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, cfg: &QuadratureConfig) -> Result<f64> {
        let mut total = 0.0;
        if self.weight_discrete > 0.0 {
            let part: f64 = self.atoms.iter().map(|&(z, p)| p * g(z)).sum();
            total += self.weight_discrete * part;
        }
        if self.weight_singular > 0.0 {
            let spec = self
                .cantor
                .as_ref()
                .ok_or_else(|| Error::invalid("missing Cantor spec"))?;
            total += self.weight_singular * spec.integrate(&g, spec.integration_depth)?;
        }
        if self.weight_ac > 0.0 {
            let d = self
                .ac_density
                .as_ref()
                .ok_or_else(|| Error::invalid("missing AC density"))?;
            total += self.weight_ac * d.integrate(&g, cfg)?;
        }
        Ok(total)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PinSample {
        let u: f64 = rng.random();
        if u < self.weight_discrete {
            let v: f64 = rng.random();
            let mut cum = 0.0;
            for &(z, p) in &self.atoms {
                cum += p;
                if v <= cum {
                    return PinSample {
                        value: z,
                        component: PinComponent::Discrete,
                    };
                }
            }
            return PinSample {
                value: self.atoms.last().expect("validated atoms").0,
                component: PinComponent::Discrete,
            };
        }
        if u < self.weight_discrete + self.weight_singular {
            let spec = self.cantor.as_ref().expect("validated cantor");
            return PinSample {
                value: spec.sample(rng),
                component: PinComponent::SingularContinuous,
            };
        }
        let d = self.ac_density.as_ref().expect("validated density");
        PinSample {
            value: d.sample(rng),
            component: PinComponent::AbsolutelyContinuous,
        }
    }
}

/// Named densities for the length law's continuous part, supported on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthDensity {
    Exponential { rate: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl LengthDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            LengthDensity::Exponential { rate } => {
                if !(rate > &0.0) {
                    return Err(Error::invalid("exponential rate must be positive"));
                }
            }
            LengthDensity::Uniform { lower, upper } => {
                if !(*lower >= 0.0 && lower < upper) || !upper.is_finite() {
                    return Err(Error::invalid(
                        "uniform length density needs 0 ≤ lower < upper < ∞",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn pdf(&self, r: f64) -> f64 {
        match self {
            LengthDensity::Exponential { rate } => {
                if r > 0.0 {
                    rate * (-rate * r).exp()
                } else {
                    0.0
                }
            }
            LengthDensity::Uniform { lower, upper } => {
                if r >= *lower && r <= *upper {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        match self {
            LengthDensity::Exponential { rate } => {
                if r > 0.0 {
                    1.0 - (-rate * r).exp()
                } else {
                    0.0
                }
            }
            LengthDensity::Uniform { lower, upper } => {
                ((r - lower) / (upper - lower)).clamp(0.0, 1.0)
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            LengthDensity::Exponential { .. } => (0.0, f64::INFINITY),
            LengthDensity::Uniform { lower, upper } => (*lower, *upper),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LengthDensity::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            LengthDensity::Uniform { lower, upper } => {
                UniformDist::new(*lower, *upper).unwrap().sample(rng)
            }
        }
    }
}

/// The law `P_τ` of the random length on `(0, ∞)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthMeasure {
    /// Atom times with absolute probabilities.
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    /// Weight of the density part; `Σ p_i + density_weight = 1`.
    #[serde(default)]
    pub density_weight: f64,
    #[serde(default)]
    pub density: Option<LengthDensity>,
}

impl LengthMeasure {
    /// Purely atomic length law.
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let lm = LengthMeasure {
            atoms,
            density_weight: 0.0,
            density: None,
        };
        lm.validate()?;
        Ok(lm)
    }

    /// A single deterministic length.
    pub fn fixed(r: f64) -> Result<Self> {
        Self::atoms(vec![(r, 1.0)])
    }

    /// Purely continuous length law.
    pub fn continuous(density: LengthDensity) -> Result<Self> {
        let lm = LengthMeasure {
            atoms: Vec::new(),
            density_weight: 1.0,
            density: Some(density),
        };
        lm.validate()?;
        Ok(lm)
    }

    pub fn mixed(atoms: Vec<(f64, f64)>, density_weight: f64, density: LengthDensity) -> Result<Self> {
        let lm = LengthMeasure {
            atoms,
            density_weight,
            density: Some(density),
        };
        lm.validate()?;
        Ok(lm)
    }

    pub fn validate(&self) -> Result<()> {
        for &(r, p) in &self.atoms {
            if !(r > 0.0) || !r.is_finite() || !(p >= 0.0) {
                return Err(Error::invalid(format!(
                    "length atoms need r > 0 and p ≥ 0, got ({r}, {p})"
                )));
            }
        }
        if !(self.density_weight >= 0.0) {
            return Err(Error::invalid("density weight must be nonnegative"));
        }
        let total: f64 = self.atoms.iter().map(|&(_, p)| p).sum::<f64>() + self.density_weight;
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("length law mass must be 1, got {total}")));
        }
        match (&self.density, self.density_weight > 0.0) {
            (Some(d), true) => d.validate()?,
            (None, true) => return Err(Error::invalid("density weight > 0 requires a density")),
            _ => {}
        }
        Ok(())
    }

    /// `F_τ(t)`, right-continuous at atoms.
    pub fn cdf(&self, t: f64) -> f64 {
        let atom_part: f64 = self
            .atoms
            .iter()
            .filter(|&&(r, _)| r <= t)
            .map(|&(_, p)| p)
            .sum();
        let dens_part = match &self.density {
            Some(d) if self.density_weight > 0.0 => self.density_weight * d.cdf(t),
            _ => 0.0,
        };
        atom_part + dens_part
    }

    /// `∫_{(a, b]} h(r) P_τ(dr)`; `b` may be `+∞`. Atoms on the boundary
    /// follow the half-open convention: included iff `a < r ≤ b`.
    pub fn integrate<H: Fn(f64) -> f64>(
        &self,
        h: H,
        window: (f64, f64),
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        let (a, b) = window;
        if !(a < b) {
            return Err(Error::invalid(format!("empty length window ({a}, {b}]")));
        }
        let mut total: f64 = self
            .atoms
            .iter()
            .filter(|&&(r, _)| r > a && r <= b)
            .map(|&(r, p)| p * h(r))
            .sum();
        if self.density_weight > 0.0 {
            let d = self.density.as_ref().expect("validated density");
            let (lo, hi) = d.support();
            let lo = lo.max(a);
            let hi = hi.min(b);
            if lo < hi {
                total += self.density_weight * quad::integrate(|r| h(r) * d.pdf(r), lo, hi, cfg)?;
            }
        }
        Ok(total)
    }

    /// Atoms inside the half-open window `(a, b]`.
    pub fn atoms_in(&self, window: (f64, f64)) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (a, b) = window;
        self.atoms
            .iter()
            .copied()
            .filter(move |&(r, _)| r > a && r <= b)
    }

    pub fn has_density(&self) -> bool {
        self.density_weight > 0.0 && self.density.is_some()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for &(r, p) in &self.atoms {
            cum += p;
            if u <= cum {
                return r;
            }
        }
        match &self.density {
            Some(d) if self.density_weight > 0.0 => d.sample(rng),
            _ => self.atoms.last().expect("validated atoms").0,
        }
    }
}

/// One check of Definition-level admissibility of a (model, P_τ, P_Z) triple.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub description: String,
    pub passed: bool,
}

/// Report from [`validate_pair`]; never an error, violations are listed.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<&ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Checks `0 < f_r(z) < ∞` over the joint support of `(τ, Z)`: every atom
/// pair is evaluated numerically and the continuous parts are checked
/// through support inclusion (the subordinator requires pins in `(0, ∞)`).
pub fn validate_pair(
    model: &LevyModel,
    lm: &LengthMeasure,
    pm: &PinningMeasure,
    cfg: &QuadratureConfig,
) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |description: String, passed: bool| {
        checks.push(ValidationCheck {
            description,
            passed,
        })
    };

    let model_ok = model.validate().is_ok();
    push("model parameters are admissible".to_string(), model_ok);
    push("length law is a probability measure".to_string(), lm.validate().is_ok());
    push("pinning law is a probability measure".to_string(), pm.validate().is_ok());

    let needs_positive_pins = model.is_subordinator();
    if needs_positive_pins {
        if pm.weight_discrete > 0.0 {
            for &(z, _) in &pm.atoms {
                push(
                    format!("subordinator pin atom z={z} lies in (0, ∞)"),
                    z > 0.0,
                );
            }
        }
        if pm.weight_singular > 0.0 {
            if let Some(c) = &pm.cantor {
                push(
                    format!("subordinator Cantor support [{}, {}] lies in (0, ∞)", c.lower, c.upper),
                    c.lower > 0.0,
                );
            }
        }
        if pm.weight_ac > 0.0 {
            if let Some(d) = &pm.ac_density {
                let (lo, _) = d.support();
                push(
                    format!("subordinator AC pin support starts at {lo} ≥ 0"),
                    lo >= 0.0,
                );
            }
        }
    }

    if model_ok && pm.weight_discrete > 0.0 {
        for &(z, _) in &pm.atoms {
            for &(r, _) in &lm.atoms {
                let ok = match model.marginal_density(r, z, cfg) {
                    Ok(f) => f > 0.0 && f.is_finite(),
                    Err(_) => false,
                };
                push(format!("0 < f_{r}({z}) < ∞ at atom pair"), ok);
            }
            if lm.has_density() {
                // Sample the density support at a few representative lengths.
                let d = lm.density.as_ref().unwrap();
                let (lo, hi) = d.support();
                let probes = [
                    lo + 0.25 * (hi.min(lo + 8.0) - lo),
                    lo + 0.75 * (hi.min(lo + 8.0) - lo),
                ];
                for r in probes {
                    if r > 0.0 && r.is_finite() {
                        let ok = match model.marginal_density(r, z, cfg) {
                            Ok(f) => f > 0.0 && f.is_finite(),
                            Err(_) => false,
                        };
                        push(format!("0 < f_{r:.3}({z}) < ∞ on length density support"), ok);
                    }
                }
            }
        }
    }

    ValidationReport { checks }
}
