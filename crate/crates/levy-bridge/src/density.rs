//! Marginal densities `f_t` for the three Lévy families and the bridge
//! kernels built from them.
//!
//! The bridge with length `r` and pinning point `z` is defined through the
//! likelihood ratio `f_{r-t}(z - X_t) / f_r(z)`; its one-step transition
//! density and finite-dimensional densities are ratios of marginals. All
//! three families have marginals that are absolutely continuous with an
//! evaluatable density:
//!
//! * Brownian motion with drift: normal with mean `b·t`, variance `σ²·t`;
//! * gamma subordinator: gamma with shape `m·t` and scale `θ`;
//! * symmetric stable: `f_t(x) = π⁻¹ ∫_0^∞ cos(x·y) · exp(-t·y^α) dy`,
//!   evaluated by oscillatory quadrature (no closed form except α = 1, 2,
//!   which are kept as test oracles only).

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::{self, QuadratureConfig};

/// One of the three concrete Lévy families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LevyModel {
    /// `X_t = b·t + σ·W_t`.
    BrownianDrift { volatility: f64, drift: f64 },
    /// Gamma subordinator with `X_t ~ Gamma(shape = m·t, scale = θ)`.
    GammaSubordinator { shape_rate: f64, scale: f64 },
    /// Symmetric α-stable process, characteristic exponent `-|u|^α`.
    /// The model range is α ∈ (0,1)∪(1,2); α = 1 (Cauchy) and α = 2
    /// (Gaussian, variance 2t) are admitted as closed-form cross-check cases.
    SymmetricStable { alpha: f64 },
}

impl LevyModel {
    pub fn brownian(volatility: f64, drift: f64) -> Result<Self> {
        let m = LevyModel::BrownianDrift { volatility, drift };
        m.validate()?;
        Ok(m)
    }

    pub fn gamma(shape_rate: f64, scale: f64) -> Result<Self> {
        let m = LevyModel::GammaSubordinator { shape_rate, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn stable(alpha: f64) -> Result<Self> {
        let m = LevyModel::SymmetricStable { alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LevyModel::BrownianDrift { volatility, drift } => {
                if !(volatility > 0.0) || !volatility.is_finite() || !drift.is_finite() {
                    return Err(Error::invalid(format!(
                        "Brownian model requires σ > 0 and finite drift, got σ={volatility}, b={drift}"
                    )));
                }
            }
            LevyModel::GammaSubordinator { shape_rate, scale } => {
                if !(shape_rate > 0.0 && scale > 0.0)
                    || !shape_rate.is_finite()
                    || !scale.is_finite()
                {
                    return Err(Error::invalid(format!(
                        "gamma model requires m > 0 and θ > 0, got m={shape_rate}, θ={scale}"
                    )));
                }
            }
            LevyModel::SymmetricStable { alpha } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::invalid(format!(
                        "stable index must lie in (0, 2], got α={alpha}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the process has nondecreasing paths.
    pub fn is_subordinator(&self) -> bool {
        matches!(self, LevyModel::GammaSubordinator { .. })
    }

    /// Marginal density `f_t(x)` of the increment over duration `t`.
    ///
    /// Gamma marginals return 0 for `x ≤ 0` (the support edge is not an
    /// error: the bridge kernels consume zero values correctly).
    pub fn marginal_density(&self, t: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("marginal density needs t > 0, got {t}")));
        }
        match *self {
            LevyModel::BrownianDrift { volatility, drift } => {
                Ok(normal_pdf(x, drift * t, volatility * volatility * t))
            }
            LevyModel::GammaSubordinator { shape_rate, scale } => {
                Ok(gamma_pdf(x, shape_rate * t, scale))
            }
            LevyModel::SymmetricStable { alpha } => stable_density_fourier(alpha, t, x, cfg),
        }
    }

    /// `ln f_t(x)`, with `-∞` on the complement of the support. Ratios of
    /// far-tail marginals must go through log space: the densities
    /// themselves underflow long before the ratios become degenerate.
    pub fn marginal_log_density(&self, t: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("marginal density needs t > 0, got {t}")));
        }
        match *self {
            LevyModel::BrownianDrift { volatility, drift } => {
                let variance = volatility * volatility * t;
                let d = x - drift * t;
                Ok(-0.5 * d * d / variance
                    - 0.5 * (2.0 * std::f64::consts::PI * variance).ln())
            }
            LevyModel::GammaSubordinator { shape_rate, scale } => {
                if x <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let shape = shape_rate * t;
                Ok((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln())
            }
            LevyModel::SymmetricStable { alpha } => {
                Ok(stable_density_fourier(alpha, t, x, cfg)?.ln())
            }
        }
    }

    /// `f_{t_num}(x_num) / f_{t_den}(x_den)` computed through log space.
    /// Errors with [`Error::DegeneratePin`] when the denominator is a true
    /// zero (outside the support), not merely an underflow.
    pub fn density_ratio(
        &self,
        t_num: f64,
        x_num: f64,
        t_den: f64,
        x_den: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        let ld = self.marginal_log_density(t_den, x_den, cfg)?;
        if ld == f64::NEG_INFINITY || ld.is_nan() {
            return Err(Error::DegeneratePin {
                r: t_den,
                z: x_den,
            });
        }
        let ln = self.marginal_log_density(t_num, x_num, cfg)?;
        Ok((ln - ld).exp())
    }

    /// Radon–Nikodym derivative of the `(r, z)`-bridge law against the free
    /// process at time `t`: `f_{r-t}(z - x_t) / f_r(z)`.
    pub fn rn_derivative(
        &self,
        t: f64,
        r: f64,
        z: f64,
        x_t: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        if !(t > 0.0 && t < r) {
            return Err(Error::invalid(format!(
                "rn_derivative needs 0 < t < r, got t={t}, r={r}"
            )));
        }
        let fz = self.marginal_density(r, z, cfg)?;
        if !(fz > 0.0) || !fz.is_finite() {
            return Err(Error::DegeneratePin { r, z });
        }
        Ok(self.marginal_density(r - t, z - x_t, cfg)? / fz)
    }

    /// Bridge transition density `y ↦ f_{t-s}(y-x_s)·f_{r-t}(z-y)/f_{r-s}(z-x_s)`.
    pub fn bridge_transition_density(
        &self,
        s: f64,
        t: f64,
        r: f64,
        x_s: f64,
        y: f64,
        z: f64,
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        if !(s >= 0.0 && s < t && t < r) {
            return Err(Error::invalid(format!(
                "bridge transition needs 0 ≤ s < t < r, got s={s}, t={t}, r={r}"
            )));
        }
        let denom = self.marginal_density(r - s, z - x_s, cfg)?;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::UnreachableState { s, x: x_s, r, z });
        }
        let a = self.marginal_density(t - s, y - x_s, cfg)?;
        let b = self.marginal_density(r - t, z - y, cfg)?;
        Ok(a * b / denom)
    }

    /// Joint density of the bridge at `times` (strictly increasing, all < r):
    /// `[f_{r-t_n}(z-x_n)/f_r(z)] · ∏ f_{t_i-t_{i-1}}(x_i-x_{i-1})`
    /// with `t_0 = x_0 = 0`.
    pub fn finite_dim_density(
        &self,
        r: f64,
        z: f64,
        times: &[f64],
        values: &[f64],
        cfg: &QuadratureConfig,
    ) -> Result<f64> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::invalid(
                "finite_dim_density needs equal-length nonempty time/value lists",
            ));
        }
        let mut prev_t = 0.0;
        for &t in times {
            if !(t > prev_t && t < r) {
                return Err(Error::invalid(format!(
                    "times must be strictly increasing inside (0, r): offending t={t}"
                )));
            }
            prev_t = t;
        }
        let fz = self.marginal_density(r, z, cfg)?;
        if !(fz > 0.0) || !fz.is_finite() {
            return Err(Error::DegeneratePin { r, z });
        }
        let n = times.len();
        let mut density = self.marginal_density(r - times[n - 1], z - values[n - 1], cfg)? / fz;
        let (mut t_prev, mut x_prev) = (0.0, 0.0);
        for i in 0..n {
            density *= self.marginal_density(times[i] - t_prev, values[i] - x_prev, cfg)?;
            t_prev = times[i];
            x_prev = values[i];
        }
        Ok(density)
    }

    /// Support of the increment distribution over a duration `dt`, with the
    /// power-law edge exponent where the density is singular at the edge.
    pub fn increment_support(&self, dt: f64) -> IncrementSupport {
        match *self {
            LevyModel::GammaSubordinator { shape_rate, .. } => {
                IncrementSupport::PositiveHalfLine {
                    edge_shape: shape_rate * dt,
                }
            }
            _ => IncrementSupport::RealLine,
        }
    }

    /// Characteristic length of the increment over `dt`; used only to seed
    /// support brackets in the generic sampler.
    pub fn step_scale(&self, dt: f64) -> f64 {
        match *self {
            LevyModel::BrownianDrift { volatility, .. } => volatility * dt.sqrt(),
            LevyModel::GammaSubordinator { shape_rate, scale } => {
                (shape_rate * dt).max(1.0).sqrt() * scale
            }
            LevyModel::SymmetricStable { alpha } => dt.powf(1.0 / alpha),
        }
    }
}

/// Increment support classification for the generic bridge sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementSupport {
    RealLine,
    /// Density behaves like `x^{edge_shape - 1}` as `x ↓ 0`.
    PositiveHalfLine { edge_shape: f64 },
}

/// Normal density with the given mean and variance.
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Gamma density with the given shape and scale; zero on `x ≤ 0`.
pub fn gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_pdf = (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln();
    ln_pdf.exp()
}

/// Symmetric stable density by Fourier inversion:
/// `f_t(x) = π⁻¹ ∫_0^∞ cos(|x|·y) · exp(-t·y^α) dy`.
///
/// The integrand is built from `|x|`, so evenness in `x` holds exactly.
/// The result is checked against the a-priori bound
/// `π⁻¹ ∫_0^∞ exp(-t·y^α) dy = Γ(1+1/α) / (π·t^{1/α})`; values beyond the
/// bound by more than tolerance signal a quadrature failure, and values
/// below absolute tolerance are returned as exact zeros.
pub fn stable_density_fourier(alpha: f64, t: f64, x: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid(format!(
            "stable index must lie in (0, 2], got α={alpha}"
        )));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("stable density needs t > 0, got {t}")));
    }
    let value = quad::cosine_transform_integral(alpha, t, x.abs(), cfg)? / std::f64::consts::PI;
    let bound = stable_density_bound(alpha, t);
    let tol = cfg.abs_tol + cfg.rel_tol * bound;
    if value > bound + tol {
        return Err(Error::numerical(
            "stable_density_fourier",
            format!("value {value:.6e} exceeds the bound {bound:.6e} (α={alpha}, t={t}, x={x})"),
        ));
    }
    if value < -tol {
        return Err(Error::numerical(
            "stable_density_fourier",
            format!("negative density {value:.6e} (α={alpha}, t={t}, x={x})"),
        ));
    }
    if value.abs() < cfg.abs_tol {
        return Ok(0.0);
    }
    Ok(value.max(0.0))
}

/// The upper bound `π⁻¹ ∫_0^∞ exp(-t·y^α) dy = Γ(1 + 1/α) / (π·t^{1/α})`.
pub fn stable_density_bound(alpha: f64, t: f64) -> f64 {
    ln_gamma(1.0 + 1.0 / alpha).exp() / (std::f64::consts::PI * t.powf(1.0 / alpha))
}

/// Leading tail coefficient: `f_t(x) ≈ K·|x|^{-(1+α)}` with
/// `K = α·t·Γ(α)·sin(πα/2)/π`. Vanishes at α = 2 (Gaussian tails).
fn stable_tail_coefficient(alpha: f64, t: f64) -> f64 {
    alpha * t * ln_gamma(alpha).exp() * (std::f64::consts::PI * alpha / 2.0).sin()
        / std::f64::consts::PI
}

const STABLE_CACHE_NODES: usize = 1024;
const STABLE_CACHE_TAIL_MASS: f64 = 1e-6;

struct StableTable {
    t: f64,
    scale: f64,
    x_cache: f64,
    du: f64,
    ln_f: Vec<f64>,
    tail_coeff: f64,
}

impl StableTable {
    fn build(alpha: f64, t: f64, cfg: &QuadratureConfig) -> Result<Self> {
        let scale = t.powf(1.0 / alpha);
        let tail_coeff = stable_tail_coefficient(alpha, t);
        // Cache out to where the two-sided tail mass 2K x^{-α}/α falls to
        // STABLE_CACHE_TAIL_MASS; beyond that the power-law head term serves.
        let x_cache = if tail_coeff > 0.0 && alpha < 2.0 {
            (2.0 * tail_coeff / (alpha * STABLE_CACHE_TAIL_MASS)).powf(1.0 / alpha)
        } else {
            6.0 * (2.0 * t).sqrt()
        };
        let u_max = (2.0 / std::f64::consts::PI) * (x_cache / scale).atan();
        let du = u_max / (STABLE_CACHE_NODES - 1) as f64;
        let mut ln_f = Vec::with_capacity(STABLE_CACHE_NODES);
        for i in 0..STABLE_CACHE_NODES {
            let u = i as f64 * du;
            let x = scale * (std::f64::consts::PI * u / 2.0).tan();
            let f = stable_density_fourier(alpha, t, x, cfg)?;
            if !(f > 0.0) {
                return Err(Error::numerical(
                    "stable cache",
                    format!("non-positive density {f:.3e} at node x={x} (α={alpha}, t={t})"),
                ));
            }
            ln_f.push(f.ln());
        }
        Ok(StableTable {
            t,
            scale,
            x_cache,
            du,
            ln_f,
            tail_coeff,
        })
    }

    fn eval(&self, alpha: f64, x: f64) -> f64 {
        let ax = x.abs();
        if ax > self.x_cache {
            if self.tail_coeff == 0.0 {
                return 0.0;
            }
            return self.tail_coeff * ax.powf(-(1.0 + alpha));
        }
        let u = (2.0 / std::f64::consts::PI) * (ax / self.scale).atan();
        let pos = (u / self.du).min((STABLE_CACHE_NODES - 1) as f64);
        let i = (pos.floor() as usize).min(STABLE_CACHE_NODES - 2);
        let s = pos - i as f64;
        // Catmull-Rom on the uniform u-grid, clamped at the ends.
        let p0 = self.ln_f[i.saturating_sub(1)];
        let p1 = self.ln_f[i];
        let p2 = self.ln_f[i + 1];
        let p3 = self.ln_f[(i + 2).min(STABLE_CACHE_NODES - 1)];
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = 0.5 * (p2 - p0);
        (((a * s + b) * s + c) * s + p1).exp()
    }
}

/// Memoized stable marginal densities on a fixed set of durations, for the
/// sampler hot path. Built once, read-only afterwards; durations not in the
/// table fall back to direct quadrature.
pub struct StableDensityCache {
    alpha: f64,
    cfg: QuadratureConfig,
    tables: HashMap<u64, StableTable>,
}

impl StableDensityCache {
    pub fn build(alpha: f64, durations: &[f64], cfg: &QuadratureConfig) -> Result<Self> {
        let build_cfg = QuadratureConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-13,
            ..*cfg
        };
        let mut tables = HashMap::new();
        for &t in durations {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("cache duration must be positive: {t}")));
            }
            tables
                .entry(t.to_bits())
                .or_insert(StableTable::build(alpha, t, &build_cfg)?);
        }
        Ok(StableDensityCache {
            alpha,
            cfg: *cfg,
            tables,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        match self.tables.get(&t.to_bits()) {
            Some(table) => {
                debug_assert_eq!(table.t.to_bits(), t.to_bits());
                Ok(table.eval(self.alpha, x))
            }
            None => stable_density_fourier(self.alpha, t, x, &self.cfg),
        }
    }
}

/// Marginal-density evaluator handed to samplers: direct quadrature-backed
/// evaluation, or table-backed for the stable family.
#[derive(Clone)]
pub enum DensityEvaluator {
    Direct {
        model: LevyModel,
        cfg: QuadratureConfig,
    },
    CachedStable {
        model: LevyModel,
        cache: Arc<StableDensityCache>,
    },
}

impl DensityEvaluator {
    pub fn direct(model: LevyModel, cfg: QuadratureConfig) -> Self {
        DensityEvaluator::Direct { model, cfg }
    }

    /// Builds a stable-density table covering the given durations.
    pub fn cached_stable(model: LevyModel, durations: &[f64], cfg: &QuadratureConfig) -> Result<Self> {
        match model {
            LevyModel::SymmetricStable { alpha } => Ok(DensityEvaluator::CachedStable {
                model,
                cache: Arc::new(StableDensityCache::build(alpha, durations, cfg)?),
            }),
            _ => Err(Error::invalid("cached evaluator applies to the stable family only")),
        }
    }

    pub fn model(&self) -> &LevyModel {
        match self {
            DensityEvaluator::Direct { model, .. } => model,
            DensityEvaluator::CachedStable { model, .. } => model,
        }
    }

    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            DensityEvaluator::Direct { model, cfg } => model.marginal_density(t, x, cfg),
            DensityEvaluator::CachedStable { cache, .. } => cache.density(t, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Continuous, Normal};
    use std::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn marginal_examples() {
        let stable = LevyModel::stable(1.0).unwrap();
        assert_abs_diff_eq!(
            stable.marginal_density(1.0, 0.0, &cfg()).unwrap(),
            1.0 / PI,
            epsilon = 1e-9
        );

        let bm = LevyModel::brownian(1.0, 0.0).unwrap();
        assert_abs_diff_eq!(
            bm.marginal_density(1.0, 0.0, &cfg()).unwrap(),
            (2.0 * PI).powf(-0.5),
            epsilon = 1e-12
        );

        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            gamma.marginal_density(2.0, 1.0, &cfg()).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gamma_support_edge_is_silent_zero() {
        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        assert_eq!(gamma.marginal_density(1.0, 0.0, &cfg()).unwrap(), 0.0);
        assert_eq!(gamma.marginal_density(1.0, -3.0, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_time_rejected() {
        let bm = LevyModel::brownian(1.0, 0.0).unwrap();
        assert!(bm.marginal_density(0.0, 0.0, &cfg()).is_err());
        assert!(bm.marginal_density(-1.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn stable_fourier_examples() {
        // α = 2 is N(0, 2t).
        let v = stable_density_fourier(2.0, 0.5, 0.7, &cfg()).unwrap();
        let oracle = Normal::new(0.0, 1.0).unwrap().pdf(0.7);
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 0.3122539333667331, epsilon = 1e-9);

        // α = 1 is Cauchy with scale t.
        let v = stable_density_fourier(1.0, 2.0, 3.0, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 2.0 / (PI * 13.0), epsilon = 1e-9);
    }

    #[test]
    fn stable_symmetry_is_exact() {
        for &alpha in &[0.5, 1.5] {
            for &x in &[0.3, 1.7, 12.0] {
                let a = stable_density_fourier(alpha, 1.0, x, &cfg()).unwrap();
                let b = stable_density_fourier(alpha, 1.0, -x, &cfg()).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn stable_respects_bound() {
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            for &t in &[0.5, 2.0] {
                for &x in &[0.0, 0.9, 4.0] {
                    let v = stable_density_fourier(alpha, t, x, &cfg()).unwrap();
                    assert!(v <= stable_density_bound(alpha, t) + 1e-9);
                    assert!(v >= 0.0);
                }
            }
        }
    }

    #[test]
    fn stable_index_range_enforced() {
        assert!(stable_density_fourier(0.0, 1.0, 0.0, &cfg()).is_err());
        assert!(stable_density_fourier(2.1, 1.0, 0.0, &cfg()).is_err());
        assert!(LevyModel::stable(2.5).is_err());
    }

    #[test]
    fn rn_derivative_examples() {
        let bm = LevyModel::brownian(1.0, 0.0).unwrap();
        // t → 0⁺ identity.
        let v = bm.rn_derivative(1e-10, 2.0, 0.3, 0.0, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
        // Ratio of normal densities at the midpoint.
        let v = bm.rn_derivative(1.0, 2.0, 0.0, 0.0, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 2.0f64.sqrt(), epsilon = 1e-12);

        // A subordinator cannot decrease.
        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        let v = gamma.rn_derivative(1.0, 2.0, 1.0, 1.5, &cfg()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn degenerate_pin_detected() {
        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        // f_r(z) = 0 for z ≤ 0 under the subordinator.
        match gamma.rn_derivative(1.0, 2.0, -1.0, 0.0, &cfg()) {
            Err(Error::DegeneratePin { .. }) => {}
            other => panic!("expected DegeneratePin, got {other:?}"),
        }
    }

    #[test]
    fn brownian_bridge_transition_closed_form() {
        let bm = LevyModel::brownian(1.0, 0.0).unwrap();
        let (r, z, t) = (2.0, 0.0, 1.0);
        // Mean 0, variance t(r-t)/r = 0.5.
        let oracle = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        for &y in &[-1.0, -0.2, 0.0, 0.4, 1.3] {
            let v = bm
                .bridge_transition_density(0.0, t, r, 0.0, y, z, &cfg())
                .unwrap();
            assert_abs_diff_eq!(v, oracle.pdf(y), epsilon = 1e-12);
        }
    }

    #[test]
    fn bridge_transition_drift_invariant() {
        let flat = LevyModel::brownian(1.3, 0.0).unwrap();
        let drifted = LevyModel::brownian(1.3, 5.0).unwrap();
        for &y in &[-0.7, 0.1, 0.9] {
            let a = flat
                .bridge_transition_density(0.5, 1.0, 2.0, 0.2, y, 0.4, &cfg())
                .unwrap();
            let b = drifted
                .bridge_transition_density(0.5, 1.0, 2.0, 0.2, y, 0.4, &cfg())
                .unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn gamma_bridge_is_scaled_beta() {
        // m=1, θ=1, r=2, t=1, z=1: the bridge ratio is Beta(1,1), so the
        // transition density from 0 is uniform on (0,1).
        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        let v = gamma
            .bridge_transition_density(0.0, 1.0, 2.0, 0.0, 0.25, 1.0, &cfg())
            .unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transition_integrates_to_one() {
        let bm = LevyModel::brownian(0.8, 1.0).unwrap();
        let total = quad::integrate(
            |y| {
                bm.bridge_transition_density(0.5, 1.2, 2.0, 0.3, y, -0.4, &cfg())
                    .unwrap()
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &cfg(),
        )
        .unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn unreachable_state_detected() {
        let gamma = LevyModel::gamma(1.0, 1.0).unwrap();
        // From x_s = 2 the subordinator cannot reach z = 1.
        match gamma.bridge_transition_density(0.0, 1.0, 2.0, 2.0, 1.5, 1.0, &cfg()) {
            Err(Error::UnreachableState { .. }) => {}
            other => panic!("expected UnreachableState, got {other:?}"),
        }
    }

    #[test]
    fn finite_dim_single_time_identity() {
        let bm = LevyModel::brownian(1.0, 0.3).unwrap();
        let (r, z, t1, x1) = (2.0, 0.4, 0.7, -0.2);
        let joint = bm.finite_dim_density(r, z, &[t1], &[x1], &cfg()).unwrap();
        let expect = bm.rn_derivative(t1, r, z, x1, &cfg()).unwrap()
            * bm.marginal_density(t1, x1, &cfg()).unwrap();
        assert_abs_diff_eq!(joint, expect, epsilon = 1e-14);
    }

    #[test]
    fn finite_dim_two_time_closed_form() {
        // Brownian, r=3, z=0, times (1,2), values (0,0): f_1(0)³ / f_3(0).
        let bm = LevyModel::brownian(1.0, 0.0).unwrap();
        let joint = bm
            .finite_dim_density(3.0, 0.0, &[1.0, 2.0], &[0.0, 0.0], &cfg())
            .unwrap();
        let n1 = Normal::new(0.0, 1.0).unwrap().pdf(0.0);
        let n3 = Normal::new(0.0, 3.0f64.sqrt()).unwrap().pdf(0.0);
        assert_abs_diff_eq!(joint, n1.powi(3) / n3, epsilon = 1e-14);
    }

    #[test]
    fn finite_dim_telescopes_the_transitions() {
        let models = [
            LevyModel::brownian(1.0, 0.5).unwrap(),
            LevyModel::gamma(2.0, 0.5).unwrap(),
        ];
        let (r, times) = (2.0, [0.5, 1.0, 1.5]);
        for model in &models {
            let (z, values) = if model.is_subordinator() {
                (1.2, [0.2, 0.5, 0.9])
            } else {
                (0.4, [0.1, -0.3, 0.5])
            };
            let joint = model.finite_dim_density(r, z, &times, &values, &cfg()).unwrap();
            // Rebuild via the telescoping product of one-step transitions.
            let mut telescoped = model.marginal_density(times[0], values[0], &cfg()).unwrap()
                * model
                    .marginal_density(r - times[0], z - values[0], &cfg())
                    .unwrap()
                / model.marginal_density(r, z, &cfg()).unwrap();
            for i in 1..times.len() {
                telescoped *= model
                    .bridge_transition_density(
                        times[i - 1],
                        times[i],
                        r,
                        values[i - 1],
                        values[i],
                        z,
                        &cfg(),
                    )
                    .unwrap();
            }
            let rel = (joint - telescoped).abs() / joint.abs().max(f64::MIN_POSITIVE);
            assert!(rel < 1e-10, "telescoping mismatch: {joint} vs {telescoped}");
        }
    }

    #[test]
    fn stable_cache_matches_direct() {
        let alpha = 1.5;
        let cache = StableDensityCache::build(alpha, &[0.5, 1.0], &cfg()).unwrap();
        for &t in &[0.5, 1.0] {
            for &x in &[0.0, 0.3, 1.0, 4.0, 20.0] {
                let direct = stable_density_fourier(alpha, t, x, &cfg()).unwrap();
                let cached = cache.density(t, x).unwrap();
                let rel = (direct - cached).abs() / direct.max(1e-300);
                assert!(rel < 1e-4, "cache mismatch at t={t}, x={x}: {direct} vs {cached}");
            }
        }
        // Uncached duration falls back to direct evaluation.
        let direct = stable_density_fourier(alpha, 0.75, 0.4, &cfg()).unwrap();
        assert_abs_diff_eq!(cache.density(0.75, 0.4).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn stable_cache_tail_branch() {
        let alpha = 1.5;
        let cache = StableDensityCache::build(alpha, &[1.0], &cfg()).unwrap();
        let x: f64 = 1e6;
        let expect = stable_tail_coefficient(alpha, 1.0) * x.powf(-(1.0 + alpha));
        assert_abs_diff_eq!(cache.density(1.0, x).unwrap(), expect, epsilon = 1e-18);
    }
}
