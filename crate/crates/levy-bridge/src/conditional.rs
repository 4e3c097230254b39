//! Conditional laws of the random bridge given one or two observations.
//!
//! Everything here is Bayes inversion against the mixed dominating measure
//! `P_Z^s(dx) + dx`: the law of `ζ_t` given `{τ = r}` has the two-branch
//! kernel `q_t(r, x)` (singular support vs. its complement), and posterior
//! laws over `τ`, `Z`, `ζ_u` follow by integrating the marginal-density
//! ratios `f_{r-t}(z-x)/f_r(z)` against `P_Z` and `P_τ`. Laws are returned
//! as [`PosteriorLaw`] values: atoms plus a weighted continuous density
//! (plus a reweighted Cantor component when the pinning law has one), with
//! normalizing constants computed once by quadrature.
//!
//! Branch selection for analytic observations is explicit: an
//! [`Observation`] carries its singular-support membership flag, produced
//! by the measure's membership oracle or declared by the caller.

use std::cell::RefCell;
use std::sync::Arc;

use serde::Serialize;

use crate::density::LevyModel;
use crate::error::{Error, Result};
use crate::measures::{CantorSpec, LengthMeasure, PinningMeasure};
use crate::quad::{self, QuadratureConfig};

/// Denominators below this are treated as exactly zero (true support
/// violations rather than underflow artifacts).
pub const ZERO_EVIDENCE: f64 = 1e-300;

/// A single observation of the bridge.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub time: f64,
    pub value: f64,
    /// Whether the value lies in the singular support `𝒵` of `P_Z`.
    pub in_singular_support: bool,
}

impl Observation {
    pub fn new(time: f64, value: f64, in_singular_support: bool) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() || !value.is_finite() {
            return Err(Error::invalid(format!(
                "observation needs finite t > 0 and finite value, got ({time}, {value})"
            )));
        }
        Ok(Observation {
            time,
            value,
            in_singular_support,
        })
    }

    /// Classifies the value with the measure's membership oracle.
    pub fn from_value(time: f64, value: f64, pm: &PinningMeasure) -> Result<Self> {
        Observation::new(time, value, pm.in_singular_support(value))
    }
}

type DensityFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Weighted continuous component of a posterior law.
pub struct ContinuousPart {
    weight: f64,
    domain: (f64, f64),
    /// Interior points where the density has kinks; integration splits here.
    breakpoints: Vec<f64>,
    /// Density including its weight: integrates to `weight` over the domain.
    density: DensityFn,
}

/// Reweighted Cantor component (arises in predictive laws when the pinning
/// law has a singular-continuous part).
pub struct SingularPart {
    weight: f64,
    base: CantorSpec,
    /// Radon–Nikodym factor against the base Cantor measure, including the
    /// weight: Cantor-integrates to `weight`.
    reweight: DensityFn,
}

/// A conditional law: atoms, a weighted continuous density, and optionally
/// a reweighted singular-continuous component.
pub struct PosteriorLaw {
    atoms: Vec<(f64, f64)>,
    continuous: Option<ContinuousPart>,
    singular: Option<SingularPart>,
}

impl PosteriorLaw {
    fn point_mass(x: f64) -> Self {
        PosteriorLaw {
            atoms: vec![(x, 1.0)],
            continuous: None,
            singular: None,
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, p)| p).sum()
    }

    pub fn continuous_weight(&self) -> f64 {
        self.continuous.as_ref().map_or(0.0, |c| c.weight)
    }

    pub fn singular_weight(&self) -> f64 {
        self.singular.as_ref().map_or(0.0, |s| s.weight)
    }

    /// Continuous density (including weight) at a point.
    pub fn continuous_density_at(&self, x: f64) -> Result<f64> {
        match &self.continuous {
            Some(c) => {
                if x < c.domain.0 || x > c.domain.1 {
                    Ok(0.0)
                } else {
                    (c.density)(x)
                }
            }
            None => Ok(0.0),
        }
    }

    /// Mass the continuous part assigns to `[a, b]`.
    pub fn continuous_mass_on(&self, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let c = match &self.continuous {
            Some(c) => c,
            None => return Ok(0.0),
        };
        let lo = a.max(c.domain.0);
        let hi = b.min(c.domain.1);
        if !(lo < hi) {
            return Ok(0.0);
        }
        let mut cuts = vec![lo];
        for &bp in &c.breakpoints {
            if bp > lo && bp < hi {
                cuts.push(bp);
            }
        }
        cuts.push(hi);
        let fail = FailCell::new();
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            total += quad::integrate(|x| fail.eval(&c.density, x), pair[0], pair[1], cfg)?;
        }
        fail.check()?;
        Ok(total)
    }

    /// `∫ g dLaw` over all components.
    pub fn expect<G: Fn(f64) -> f64 + Copy>(&self, g: G, cfg: &QuadratureConfig) -> Result<f64> {
        let mut total: f64 = self.atoms.iter().map(|&(x, p)| p * g(x)).sum();
        if let Some(c) = &self.continuous {
            let fail = FailCell::new();
            let mut cuts = vec![c.domain.0];
            cuts.extend(c.breakpoints.iter().copied());
            cuts.push(c.domain.1);
            for pair in cuts.windows(2) {
                if pair[0] < pair[1] {
                    total +=
                        quad::integrate(|x| g(x) * fail.eval(&c.density, x), pair[0], pair[1], cfg)?;
                }
            }
            fail.check()?;
        }
        if let Some(s) = &self.singular {
            let fail = FailCell::new();
            let v = s
                .base
                .integrate(|z| g(z) * fail.eval(&s.reweight, z), s.base.integration_depth)?;
            fail.check()?;
            total += v;
        }
        Ok(total)
    }

    /// Total mass recomputed by quadrature (should be 1 within tolerance).
    pub fn total_mass(&self, cfg: &QuadratureConfig) -> Result<f64> {
        self.expect(|_| 1.0, cfg)
    }

    /// Serializable snapshot: atoms plus density samples on a grid.
    pub fn sampled(&self, grid: &[f64], cfg: &QuadratureConfig) -> Result<PosteriorLawJson> {
        let mut samples = Vec::with_capacity(grid.len());
        for &x in grid {
            samples.push((x, self.continuous_density_at(x)?));
        }
        Ok(PosteriorLawJson {
            atoms: self.atoms.clone(),
            continuous_weight: self.continuous_weight(),
            singular_weight: self.singular_weight(),
            total_mass: self.total_mass(cfg)?,
            density_samples: samples,
        })
    }
}

/// JSON form of a posterior law.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorLawJson {
    pub atoms: Vec<(f64, f64)>,
    pub continuous_weight: f64,
    pub singular_weight: f64,
    pub total_mass: f64,
    pub density_samples: Vec<(f64, f64)>,
}

/// Error capture for `Result`-valued integrands inside `Fn(f64) -> f64`
/// quadrature closures; the first failure is re-raised after the call.
pub(crate) struct FailCell(RefCell<Option<Error>>);

impl FailCell {
    pub(crate) fn new() -> Self {
        FailCell(RefCell::new(None))
    }

    fn eval(&self, f: &DensityFn, x: f64) -> f64 {
        match f(x) {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    }

    pub(crate) fn capture<F: FnOnce() -> Result<f64>>(&self, f: F) -> f64 {
        match f() {
            Ok(v) => v,
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self.0.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// The full random-bridge specification: model, length law, pinning law,
/// and the quadrature configuration shared by every conditional formula.
#[derive(Debug, Clone)]
pub struct RandomBridgeModel {
    pub model: LevyModel,
    pub length: LengthMeasure,
    pub pinning: PinningMeasure,
    pub quad: QuadratureConfig,
}

impl RandomBridgeModel {
    pub fn new(
        model: LevyModel,
        length: LengthMeasure,
        pinning: PinningMeasure,
        quad: QuadratureConfig,
    ) -> Result<Self> {
        model.validate()?;
        length.validate()?;
        pinning.validate()?;
        quad.validate()?;
        Ok(RandomBridgeModel {
            model,
            length,
            pinning,
            quad,
        })
    }

    fn f(&self, t: f64, x: f64) -> Result<f64> {
        self.model.marginal_density(t, x, &self.quad)
    }

    /// `∫ g(z)·f_{r-t}(z-x)/f_r(z) P_Z(dz)`.
    fn pin_kernel_integral<G: Fn(f64) -> f64>(
        &self,
        r: f64,
        t: f64,
        x: f64,
        g: G,
    ) -> Result<f64> {
        let fail = FailCell::new();
        let v = self.pinning.integrate(
            |z| {
                fail.capture(|| {
                    let fz = self.f(r, z)?;
                    if !(fz > 0.0) || !fz.is_finite() {
                        return Err(Error::DegeneratePin { r, z });
                    }
                    Ok(g(z) * self.f(r - t, z - x)? / fz)
                })
            },
            &self.quad,
        )?;
        fail.check()?;
        Ok(v)
    }

    /// `∫_window [∫ g(z)·f_{r-t}(z-x)/f_r(z) P_Z(dz)] P_τ(dr)`; the window
    /// is half-open `(a, b]` and must lie above `t`.
    fn length_pin_integral<G: Fn(f64) -> f64 + Copy>(
        &self,
        window: (f64, f64),
        t: f64,
        x: f64,
        g: G,
    ) -> Result<f64> {
        let fail = FailCell::new();
        let v = self.length.integrate(
            |r| fail.capture(|| self.pin_kernel_integral(r, t, x, g)),
            window,
            &self.quad,
        )?;
        fail.check()?;
        Ok(v)
    }

    /// The kernel `q_t(r, x)` of `ζ_t | τ = r` against `P_Z^s(dx) + dx`:
    /// `[(1-a_ac)·1_𝒵(x) + a_ac·1_{𝒵^c}(x)·f_Z(x)]·1_{r≤t}
    ///  + 1_{𝒵^c}(x)·1_{t<r}·f_t(x)·∫ f_{r-t}(z-x)/f_r(z) P_Z(dz)`.
    pub fn q_kernel(&self, r: f64, t: f64, x: f64, in_singular_support: bool) -> Result<f64> {
        if !(t > 0.0 && r > 0.0) {
            return Err(Error::invalid("q kernel needs t > 0 and r > 0"));
        }
        if in_singular_support {
            Ok(if r <= t {
                1.0 - self.pinning.a_ac()
            } else {
                0.0
            })
        } else if r <= t {
            Ok(self.pinning.a_ac() * self.pinning.ac_pdf(x))
        } else {
            Ok(self.f(t, x)? * self.pin_kernel_integral(r, t, x, |_| 1.0)?)
        }
    }

    /// Unnormalized pieces of the `τ`-posterior on the complement branch.
    /// Returns `(past, future_at_atoms, future_density_total, denominator)`.
    fn tau_posterior_parts(&self, obs: &Observation) -> Result<TauParts> {
        let (t, x) = (obs.time, obs.value);
        let f_tau_t = self.length.cdf(t);
        if obs.in_singular_support {
            if f_tau_t <= ZERO_EVIDENCE {
                return Err(Error::ZeroEvidence(
                    "observation in the singular support but F_τ(t) = 0".into(),
                ));
            }
            return Ok(TauParts {
                past_unnorm: f_tau_t,
                future_atom_unnorm: Vec::new(),
                future_density_unnorm: 0.0,
                denominator: f_tau_t,
                f_t_x: 0.0,
            });
        }
        let past_unnorm = self.pinning.a_ac() * self.pinning.ac_pdf(x) * f_tau_t;
        let f_t_x = self.f(t, x)?;
        let mut future_atom_unnorm = Vec::new();
        for (r, p) in self.length.atoms_in((t, f64::INFINITY)) {
            future_atom_unnorm.push((r, f_t_x * p * self.pin_kernel_integral(r, t, x, |_| 1.0)?));
        }
        let future_density_unnorm = if self.length.has_density() {
            // The window integral covers atoms and density together; the
            // atom contributions recompute identically, so subtracting them
            // leaves exactly the density share.
            let fail = FailCell::new();
            let full = f_t_x
                * self.length.integrate(
                    |r| fail.capture(|| self.pin_kernel_integral(r, t, x, |_| 1.0)),
                    (t, f64::INFINITY),
                    &self.quad,
                )?;
            fail.check()?;
            full - future_atom_unnorm.iter().map(|&(_, w)| w).sum::<f64>()
        } else {
            0.0
        };
        let denominator = past_unnorm
            + future_atom_unnorm.iter().map(|&(_, w)| w).sum::<f64>()
            + future_density_unnorm;
        if denominator <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "τ-posterior denominator vanished at (t={t}, x={x})"
            )));
        }
        Ok(TauParts {
            past_unnorm,
            future_atom_unnorm,
            future_density_unnorm,
            denominator,
            f_t_x,
        })
    }

    /// Posterior law of `τ` given one observation (Bayes against `q_t`).
    pub fn tau_posterior(&self, obs: &Observation) -> Result<PosteriorLaw> {
        let (t, x) = (obs.time, obs.value);
        if obs.in_singular_support {
            // P_τ restricted to (0, t], renormalized by F_τ(t).
            let parts = self.tau_posterior_parts(obs)?;
            let f_tau_t = parts.denominator;
            let atoms: Vec<(f64, f64)> = self
                .length
                .atoms_in((0.0, t))
                .map(|(r, p)| (r, p / f_tau_t))
                .collect();
            let continuous = self.restricted_length_density(t, f_tau_t)?;
            return Ok(PosteriorLaw {
                atoms,
                continuous,
                singular: None,
            });
        }
        let parts = self.tau_posterior_parts(obs)?;
        let d = parts.denominator;
        let past_scale = self.pinning.a_ac() * self.pinning.ac_pdf(x);
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut past_atom_mass = 0.0;
        if parts.past_unnorm > 0.0 {
            for (r, p) in self.length.atoms_in((0.0, t)) {
                let mass = p * past_scale / d;
                past_atom_mass += mass;
                atoms.push((r, mass));
            }
        }
        for &(r, w) in &parts.future_atom_unnorm {
            atoms.push((r, w / d));
        }
        let continuous = if self.length.has_density() {
            let me = self.clone();
            let (t_obs, x_obs) = (t, x);
            let f_t_x = parts.f_t_x;
            let weight =
                parts.past_unnorm / d - past_atom_mass + parts.future_density_unnorm / d;
            let dens = self.length.density.clone().expect("has_density");
            let dw = self.length.density_weight;
            let density: DensityFn = Arc::new(move |r: f64| {
                let base = dw * dens.pdf(r);
                if base == 0.0 {
                    return Ok(0.0);
                }
                if r <= t_obs {
                    Ok(base * past_scale / d)
                } else {
                    Ok(base * f_t_x * me.pin_kernel_integral(r, t_obs, x_obs, |_| 1.0)? / d)
                }
            });
            let (lo, hi) = self
                .length
                .density
                .as_ref()
                .expect("has_density")
                .support();
            Some(ContinuousPart {
                weight,
                domain: (lo, hi),
                breakpoints: vec![t],
                density,
            })
        } else {
            None
        };
        Ok(PosteriorLaw {
            atoms,
            continuous,
            singular: None,
        })
    }

    /// `P_τ` restricted to `(0, t]` and renormalized — the `𝒵`-branch
    /// continuous part of the τ-posterior.
    fn restricted_length_density(&self, t: f64, norm: f64) -> Result<Option<ContinuousPart>> {
        if !self.length.has_density() {
            return Ok(None);
        }
        let dens = self.length.density.clone().expect("has_density");
        let dw = self.length.density_weight;
        let (lo, hi) = dens.support();
        let weight = dw * dens.cdf(t) / norm;
        let t_cut = t;
        let density: DensityFn = Arc::new(move |r: f64| {
            if r <= t_cut {
                Ok(dw * dens.pdf(r) / norm)
            } else {
                Ok(0.0)
            }
        });
        Ok(Some(ContinuousPart {
            weight,
            domain: (lo, hi.min(t)),
            breakpoints: vec![],
            density,
        }))
    }

    /// `P(τ ≤ t | ζ_t = x)`: the past mass of the τ-posterior. Lies in
    /// `{0, 1}` when `a_ac = 0`; strictly interior on the event where a
    /// stopped path sits on an absolutely continuous pin value.
    pub fn survival_given_state(&self, obs: &Observation) -> Result<f64> {
        if obs.in_singular_support {
            let parts = self.tau_posterior_parts(obs)?;
            debug_assert!(parts.denominator > 0.0);
            return Ok(1.0);
        }
        let parts = self.tau_posterior_parts(obs)?;
        Ok(parts.past_unnorm / parts.denominator)
    }

    /// `E[g(Z) | ζ_t = x]`.
    pub fn z_posterior_expectation<G: Fn(f64) -> f64 + Copy>(
        &self,
        g: G,
        obs: &Observation,
    ) -> Result<f64> {
        let (t, x) = (obs.time, obs.value);
        if obs.in_singular_support {
            return Ok(g(x));
        }
        let parts = self.tau_posterior_parts(obs)?;
        let numer_past = self.pinning.a_ac() * self.pinning.ac_pdf(x) * self.length.cdf(t) * g(x);
        let numer_future = parts.f_t_x * self.length_pin_integral((t, f64::INFINITY), t, x, g)?;
        Ok((numer_past + numer_future) / parts.denominator)
    }

    /// `E[g(Z) | ζ_t^{r,Z} = x]` for a deterministic length `r`:
    /// `g(x)` when the bridge has been pinned (`r ≤ t`), otherwise the
    /// Bayes ratio of pinning-kernel integrals.
    pub fn fixed_length_z_expectation<G: Fn(f64) -> f64 + Copy>(
        &self,
        g: G,
        r: f64,
        t: f64,
        x: f64,
    ) -> Result<f64> {
        if !(r > 0.0 && t > 0.0) {
            return Err(Error::invalid("fixed-length expectation needs r, t > 0"));
        }
        if r <= t {
            return Ok(g(x));
        }
        let denom = self.pin_kernel_integral(r, t, x, |_| 1.0)?;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "pinning kernel vanished at (r={r}, t={t}, x={x})"
            )));
        }
        Ok(self.pin_kernel_integral(r, t, x, g)? / denom)
    }

    /// The predictive law of `ζ_u` given `ζ_t = x` for `u > t`: a point
    /// mass at `x` (stopped), a pin-distributed part for `τ ∈ (t, u]`, and
    /// a continuous part propagated by the free increment density for
    /// `τ > u`.
    pub fn predictive_law(&self, obs: &Observation, u: f64) -> Result<PosteriorLaw> {
        let (t, x) = (obs.time, obs.value);
        if !(u > t) {
            return Err(Error::invalid(format!(
                "predictive law needs u > t, got u={u}, t={t}"
            )));
        }
        let p_stop = self.survival_given_state(obs)?;
        if obs.in_singular_support || p_stop >= 1.0 {
            return Ok(PosteriorLaw::point_mass(x));
        }
        // Normalizer over all future lengths.
        let n_total = self.length_pin_integral((t, f64::INFINITY), t, x, |_| 1.0)?;
        if n_total <= ZERO_EVIDENCE {
            return Ok(PosteriorLaw::point_mass(x));
        }
        let live = 1.0 - p_stop;

        // Pin part: the z-measure w(z)·P_Z(dz) with
        // w(z) = ∫_{(t,u]} f_{r-t}(z-x)/f_r(z) P_τ(dr).
        let me = self.clone();
        let (t_o, x_o) = (t, x);
        let w_of_z = move |z: f64| -> Result<f64> {
            let fail = FailCell::new();
            let v = me.length.integrate(
                |r| {
                    fail.capture(|| {
                        let fz = me.f(r, z)?;
                        if !(fz > 0.0) || !fz.is_finite() {
                            return Err(Error::DegeneratePin { r, z });
                        }
                        Ok(me.f(r - t_o, z - x_o)? / fz)
                    })
                },
                (t_o, u),
                &me.quad,
            )?;
            fail.check()?;
            Ok(v)
        };
        let w_of_z = Arc::new(w_of_z);

        let mut atoms = vec![(x, p_stop)];
        if self.pinning.weight_discrete > 0.0 {
            for &(z, p) in &self.pinning.atoms {
                let w = w_of_z(z)?;
                let mass = live * self.pinning.weight_discrete * p * w / n_total;
                if mass > 0.0 {
                    atoms.push((z, mass));
                }
            }
        }

        let singular = if self.pinning.weight_singular > 0.0 {
            let spec = *self.pinning.cantor.as_ref().expect("validated cantor");
            let a_sc = self.pinning.weight_singular;
            let w_of_z = w_of_z.clone();
            let reweight: DensityFn =
                Arc::new(move |z: f64| Ok(live * a_sc * w_of_z(z)? / n_total));
            let fail = FailCell::new();
            let rw = reweight.clone();
            let weight =
                spec.integrate(|z| fail.eval(&rw, z), spec.integration_depth)?;
            fail.check()?;
            Some(SingularPart {
                weight,
                base: spec,
                reweight,
            })
        } else {
            None
        };

        // Continuous part: AC-pin contribution plus the unstopped-state
        // density f_{u-t}(y-x)·∫_{(u,∞)} ∫ f_{r-u}(z-y)/f_r(z) P_Z(dz) P_τ(dr).
        let me = self.clone();
        let a_ac = self.pinning.a_ac();
        let w_for_ac = w_of_z.clone();
        let density: DensityFn = Arc::new(move |y: f64| {
            let mut v = 0.0;
            if a_ac > 0.0 {
                let fz = me.pinning.ac_pdf(y);
                if fz > 0.0 {
                    v += live * a_ac * fz * w_for_ac(y)? / n_total;
                }
            }
            let step = me.f(u - t_o, y - x_o)?;
            if step > 0.0 {
                let b = me.length_pin_integral((u, f64::INFINITY), u, y, |_| 1.0)?;
                v += live * step * b / n_total;
            }
            Ok(v)
        });
        // Masses from the exact length-window identities.
        let pin_window_mass = self.length_pin_integral((t, u), t, x, |_| 1.0)?;
        let ac_pin_mass = if a_ac > 0.0 {
            let fail = FailCell::new();
            let d = self.pinning.ac_density.as_ref().expect("validated density");
            let w = w_of_z.clone();
            let v = d.integrate(|z| fail.capture(|| w(z)), &self.quad)?;
            fail.check()?;
            live * a_ac * v / n_total
        } else {
            0.0
        };
        let future_mass = live * (n_total - pin_window_mass) / n_total;
        let weight = ac_pin_mass + future_mass;
        let domain = if self.model.is_subordinator() {
            (0.0, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        let continuous = Some(ContinuousPart {
            weight,
            domain,
            breakpoints: vec![x],
            density,
        });
        Ok(PosteriorLaw {
            atoms,
            continuous,
            singular,
        })
    }

    fn require_two_time_preconditions(&self, t1: f64, t2: f64) -> Result<()> {
        if !(t1 > 0.0 && t2 > t1) {
            return Err(Error::invalid(format!(
                "two-time formulas need 0 < t1 < t2, got t1={t1}, t2={t2}"
            )));
        }
        if self.length.cdf(t1) != 0.0 {
            return Err(Error::PreconditionViolation(format!(
                "two-time formulas require F_τ(t1) = 0, got F_τ({t1}) = {}",
                self.length.cdf(t1)
            )));
        }
        let f2 = self.length.cdf(t2);
        if !(f2 > 0.0 && f2 < 1.0) {
            return Err(Error::PreconditionViolation(format!(
                "two-time formulas require 0 < F_τ(t2) < 1, got F_τ({t2}) = {f2}"
            )));
        }
        Ok(())
    }

    /// `ρ(r) = f_{r-t1}(x2-x1)/f_r(x2)` — the two-time length likelihood.
    fn two_time_rho(&self, t1: f64, r: f64, x1: f64, x2: f64) -> Result<f64> {
        let fx2 = self.f(r, x2)?;
        if !(fx2 > 0.0) || !fx2.is_finite() {
            return Err(Error::DegeneratePin { r, z: x2 });
        }
        Ok(self.f(r - t1, x2 - x1)? / fx2)
    }

    /// `U_{t1,t2}(x1,x2) = f_{t2-t1}(x2-x1) / ∫_{(t1,t2]} ρ(r) P_τ(dr)`.
    /// The Markov-necessity witness compares it against `f_{t2}(x2)/F_τ(t2)`.
    pub fn u_ratio(&self, t1: f64, t2: f64, x1: f64, x2: f64) -> Result<f64> {
        self.require_two_time_preconditions(t1, t2)?;
        let fail = FailCell::new();
        let denom = self.length.integrate(
            |r| fail.capture(|| self.two_time_rho(t1, r, x1, x2)),
            (t1, t2),
            &self.quad,
        )?;
        fail.check()?;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "two-time likelihood vanished on ({t1}, {t2}]"
            )));
        }
        Ok(self.f(t2 - t1, x2 - x1)? / denom)
    }

    /// The deviation `|U_{t1,t2}(x1,x2) − f_{t2}(x2)/F_τ(t2)|`; a strictly
    /// positive gap certifies that one-time conditioning cannot reproduce
    /// the two-time posterior, i.e. non-Markovianity.
    pub fn markov_necessity_gap(&self, t1: f64, t2: f64, x1: f64, x2: f64) -> Result<f64> {
        let u = self.u_ratio(t1, t2, x1, x2)?;
        let reference = self.f(t2, x2)? / self.length.cdf(t2);
        Ok((u - reference).abs())
    }

    /// Posterior of `τ` given `(ζ_{t1}, ζ_{t2}) = (x1, x2)`, under the
    /// derivation's standing assumptions `F_τ(t1) = 0 < F_τ(t2) < 1`.
    pub fn two_time_tau_posterior(
        &self,
        t1: f64,
        t2: f64,
        x1: f64,
        x2: f64,
        x2_in_singular_support: bool,
    ) -> Result<PosteriorLaw> {
        self.require_two_time_preconditions(t1, t2)?;
        let fail = FailCell::new();

        // Past block (t1, t2]: weight density ρ(r) (times a_ac f_Z(x2) on
        // the complement branch).
        let past_scale = if x2_in_singular_support {
            1.0
        } else {
            self.pinning.a_ac() * self.pinning.ac_pdf(x2)
        };
        let mut atom_unnorm: Vec<(f64, f64)> = Vec::new();
        for (r, p) in self.length.atoms_in((t1, t2)) {
            atom_unnorm.push((r, past_scale * p * self.two_time_rho(t1, r, x1, x2)?));
        }
        let past_density_unnorm = if self.length.has_density() {
            let v = self.length.integrate(
                |r| fail.capture(|| self.two_time_rho(t1, r, x1, x2)),
                (t1, t2),
                &self.quad,
            )?;
            fail.check()?;
            past_scale * v
                - atom_unnorm.iter().map(|&(_, w)| w).sum::<f64>()
        } else {
            0.0
        };

        // Future block (t2, ∞) exists on the complement branch only.
        let mut future_unnorm: Vec<(f64, f64)> = Vec::new();
        let mut future_density_unnorm = 0.0;
        if !x2_in_singular_support {
            let step = self.f(t2 - t1, x2 - x1)?;
            for (r, p) in self.length.atoms_in((t2, f64::INFINITY)) {
                future_unnorm.push((r, step * p * self.pin_kernel_integral(r, t2, x2, |_| 1.0)?));
            }
            if self.length.has_density() {
                let v = self.length.integrate(
                    |r| fail.capture(|| self.pin_kernel_integral(r, t2, x2, |_| 1.0)),
                    (t2, f64::INFINITY),
                    &self.quad,
                )?;
                fail.check()?;
                future_density_unnorm =
                    step * v - future_unnorm.iter().map(|&(_, w)| w).sum::<f64>();
            }
        }

        let denom = atom_unnorm.iter().map(|&(_, w)| w).sum::<f64>()
            + past_density_unnorm
            + future_unnorm.iter().map(|&(_, w)| w).sum::<f64>()
            + future_density_unnorm;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "two-time τ-posterior denominator vanished at ({t1}, {t2}, {x1}, {x2})"
            )));
        }

        let mut atoms: Vec<(f64, f64)> =
            atom_unnorm.iter().map(|&(r, w)| (r, w / denom)).collect();
        atoms.extend(future_unnorm.iter().map(|&(r, w)| (r, w / denom)));

        let continuous = if self.length.has_density() {
            let me = self.clone();
            let dens = self.length.density.clone().expect("has_density");
            let dw = self.length.density_weight;
            let singular_branch = x2_in_singular_support;
            let density: DensityFn = Arc::new(move |r: f64| {
                let base = dw * dens.pdf(r);
                if base == 0.0 || r <= t1 {
                    return Ok(0.0);
                }
                if r <= t2 {
                    Ok(base * past_scale * me.two_time_rho(t1, r, x1, x2)? / denom)
                } else if singular_branch {
                    Ok(0.0)
                } else {
                    let step = me.f(t2 - t1, x2 - x1)?;
                    Ok(base * step * me.pin_kernel_integral(r, t2, x2, |_| 1.0)? / denom)
                }
            });
            let (lo, hi) = self.length.density.as_ref().unwrap().support();
            Some(ContinuousPart {
                weight: (past_density_unnorm + future_density_unnorm) / denom,
                domain: (lo.max(t1), if x2_in_singular_support { hi.min(t2) } else { hi }),
                breakpoints: vec![t2],
                density,
            })
        } else {
            None
        };

        Ok(PosteriorLaw {
            atoms,
            continuous,
            singular: None,
        })
    }

    /// `E[g(Z) | ζ_{t1} = x1, ζ_{t2} = x2]` in the algebraically consistent
    /// form: on the complement branch,
    /// `[a_ac f_Z(x2) g(x2) + U·∫_{(t2,∞)} ∫ g(z) f_{r-t2}(z-x2)/f_r(z) P_Z(dz) P_τ(dr)]`
    /// over the same expression with `g ≡ 1`.
    pub fn two_time_z_expectation<G: Fn(f64) -> f64 + Copy>(
        &self,
        g: G,
        t1: f64,
        t2: f64,
        x1: f64,
        x2: f64,
        x2_in_singular_support: bool,
    ) -> Result<f64> {
        self.require_two_time_preconditions(t1, t2)?;
        if x2_in_singular_support {
            return Ok(g(x2));
        }
        let u = self.u_ratio(t1, t2, x1, x2)?;
        let base = self.pinning.a_ac() * self.pinning.ac_pdf(x2);
        let future_g = self.length_pin_integral((t2, f64::INFINITY), t2, x2, g)?;
        let future_1 = self.length_pin_integral((t2, f64::INFINITY), t2, x2, |_| 1.0)?;
        let denom = base + u * future_1;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "two-time Z-expectation denominator vanished at ({t1}, {t2}, {x1}, {x2})"
            )));
        }
        Ok((base * g(x2) + u * future_g) / denom)
    }

    /// Transition expectation of the two-dimensional lift `Y = (Z, ζ)`:
    /// `E[G(Y_u) | Y_t = (z, x)]`. The stopped branch is selected by the
    /// bit-exact `x == z` convention of the path sampler.
    pub fn y_transition<G: Fn(f64, f64) -> f64 + Copy>(
        &self,
        g: G,
        t: f64,
        u: f64,
        z: f64,
        x: f64,
    ) -> Result<f64> {
        if !(t > 0.0 && u > t) {
            return Err(Error::invalid("y_transition needs 0 < t < u"));
        }
        if x == z {
            return Ok(g(z, z));
        }
        let rho = |r: f64| -> Result<f64> {
            let fz = self.f(r, z)?;
            if !(fz > 0.0) || !fz.is_finite() {
                return Err(Error::DegeneratePin { r, z });
            }
            Ok(self.f(r - t, z - x)? / fz)
        };
        let fail = FailCell::new();
        let denom = self
            .length
            .integrate(|r| fail.capture(|| rho(r)), (t, f64::INFINITY), &self.quad)?;
        fail.check()?;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "y_transition denominator vanished at (t={t}, z={z}, x={x})"
            )));
        }
        let pin_w = self
            .length
            .integrate(|r| fail.capture(|| rho(r)), (t, u), &self.quad)?;
        fail.check()?;

        // Continuous block: ∫ G(z,y)·f_{u-t}(y-x)·[∫_{(u,∞)} f_{r-u}(z-y)/f_r(z) P_τ(dr)] dy.
        let (y_lo, y_hi) = if self.model.is_subordinator() {
            (x.min(z), x.max(z))
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        let me = self.clone();
        let cont = quad::integrate(
            |y| {
                fail.capture(|| {
                    let step = me.f(u - t, y - x)?;
                    if step == 0.0 {
                        return Ok(0.0);
                    }
                    let fail2 = FailCell::new();
                    let future = me.length.integrate(
                        |r| {
                            fail2.capture(|| {
                                let fz = me.f(r, z)?;
                                if !(fz > 0.0) || !fz.is_finite() {
                                    return Err(Error::DegeneratePin { r, z });
                                }
                                Ok(me.f(r - u, z - y)? / fz)
                            })
                        },
                        (u, f64::INFINITY),
                        &me.quad,
                    )?;
                    fail2.check()?;
                    Ok(g(z, y) * step * future)
                })
            },
            y_lo,
            y_hi,
            &self.quad,
        )?;
        fail.check()?;
        Ok(g(z, z) * pin_w / denom + cont / denom)
    }

    /// `E[g(ζ_u) | ζ_{t1} = x1, ζ_{t2} = x2]` for `u > t2`: the two-time
    /// analogue of the predictive law, used to quantify how the prediction
    /// depends on the earlier coordinate.
    pub fn two_time_predictive_expectation<G: Fn(f64) -> f64 + Copy>(
        &self,
        g: G,
        t1: f64,
        t2: f64,
        u: f64,
        x1: f64,
        x2: f64,
        x2_in_singular_support: bool,
    ) -> Result<f64> {
        self.require_two_time_preconditions(t1, t2)?;
        if !(u > t2) {
            return Err(Error::invalid("two-time prediction needs u > t2"));
        }
        if x2_in_singular_support {
            return Ok(g(x2));
        }
        let past_scale = self.pinning.a_ac() * self.pinning.ac_pdf(x2);
        let fail = FailCell::new();
        let past_unnorm = past_scale
            * self.length.integrate(
                |r| fail.capture(|| self.two_time_rho(t1, r, x1, x2)),
                (t1, t2),
                &self.quad,
            )?;
        fail.check()?;
        let step = self.f(t2 - t1, x2 - x1)?;
        // τ ∈ (t2, u]: pinned by u; the τ-likelihood I_1 cancels against the
        // Z-posterior normalizer, leaving the plain pin-kernel integral of g.
        let pinned = step * self.length_pin_integral((t2, u), t2, x2, g)?;
        // τ > u: propagate the state to u by the free increment and pin later.
        let me = self.clone();
        let far = step
            * self.length.integrate(
                |r| {
                    fail.capture(|| {
                        let fail2 = FailCell::new();
                        let v = me.pinning.integrate(
                            |z| {
                                fail2.capture(|| {
                                    let fz = me.f(r, z)?;
                                    if !(fz > 0.0) || !fz.is_finite() {
                                        return Err(Error::DegeneratePin { r, z });
                                    }
                                    let (y_lo, y_hi) = if me.model.is_subordinator() {
                                        (x2, z)
                                    } else {
                                        (f64::NEG_INFINITY, f64::INFINITY)
                                    };
                                    let fail3 = FailCell::new();
                                    let inner = quad::integrate(
                                        |y| {
                                            fail3.capture(|| {
                                                Ok(g(y)
                                                    * me.f(u - t2, y - x2)?
                                                    * me.f(r - u, z - y)?)
                                            })
                                        },
                                        y_lo,
                                        y_hi,
                                        &me.quad,
                                    )?;
                                    fail3.check()?;
                                    Ok(inner / fz)
                                })
                            },
                            &me.quad,
                        )?;
                        fail2.check()?;
                        Ok(v)
                    })
                },
                (u, f64::INFINITY),
                &self.quad,
            )?;
        fail.check()?;
        let future_1 = step * self.length_pin_integral((t2, f64::INFINITY), t2, x2, |_| 1.0)?;
        let denom = past_unnorm + future_1;
        if denom <= ZERO_EVIDENCE {
            return Err(Error::ZeroEvidence(format!(
                "two-time predictive denominator vanished at ({t1}, {t2}, {x1}, {x2})"
            )));
        }
        Ok((past_unnorm * g(x2) + pinned + far) / denom)
    }
}

struct TauParts {
    past_unnorm: f64,
    future_atom_unnorm: Vec<(f64, f64)>,
    future_density_unnorm: f64,
    denominator: f64,
    f_t_x: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::AcDensity;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Continuous, Normal};

    fn brownian() -> LevyModel {
        LevyModel::brownian(1.0, 0.0).unwrap()
    }

    fn qcfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn model_with(lm: LengthMeasure, pm: PinningMeasure) -> RandomBridgeModel {
        RandomBridgeModel::new(brownian(), lm, pm, qcfg()).unwrap()
    }

    #[test]
    fn q_kernel_branches() {
        // x an atom of P_Z, r ≤ t, a_ac = 0 → 1.
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        assert_abs_diff_eq!(m.q_kernel(0.5, 1.0, 0.0, true).unwrap(), 1.0, epsilon = 0.0);

        // x ∉ 𝒵, r ≤ t, a_ac = 1, uniform f_Z: q = f_Z(x) = 1.
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Uniform {
                lower: 0.0,
                upper: 1.0,
            })
            .unwrap(),
        );
        assert_abs_diff_eq!(m.q_kernel(0.5, 1.0, 0.3, false).unwrap(), 1.0, epsilon = 0.0);

        // Brownian, x ∉ 𝒵, t=1 < r=2, Z an atom at 0: f_1(-x)·f_1(x)/f_2(0).
        let m = model_with(
            LengthMeasure::fixed(2.0).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let x = 0.7;
        let n1 = Normal::new(0.0, 1.0).unwrap();
        let n2 = Normal::new(0.0, 2.0f64.sqrt()).unwrap();
        let expect = n1.pdf(-x) * n1.pdf(x) / n2.pdf(0.0);
        assert_abs_diff_eq!(m.q_kernel(2.0, 1.0, x, false).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn tau_posterior_singular_branch() {
        // a_ac = 0, x = pin atom, F_τ(t) > 0 → P(τ ≤ t | ζ_t = x) = 1.
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let obs = Observation::from_value(1.5, 0.0, &m.pinning).unwrap();
        assert!(obs.in_singular_support);
        assert_eq!(m.survival_given_state(&obs).unwrap(), 1.0);
        let law = m.tau_posterior(&obs).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(law.atoms(), &[(1.0, 1.0)]);
    }

    #[test]
    fn tau_posterior_complement_branch_with_a_ac_zero() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let obs = Observation::from_value(1.5, 0.7, &m.pinning).unwrap();
        assert!(!obs.in_singular_support);
        // a_ac = 0, x ∉ 𝒵 → survival 0; posterior concentrated on τ = 2.
        assert_eq!(m.survival_given_state(&obs).unwrap(), 0.0);
        let law = m.tau_posterior(&obs).unwrap();
        assert_eq!(law.atoms().len(), 1);
        assert_eq!(law.atoms()[0].0, 2.0);
        assert_abs_diff_eq!(law.atoms()[0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_posterior_mixed_is_interior_and_normalized() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let obs = Observation::from_value(1.5, 0.7, &m.pinning).unwrap();
        let s = m.survival_given_state(&obs).unwrap();
        assert!(s > 0.0 && s < 1.0, "survival {s}");
        let law = m.tau_posterior(&obs).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-9);
        // Past mass of the posterior equals survival exactly.
        let past: f64 = law
            .atoms()
            .iter()
            .filter(|&&(r, _)| r <= obs.time)
            .map(|&(_, p)| p)
            .sum();
        assert_abs_diff_eq!(past, s, epsilon = 1e-15);
    }

    #[test]
    fn tau_posterior_with_length_density() {
        use crate::measures::LengthDensity;
        let m = model_with(
            LengthMeasure::continuous(LengthDensity::Exponential { rate: 1.0 }).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let obs = Observation::from_value(1.0, 0.4, &m.pinning).unwrap();
        let law = m.tau_posterior(&obs).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-6);
        let s = m.survival_given_state(&obs).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn z_expectation_examples() {
        // Normalization: g ≡ 1.
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let obs = Observation::from_value(1.5, 0.7, &m.pinning).unwrap();
        assert_abs_diff_eq!(
            m.z_posterior_expectation(|_| 1.0, &obs).unwrap(),
            1.0,
            epsilon = 1e-9
        );

        // Stopped branch: g(x) at an atom.
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::atoms(vec![(0.25, 1.0)]).unwrap(),
        );
        let obs = Observation::from_value(1.5, 0.25, &m.pinning).unwrap();
        assert_eq!(m.z_posterior_expectation(|z| z * z, &obs).unwrap(), 0.0625);

        // Symmetric two-atom pin at x = 0 has zero posterior mean.
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
        );
        let obs = Observation::from_value(0.5, 0.0, &m.pinning).unwrap();
        assert_abs_diff_eq!(
            m.z_posterior_expectation(|z| z, &obs).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn fixed_length_two_atom_bayes_is_tanh() {
        // Brownian σ=1, Z = ±1 equally likely, r=2, t=1, x=0.5:
        // E[Z | ζ_1^{2,Z} = 0.5] = tanh(0.5).
        let m = model_with(
            LengthMeasure::fixed(2.0).unwrap(),
            PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
        );
        let v = m.fixed_length_z_expectation(|z| z, 2.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.5f64.tanh(), epsilon = 1e-12);
        // Pinned branch returns g(x).
        let v = m.fixed_length_z_expectation(|z| z, 0.5, 1.0, 0.37).unwrap();
        assert_eq!(v, 0.37);
        // Symmetry: x = 0 gives 0.
        let v = m.fixed_length_z_expectation(|z| z, 2.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn predictive_law_atom_reduction() {
        // τ = 1 surely, Z = 0 surely, t = 0.5 < u = 1.5: everything is
        // pinned by u, so the law is a point mass at the pin.
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let obs = Observation::from_value(0.5, 0.2, &m.pinning).unwrap();
        let law = m.predictive_law(&obs, 1.5).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(law.continuous_weight(), 0.0);
        // Stopped atom carries weight 0 (a_ac = 0, x ∉ 𝒵), pin atom weight 1.
        let pin_mass: f64 = law
            .atoms()
            .iter()
            .filter(|&&(z, _)| z == 0.0)
            .map(|&(_, p)| p)
            .sum();
        assert_abs_diff_eq!(pin_mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn predictive_law_mass_splits_between_pin_and_future() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let obs = Observation::from_value(0.5, 0.2, &m.pinning).unwrap();
        let law = m.predictive_law(&obs, 1.5).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-6);
        assert!(law.continuous_weight() > 0.0);
        let pin_mass: f64 = law
            .atoms()
            .iter()
            .filter(|&&(z, _)| z == 0.0)
            .map(|&(_, p)| p)
            .sum();
        assert!(pin_mass > 0.0 && pin_mass < 1.0);
        // The continuous density is the τ=2 bridge step, so its conditional
        // mean given "not pinned" is the bridge interpolation toward z=0.
        let mean_cont = law.expect(|y| y, &qcfg()).unwrap() - 0.0 * pin_mass;
        let cond_mean = mean_cont / 1.0;
        // Against direct Eq.-style computation: weight · E[bridge step].
        let w_cont = law.continuous_weight();
        let step_mean = 0.2 + (1.5 - 0.5) / (2.0 - 0.5) * (0.0 - 0.2);
        assert_abs_diff_eq!(cond_mean, w_cont * step_mean, epsilon = 1e-6);
    }

    #[test]
    fn predictive_law_with_ac_pin_normalizes() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let obs = Observation::from_value(0.5, 0.3, &m.pinning).unwrap();
        let law = m.predictive_law(&obs, 1.5).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn u_ratio_examples() {
        // Single τ atom at r* ∈ (t1, t2]: U = f_{t2-t1}(d)·f_{r*}(x2)/f_{r*-t1}(d).
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 1.0)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let (t1, t2, x1, x2) = (0.5, 1.5, 0.3, 0.9);
        let mres = m.u_ratio(t1, t2, x1, x2);
        // F_τ(t2) = 1 violates the 0 < F < 1 precondition here.
        assert!(matches!(mres, Err(Error::PreconditionViolation(_))));

        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        let u = m.u_ratio(t1, t2, x1, x2).unwrap();
        let n = |v: f64, s2: f64| Normal::new(0.0, s2.sqrt()).unwrap().pdf(v);
        let d = x2 - x1;
        let expect = n(d, t2 - t1) / (0.5 * n(d, 1.0 - t1) / n(x2, 1.0));
        assert_abs_diff_eq!(u, expect, epsilon = 1e-12);

        // Witness gap at the acceptance configuration is macroscopic.
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let gap = m.markov_necessity_gap(0.5, 1.5, 0.0, 1.0).unwrap();
        assert!(gap > 1e-3, "witness gap {gap}");

        // Degenerate x2 = x1 still yields a finite positive value.
        let u = m.u_ratio(0.5, 1.5, 0.4, 0.4).unwrap();
        assert!(u.is_finite() && u > 0.0);

        // Precondition F_τ(t1) = 0 is enforced.
        assert!(matches!(
            m.u_ratio(1.0, 1.5, 0.0, 1.0),
            Err(Error::PreconditionViolation(_))
        ));
    }

    #[test]
    fn two_time_tau_posterior_branches() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(0.25, 1.0)]).unwrap(),
        );
        // Singular branch: posterior supported on (t1, t2].
        let law = m.two_time_tau_posterior(0.5, 1.5, 0.1, 0.25, true).unwrap();
        assert_abs_diff_eq!(law.total_mass(&qcfg()).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(law.atoms(), &[(1.0, 1.0)]);

        // Complement branch with a_ac = 0: all mass on the future atom.
        let law = m.two_time_tau_posterior(0.5, 1.5, 0.1, 0.4, false).unwrap();
        assert_eq!(law.atoms().len(), 1);
        assert_eq!(law.atoms()[0].0, 2.0);
        assert_abs_diff_eq!(law.atoms()[0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_time_z_matches_single_time_when_a_ac_zero() {
        // Theorem-2 coherence: with a_ac = 0 the two-time expectation
        // coincides with the one-time expectation at t2 and is constant in x1.
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
        );
        let (t1, t2, x2) = (0.5, 1.5, 0.6);
        let obs = Observation::from_value(t2, x2, &m.pinning).unwrap();
        let single = m.z_posterior_expectation(|z| z, &obs).unwrap();
        for &x1 in &[-1.0, -0.4, 0.0, 0.3, 1.2] {
            let two = m.two_time_z_expectation(|z| z, t1, t2, x1, x2, false).unwrap();
            assert_abs_diff_eq!(two, single, epsilon = 1e-9);
        }
    }

    #[test]
    fn two_time_z_depends_on_x1_when_ac() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::absolutely_continuous(AcDensity::Normal {
                mean: 0.0,
                std_dev: 1.0,
            })
            .unwrap(),
        );
        let (t1, t2, x2) = (0.5, 1.5, 1.0);
        let a = m.two_time_z_expectation(|z| z, t1, t2, 0.0, x2, false).unwrap();
        let b = m.two_time_z_expectation(|z| z, t1, t2, 1.0, x2, false).unwrap();
        assert!((a - b).abs() > 1e-3, "expected x1-dependence, got {a} vs {b}");
        // Normalization g ≡ 1 is exact.
        let one = m.two_time_z_expectation(|_| 1.0, t1, t2, 0.0, x2, false).unwrap();
        assert_abs_diff_eq!(one, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn y_transition_examples() {
        // Normalization and the stopped branch.
        let m = model_with(
            LengthMeasure::atoms(vec![(2.0, 1.0)]).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        assert_eq!(m.y_transition(|z, _y| z + 1.0, 1.0, 1.5, 0.3, 0.3).unwrap(), 1.3);
        let total = m.y_transition(|_, _| 1.0, 1.0, 1.5, 0.0, 0.3).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);

        // Single-atom τ reduces to the fixed-bridge transition mean:
        // E[ζ_{1.5} | ζ_1 = 0.3] with r=2, z=0 is 0.3 + 0.5/1.0·(0-0.3).
        let mean = m.y_transition(|_, y| y, 1.0, 1.5, 0.0, 0.3).unwrap();
        assert_abs_diff_eq!(mean, 0.15, epsilon = 1e-6);
    }

    #[test]
    fn two_time_predictive_matches_single_when_markov() {
        let m = model_with(
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
        );
        let (t1, t2, u, x2) = (0.5, 1.5, 2.5, 0.4);
        let obs = Observation::from_value(t2, x2, &m.pinning).unwrap();
        let single = m
            .predictive_law(&obs, u)
            .unwrap()
            .expect(|y| y, &qcfg())
            .unwrap();
        for &x1 in &[-0.5, 0.0, 0.8] {
            let two = m
                .two_time_predictive_expectation(|y| y, t1, t2, u, x1, x2, false)
                .unwrap();
            assert_abs_diff_eq!(two, single, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_evidence_reported() {
        let m = model_with(
            LengthMeasure::fixed(1.0).unwrap(),
            PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap(),
        );
        // Observation in 𝒵 before any possible stopping time.
        let obs = Observation::new(0.5, 0.0, true).unwrap();
        assert!(matches!(
            m.survival_given_state(&obs),
            Err(Error::ZeroEvidence(_))
        ));
    }
}
