//! Sampling of fixed-endpoint bridges `X^{r,z}` and the random bridge `ζ`.
//!
//! Two routes are provided and cross-checked against each other:
//!
//! * explicit constructions for the Brownian and gamma families
//!   (`B_{t∧r} - (t∧r)/r·B_r + (t∧r)/r·z` and `z·γ_{t∧r}/γ_r`);
//! * a generic sequential sampler that draws each grid step exactly from
//!   the bridge transition density by numeric CDF inversion, applicable to
//!   any family with an evaluatable marginal (the only route for stable
//!   bridges).
//!
//! Paths are extended beyond the realized length by the constant pin value,
//! bit-exactly: `value == pin` at a grid time is equivalent to `length ≤ t`
//! by construction, which is what makes the stopping identity testable with
//! zero tolerance.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{DensityEvaluator, IncrementSupport, LevyModel};
use crate::error::{Error, Result};
use crate::measures::{LengthMeasure, PinningMeasure};
use crate::quad::{self, QuadratureConfig};

/// Time grid specification: a uniform grid on `(0, horizon]` or an explicit
/// strictly increasing list of times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default)]
    pub explicit: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn uniform(horizon: f64, steps: usize) -> Self {
        GridSpec {
            horizon,
            steps,
            explicit: None,
        }
    }

    pub fn at_times(times: Vec<f64>) -> Self {
        GridSpec {
            horizon: times.last().copied().unwrap_or(1.0),
            steps: times.len(),
            explicit: Some(times),
        }
    }

    /// The grid times; `t = 0` is excluded (`ζ_0 = 0` is implied).
    pub fn times(&self) -> Result<Vec<f64>> {
        let times = match &self.explicit {
            Some(list) => list.clone(),
            None => {
                if !(self.horizon > 0.0) || self.steps == 0 {
                    return Err(Error::invalid("grid needs horizon > 0 and steps ≥ 1"));
                }
                (1..=self.steps)
                    .map(|i| self.horizon * i as f64 / self.steps as f64)
                    .collect()
            }
        };
        let mut prev = 0.0;
        for &t in &times {
            if !(t > prev) || !t.is_finite() {
                return Err(Error::invalid(format!(
                    "grid times must be strictly increasing and positive, offending t={t}"
                )));
            }
            prev = t;
        }
        Ok(times)
    }
}

/// A sampled trajectory of `ζ` on a grid, carrying its realized `(τ, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    pub model: LevyModel,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Realized length `τ`.
    pub length: f64,
    /// Realized pin `Z`; values at grid times `≥ length` equal it bit-exactly.
    pub pin: f64,
}

impl BridgePath {
    pub fn is_stopped_at(&self, idx: usize) -> bool {
        self.length <= self.times[idx]
    }
}

/// Which bridge sampler to use for a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Family-specific explicit construction (Brownian and gamma only).
    Explicit,
    /// Sequential exact sampling of the transition kernel.
    Generic,
}

/// Brownian bridge via the explicit construction
/// `B_{t∧r} - (t∧r)/r·B_r + (t∧r)/r·z`. The drift cancels pathwise, so the
/// same driving noise with any drift yields the same bridge law.
pub fn sample_brownian_bridge_explicit<R: Rng + ?Sized>(
    volatility: f64,
    drift: f64,
    r: f64,
    z: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<BridgePath> {
    let model = LevyModel::brownian(volatility, drift)?;
    if !(r > 0.0) {
        return Err(Error::invalid(format!("bridge length must be positive, got {r}")));
    }
    // Simulate the motion at the pre-length grid times plus r itself.
    let mut sim_times: Vec<f64> = times.iter().copied().filter(|&t| t < r).collect();
    sim_times.push(r);
    let mut b = Vec::with_capacity(sim_times.len());
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    for &t in &sim_times {
        let dt = t - prev_t;
        let xi: f64 = StandardNormal.sample(rng);
        acc += drift * dt + volatility * dt.sqrt() * xi;
        b.push(acc);
        prev_t = t;
    }
    let b_r = *b.last().unwrap();
    let values = times
        .iter()
        .map(|&t| {
            if t < r {
                let idx = sim_times.partition_point(|&s| s < t);
                let ratio = t / r;
                b[idx] - ratio * b_r + ratio * z
            } else {
                z
            }
        })
        .collect();
    Ok(BridgePath {
        model,
        times: times.to_vec(),
        values,
        length: r,
        pin: z,
    })
}

/// Gamma bridge via the explicit construction `z·γ_{t∧r}/γ_r`.
pub fn sample_gamma_bridge_explicit<R: Rng + ?Sized>(
    shape_rate: f64,
    scale: f64,
    r: f64,
    z: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<BridgePath> {
    let model = LevyModel::gamma(shape_rate, scale)?;
    if !(r > 0.0) {
        return Err(Error::invalid(format!("bridge length must be positive, got {r}")));
    }
    if !(z > 0.0) {
        return Err(Error::invalid(format!(
            "gamma bridge pin must be positive, got {z}"
        )));
    }
    let mut sim_times: Vec<f64> = times.iter().copied().filter(|&t| t < r).collect();
    sim_times.push(r);
    let mut g = Vec::with_capacity(sim_times.len());
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    for &t in &sim_times {
        let dt = t - prev_t;
        let inc = GammaDist::new(shape_rate * dt, scale)
            .map_err(|e| Error::invalid(format!("gamma increment: {e}")))?
            .sample(rng);
        acc += inc;
        g.push(acc);
        prev_t = t;
    }
    let g_r = *g.last().unwrap();
    if !(g_r > 0.0) {
        return Err(Error::numerical(
            "gamma bridge",
            format!("degenerate gamma subordinator value {g_r} at r={r}"),
        ));
    }
    let values = times
        .iter()
        .map(|&t| {
            if t < r {
                let idx = sim_times.partition_point(|&s| s < t);
                z * (g[idx] / g_r)
            } else {
                z
            }
        })
        .collect();
    Ok(BridgePath {
        model,
        times: times.to_vec(),
        values,
        length: r,
        pin: z,
    })
}

/// Fixed-endpoint bridge through the generic transition-kernel sampler.
pub fn sample_fixed_bridge_generic<R: Rng + ?Sized>(
    eval: &DensityEvaluator,
    r: f64,
    z: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<BridgePath> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("bridge length must be positive, got {r}")));
    }
    let fz = eval.density(r, z)?;
    if !(fz > 0.0) || !fz.is_finite() {
        return Err(Error::DegeneratePin { r, z });
    }
    let mut values = Vec::with_capacity(times.len());
    let (mut prev_t, mut prev_x) = (0.0, 0.0);
    for &t in times {
        if t >= r {
            values.push(z);
            continue;
        }
        let y = sample_transition_value(eval, prev_t, t, r, prev_x, z, rng)?;
        values.push(y);
        prev_t = t;
        prev_x = y;
    }
    Ok(BridgePath {
        model: *eval.model(),
        times: times.to_vec(),
        values,
        length: r,
        pin: z,
    })
}

/// Explicit construction when the family has one, generic otherwise.
pub fn sample_fixed_bridge<R: Rng + ?Sized>(
    eval: &DensityEvaluator,
    kind: SamplerKind,
    r: f64,
    z: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<BridgePath> {
    match (kind, *eval.model()) {
        (SamplerKind::Explicit, LevyModel::BrownianDrift { volatility, drift }) => {
            sample_brownian_bridge_explicit(volatility, drift, r, z, times, rng)
        }
        (SamplerKind::Explicit, LevyModel::GammaSubordinator { shape_rate, scale }) => {
            sample_gamma_bridge_explicit(shape_rate, scale, r, z, times, rng)
        }
        (SamplerKind::Explicit, LevyModel::SymmetricStable { .. }) => Err(Error::invalid(
            "the stable family has no explicit bridge construction; use the generic sampler",
        )),
        (SamplerKind::Generic, _) => sample_fixed_bridge_generic(eval, r, z, times, rng),
    }
}

/// The random bridge: draws `τ ~ P_τ` and `Z ~ P_Z` independently, then
/// delegates to the fixed-endpoint sampler. The realized pair is recorded
/// on the path; grid values at times `≥ τ` equal the drawn pin bit-exactly.
pub fn sample_random_bridge<R: Rng + ?Sized>(
    eval: &DensityEvaluator,
    kind: SamplerKind,
    lm: &LengthMeasure,
    pm: &PinningMeasure,
    times: &[f64],
    rng: &mut R,
) -> Result<BridgePath> {
    let r = lm.sample(rng);
    let pin = pm.sample(rng);
    sample_fixed_bridge(eval, kind, r, pin.value, times, rng)
}

/// All marginal durations the generic sampler can request for the given
/// grid and (atomic) candidate lengths; used to pre-populate the stable
/// density cache before parallel sampling.
pub fn stable_cache_durations(times: &[f64], lengths: &[f64]) -> Vec<f64> {
    let mut durations = Vec::new();
    let mut push = |d: f64| {
        if d > 0.0 && !durations.iter().any(|&x: &f64| x.to_bits() == d.to_bits()) {
            durations.push(d);
        }
    };
    let mut prev = 0.0;
    for &t in times {
        push(t - prev);
        prev = t;
    }
    for &r in lengths {
        push(r);
        let mut prev = 0.0;
        for &t in times {
            if t < r {
                push(r - t);
                push(t - prev);
                prev = t;
            }
        }
    }
    durations
}

/// Writes paths as CSV: `time,value,realized_length,realized_pin,path_id`,
/// one row per grid time, 17 significant digits, LF line endings.
pub fn paths_to_csv<W: Write>(paths: &[BridgePath], out: &mut W) -> std::io::Result<()> {
    out.write_all(b"time,value,realized_length,realized_pin,path_id\n")?;
    for (id, path) in paths.iter().enumerate() {
        for (t, v) in path.times.iter().zip(&path.values) {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{id}",
                t, v, path.length, path.pin
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Generic one-step sampler: numeric inverse CDF of the transition density.
// ---------------------------------------------------------------------------

/// Segment coordinates. Each segment maps `v` (strictly increasing) to `y`;
/// power maps absorb the edge singularities of subordinator step densities,
/// so the transformed integrand is bounded.
#[derive(Debug, Clone, Copy)]
enum StepCoord {
    Identity,
    /// `y = x0 + v^{1/a}`, `v ∈ [0, (len)^a]`; handles `p ~ (y-x0)^{a-1}`.
    LeftPower { x0: f64, a: f64 },
    /// `y = z0 - (-v)^{1/b}`, `v ∈ [-(len)^b, 0]`; handles `p ~ (z0-y)^{b-1}`.
    RightPower { z0: f64, b: f64 },
}

impl StepCoord {
    fn y(&self, v: f64) -> f64 {
        match *self {
            StepCoord::Identity => v,
            StepCoord::LeftPower { x0, a } => x0 + v.max(0.0).powf(1.0 / a),
            StepCoord::RightPower { z0, b } => z0 - (-v).max(0.0).powf(1.0 / b),
        }
    }

    fn dy_dv(&self, v: f64) -> f64 {
        match *self {
            StepCoord::Identity => 1.0,
            StepCoord::LeftPower { a, .. } => {
                let inv = 1.0 / a;
                inv * v.max(0.0).powf(inv - 1.0)
            }
            StepCoord::RightPower { b, .. } => {
                let inv = 1.0 / b;
                inv * (-v).max(0.0).powf(inv - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    coord: StepCoord,
    v_lo: f64,
    v_hi: f64,
}

#[derive(Debug, Clone, Copy)]
struct MassCell {
    segment: usize,
    v_lo: f64,
    v_hi: f64,
    mass: f64,
}

struct StepDensity<'a> {
    eval: &'a DensityEvaluator,
    dl: f64,
    dr: f64,
    x: f64,
    z: f64,
    failure: std::cell::RefCell<Option<Error>>,
}

impl<'a> StepDensity<'a> {
    /// Unnormalized transition density `f_{dl}(y-x)·f_{dr}(z-y)`.
    fn unnorm(&self, y: f64) -> f64 {
        let a = match self.eval.density(self.dl, y - self.x) {
            Ok(v) => v,
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                return 0.0;
            }
        };
        let b = match self.eval.density(self.dr, self.z - y) {
            Ok(v) => v,
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                return 0.0;
            }
        };
        a * b
    }

    fn in_segment(&self, seg: &Segment, v: f64) -> f64 {
        self.unnorm(seg.coord.y(v)) * seg.coord.dy_dv(v)
    }

    fn check(&self) -> Result<()> {
        match self.failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

const BRACKET_EXPANSIONS: u32 = 60;
const FLANK_MASS_REL: f64 = 1e-11;
const TARGET_CELL_FRACTION: f64 = 1.0 / 128.0;
const MAX_CELLS: usize = 512;

fn mass_cfg(cfg: &QuadratureConfig) -> QuadratureConfig {
    QuadratureConfig {
        rel_tol: 1e-9,
        abs_tol: 1e-280,
        ..*cfg
    }
}

/// Draws one value from the bridge transition density
/// `y ↦ f_{t-s}(y-x)·f_{r-t}(z-y) / f_{r-s}(z-x)`.
///
/// The support is located adaptively (geometric bracket expansion around the
/// conditional-mean proxy `x + (t-s)/(r-s)·(z-x)`, which is exact in the
/// Gaussian case), partitioned into cells of bounded mass, and the drawn
/// uniform is inverted by safeguarded Newton iteration on the exact cell
/// CDF, so the only sampling error is quadrature error.
fn sample_transition_value<R: Rng + ?Sized>(
    eval: &DensityEvaluator,
    s: f64,
    t: f64,
    r: f64,
    x: f64,
    z: f64,
    rng: &mut R,
) -> Result<f64> {
    let (dl, dr) = (t - s, r - t);
    let model = *eval.model();
    let density = StepDensity {
        eval,
        dl,
        dr,
        x,
        z,
        failure: std::cell::RefCell::new(None),
    };
    let qcfg = mass_cfg(&QuadratureConfig::default());

    let segments = match model.increment_support(dl) {
        IncrementSupport::RealLine => {
            let (lo, hi) = bracket_real_line(&density, s, t, r, x, z, &qcfg)?;
            vec![Segment {
                coord: StepCoord::Identity,
                v_lo: lo,
                v_hi: hi,
            }]
        }
        IncrementSupport::PositiveHalfLine { edge_shape: a } => {
            if z < x {
                return Err(Error::UnreachableState { s, x, r, z });
            }
            if z == x {
                return Ok(z);
            }
            let b = match model.increment_support(dr) {
                IncrementSupport::PositiveHalfLine { edge_shape } => edge_shape,
                IncrementSupport::RealLine => 1.0,
            };
            let mid = 0.5 * (x + z);
            vec![
                Segment {
                    coord: StepCoord::LeftPower { x0: x, a },
                    v_lo: 0.0,
                    v_hi: (mid - x).powf(a),
                },
                Segment {
                    coord: StepCoord::RightPower { z0: z, b },
                    v_lo: -((z - mid).powf(b)),
                    v_hi: 0.0,
                },
            ]
        }
    };

    // Initial cells: a handful per segment, then split by mass.
    let mut cells = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        const INIT: usize = 16;
        let width = (seg.v_hi - seg.v_lo) / INIT as f64;
        for i in 0..INIT {
            let v_lo = seg.v_lo + i as f64 * width;
            let v_hi = if i == INIT - 1 {
                seg.v_hi
            } else {
                seg.v_lo + (i + 1) as f64 * width
            };
            let mass = quad::adaptive(|v| density.in_segment(seg, v), v_lo, v_hi, &qcfg)?;
            density.check()?;
            cells.push(MassCell {
                segment: si,
                v_lo,
                v_hi,
                mass: mass.max(0.0),
            });
        }
    }
    let mut total: f64 = cells.iter().map(|c| c.mass).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numerical(
            "transition sampler",
            format!("transition mass not located (s={s}, t={t}, r={r}, x={x}, z={z})"),
        ));
    }
    loop {
        let (worst, _) = cells
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.mass.total_cmp(&b.1.mass))
            .unwrap();
        if cells[worst].mass <= total * TARGET_CELL_FRACTION || cells.len() >= MAX_CELLS {
            break;
        }
        let cell = cells.swap_remove(worst);
        let seg = &segments[cell.segment];
        let mid = 0.5 * (cell.v_lo + cell.v_hi);
        if mid <= cell.v_lo || mid >= cell.v_hi {
            cells.push(cell);
            break;
        }
        let m1 = quad::adaptive(|v| density.in_segment(seg, v), cell.v_lo, mid, &qcfg)?;
        let m2 = quad::adaptive(|v| density.in_segment(seg, v), mid, cell.v_hi, &qcfg)?;
        density.check()?;
        total += m1.max(0.0) + m2.max(0.0) - cell.mass;
        cells.push(MassCell {
            segment: cell.segment,
            v_lo: cell.v_lo,
            v_hi: mid,
            mass: m1.max(0.0),
        });
        cells.push(MassCell {
            segment: cell.segment,
            v_lo: mid,
            v_hi: cell.v_hi,
            mass: m2.max(0.0),
        });
    }
    // Order cells along the state axis (segment order, then v).
    cells.sort_by(|a, b| {
        a.segment
            .cmp(&b.segment)
            .then(a.v_lo.total_cmp(&b.v_lo))
    });

    let u: f64 = rng.random();
    let target = u * total;
    let mut below = 0.0;
    let mut chosen = cells.len() - 1;
    for (i, c) in cells.iter().enumerate() {
        if below + c.mass >= target {
            chosen = i;
            break;
        }
        below += c.mass;
    }
    let cell = cells[chosen];
    let seg = &segments[cell.segment];
    let local_target = (target - below).clamp(0.0, cell.mass);

    // Safeguarded Newton on the exact cell CDF.
    let (mut a_v, mut b_v) = (cell.v_lo, cell.v_hi);
    let mut v = a_v + (b_v - a_v) * (local_target / cell.mass.max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
    if !(v > a_v && v < b_v) {
        v = 0.5 * (a_v + b_v);
    }
    let tol = (total * 1e-12).max(f64::MIN_POSITIVE);
    for _ in 0..64 {
        let mass_below = quad::adaptive(|w| density.in_segment(seg, w), cell.v_lo, v, &qcfg)?;
        density.check()?;
        let diff = mass_below - local_target;
        if diff.abs() <= tol {
            break;
        }
        if diff > 0.0 {
            b_v = v;
        } else {
            a_v = v;
        }
        let slope = density.in_segment(seg, v);
        let newton = if slope > 0.0 { v - diff / slope } else { f64::NAN };
        v = if newton.is_finite() && newton > a_v && newton < b_v {
            newton
        } else {
            0.5 * (a_v + b_v)
        };
        if b_v - a_v <= 1e-14 * (1.0 + v.abs()) {
            break;
        }
    }
    Ok(seg.coord.y(v))
}

/// Locates the bulk of the step density on the real line: starts around the
/// bridge-pulled mean proxy and doubles outward until both flank masses are
/// negligible relative to the captured mass.
fn bracket_real_line(
    density: &StepDensity<'_>,
    s: f64,
    t: f64,
    r: f64,
    x: f64,
    z: f64,
    qcfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    let model = density.eval.model();
    let scale = model
        .step_scale(density.dl)
        .min(model.step_scale(density.dr))
        .max(1e-12);
    let mu = x + density.dl / (r - s) * (z - x);
    let mut lo = mu - 8.0 * scale;
    let mut hi = mu + 8.0 * scale;
    let mut mass = quad::adaptive(|y| density.unnorm(y), lo, hi, qcfg)?;
    density.check()?;

    // Widen symmetrically until some mass is seen at all.
    let mut attempts = 0;
    while !(mass > f64::MIN_POSITIVE * 1e6) {
        attempts += 1;
        if attempts > BRACKET_EXPANSIONS {
            return Err(Error::numerical(
                "transition sampler",
                format!("no transition mass found near μ={mu} (s={s}, t={t}, r={r}, x={x}, z={z})"),
            ));
        }
        let w = hi - lo;
        lo -= w;
        hi += w;
        mass = quad::adaptive(|y| density.unnorm(y), lo, hi, qcfg)?;
        density.check()?;
    }

    for _ in 0..BRACKET_EXPANSIONS {
        let w = hi - lo;
        let left = quad::adaptive(|y| density.unnorm(y), lo - w, lo, qcfg)?;
        let right = quad::adaptive(|y| density.unnorm(y), hi, hi + w, qcfg)?;
        density.check()?;
        let mut grew = false;
        if left > FLANK_MASS_REL * mass {
            lo -= w;
            mass += left;
            grew = true;
        }
        if right > FLANK_MASS_REL * mass {
            hi += w;
            mass += right;
            grew = true;
        }
        if !grew {
            return Ok((lo, hi));
        }
    }
    Err(Error::numerical(
        "transition sampler",
        format!("support bracket did not stabilize (s={s}, t={t}, r={r}, x={x}, z={z})"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;
    use crate::stats;
    use statrs::distribution::{Beta, ContinuousCDF, Normal};

    fn brownian_eval() -> DensityEvaluator {
        DensityEvaluator::direct(
            LevyModel::brownian(1.0, 0.0).unwrap(),
            QuadratureConfig::default(),
        )
    }

    #[test]
    fn grid_spec_uniform_and_explicit() {
        let g = GridSpec::uniform(2.0, 4);
        assert_eq!(g.times().unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        let g = GridSpec::at_times(vec![0.25, 0.5, 2.0]);
        assert_eq!(g.times().unwrap(), vec![0.25, 0.5, 2.0]);
        assert!(GridSpec::at_times(vec![0.5, 0.5]).times().is_err());
        assert!(GridSpec::uniform(0.0, 3).times().is_err());
    }

    #[test]
    fn explicit_brownian_hits_pin_exactly() {
        let mut rng = path_rng(1, 0);
        let times = vec![0.5, 1.0, 1.5, 2.0, 2.5];
        let p = sample_brownian_bridge_explicit(1.0, 0.3, 2.0, 0.7, &times, &mut rng).unwrap();
        assert_eq!(p.values[3], 0.7);
        assert_eq!(p.values[4], 0.7);
        assert!(p.values[0] != 0.7);
    }

    #[test]
    fn explicit_brownian_mean_is_linear() {
        let (r, z, t) = (2.0, 1.0, 0.5);
        let n = 20_000;
        let mut sum = 0.0;
        for i in 0..n {
            let mut rng = path_rng(2, i);
            let p = sample_brownian_bridge_explicit(1.0, 0.0, r, z, &[t], &mut rng).unwrap();
            sum += p.values[0];
        }
        let mean = sum / n as f64;
        // Var at t is t(r-t)/r = 0.375; 4 SE ≈ 0.017.
        let se = (t * (r - t) / r / n as f64).sqrt();
        assert!(
            (mean - t / r * z).abs() < 4.0 * se,
            "bridge mean {mean} vs {}",
            t / r * z
        );
    }

    #[test]
    fn drift_cancels_pathwise_and_in_law() {
        let times = vec![0.4, 0.9];
        let mut a_vals = Vec::new();
        let mut b_vals = Vec::new();
        for i in 0..5_000 {
            let mut rng = path_rng(3, i);
            let a = sample_brownian_bridge_explicit(1.0, 0.0, 1.3, 0.2, &times, &mut rng).unwrap();
            let mut rng = path_rng(3, i);
            let b = sample_brownian_bridge_explicit(1.0, 5.0, 1.3, 0.2, &times, &mut rng).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-10, "drift leaked into the bridge: {x} vs {y}");
            }
            a_vals.push(a.values[0]);
            b_vals.push(b.values[0]);
        }
        let ks = stats::ks_two_sample(&mut a_vals, &mut b_vals).unwrap();
        assert!(ks.p_value > 0.001, "matched-noise KS p={}", ks.p_value);
    }

    #[test]
    fn explicit_gamma_paths_are_monotone_and_pin() {
        let times = vec![0.5, 1.0, 1.5, 2.0, 2.5];
        for i in 0..500 {
            let mut rng = path_rng(4, i);
            let p = sample_gamma_bridge_explicit(1.0, 1.0, 2.0, 1.0, &times, &mut rng).unwrap();
            for w in p.values.windows(2) {
                assert!(w[1] >= w[0], "gamma bridge decreased: {:?}", p.values);
            }
            assert_eq!(p.values[3], 1.0);
            assert_eq!(p.values[4], 1.0);
        }
        assert!(sample_gamma_bridge_explicit(
            1.0,
            1.0,
            2.0,
            -1.0,
            &times,
            &mut path_rng(4, 0)
        )
        .is_err());
    }

    #[test]
    fn explicit_gamma_ratio_is_beta() {
        let (m, r, z, t) = (1.0, 2.0, 1.0, 0.75);
        let n = 20_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(5, i);
                sample_gamma_bridge_explicit(m, 1.0, r, z, &[t], &mut rng).unwrap().values[0] / z
            })
            .collect();
        let beta = Beta::new(m * t, m * (r - t)).unwrap();
        let ks = stats::ks_one_sample(&mut draws, |x| beta.cdf(x)).unwrap();
        assert!(ks.p_value > 0.001, "beta KS p={}", ks.p_value);
    }

    #[test]
    fn generic_brownian_single_time_law() {
        let eval = brownian_eval();
        let (r, z, t) = (2.0, 0.0, 1.0);
        let n = 20_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(6, i);
                sample_fixed_bridge_generic(&eval, r, z, &[t], &mut rng).unwrap().values[0]
            })
            .collect();
        // ζ_1 ~ N(0, t(r-t)/r) = N(0, 0.5).
        let d = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        let ks = stats::ks_one_sample(&mut draws, |x| d.cdf(x)).unwrap();
        assert!(ks.p_value > 0.001, "generic brownian KS p={}", ks.p_value);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.5).abs() < 4.0 * 0.5 * (2.0 / n as f64).sqrt(), "var {var}");
    }

    #[test]
    fn generic_gamma_single_time_is_uniform() {
        let eval = DensityEvaluator::direct(
            LevyModel::gamma(1.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        );
        // m=1, r=2, t=1, z=1: ζ_1 ~ z·Beta(1,1) = U(0,1).
        let n = 10_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| {
                let mut rng = path_rng(7, i);
                sample_fixed_bridge_generic(&eval, 2.0, 1.0, &[1.0], &mut rng).unwrap().values[0]
            })
            .collect();
        let ks = stats::ks_one_sample(&mut draws, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks.p_value > 0.001, "generic gamma KS p={}", ks.p_value);
    }

    #[test]
    fn generic_handles_unreachable_and_degenerate() {
        let eval = DensityEvaluator::direct(
            LevyModel::gamma(1.0, 1.0).unwrap(),
            QuadratureConfig::default(),
        );
        assert!(matches!(
            sample_fixed_bridge_generic(&eval, 2.0, -0.5, &[1.0], &mut path_rng(8, 0)),
            Err(Error::DegeneratePin { .. })
        ));
    }

    #[test]
    fn constant_extension_is_bit_exact() {
        let eval = brownian_eval();
        let pin = 0.1 + 0.2; // deliberately a non-representable decimal
        let p =
            sample_fixed_bridge_generic(&eval, 1.0, pin, &[0.5, 1.5, 2.0], &mut path_rng(9, 0))
                .unwrap();
        assert_eq!(p.values[1].to_bits(), pin.to_bits());
        assert_eq!(p.values[2].to_bits(), pin.to_bits());
    }

    #[test]
    fn random_bridge_mixture_fraction() {
        use crate::measures::{LengthMeasure, PinningMeasure};
        let eval = brownian_eval();
        let lm = LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let pm = PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap();
        let times = [1.5];
        let n = 20_000;
        let mut stopped = 0;
        for i in 0..n {
            let mut rng = path_rng(10, i);
            let p = sample_random_bridge(&eval, SamplerKind::Explicit, &lm, &pm, &times, &mut rng)
                .unwrap();
            if p.values[0] == p.pin {
                stopped += 1;
            }
        }
        let frac = stopped as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 4.0 * se, "stopped fraction {frac}");
    }

    #[test]
    fn csv_export_shape() {
        let p = BridgePath {
            model: LevyModel::brownian(1.0, 0.0).unwrap(),
            times: vec![0.5, 1.0],
            values: vec![0.25, 0.5],
            length: 2.0,
            pin: 0.5,
        };
        let mut buf = Vec::new();
        paths_to_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "time,value,realized_length,realized_pin,path_id");
        assert!(lines[1].ends_with(",0"));
    }
}
