//! Monte Carlo experiments verifying the stopping identity, the
//! measurability dichotomy, and the Markov/non-Markov behaviour of the
//! random bridge, plus rejection-window cross-checks of the conditional
//! formulas against simulation.
//!
//! Every experiment is seeded-deterministic: paths own counter-derived
//! streams, path generation is embarrassingly parallel, and all statistics
//! are reduced sequentially in path order, so identical seeds reproduce
//! reports bit-identically regardless of thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{sample_random_bridge, BridgePath, SamplerKind};
use crate::conditional::{Observation, RandomBridgeModel};
use crate::density::DensityEvaluator;
use crate::error::{Error, Result};
use crate::measures::{LengthMeasure, PinningMeasure};
use crate::rng::path_rng;
use crate::stats;

/// A point estimate with its standard error and the band it must fall in.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
}

/// A named test statistic with its decision threshold.
#[derive(Debug, Clone, Serialize)]
pub struct TestStatistic {
    pub name: String,
    pub null_hypothesis: String,
    pub statistic: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub correction: String,
    pub rejected: bool,
}

/// Outcome of one experiment, serializable as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub master_seed: u64,
    pub sample_size: u64,
    pub passed: bool,
    pub inconclusive: bool,
    pub estimates: Vec<Estimate>,
    pub statistics: Vec<TestStatistic>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(experiment: &str, seed: u64, n: u64) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            master_seed: seed,
            sample_size: n,
            passed: true,
            inconclusive: false,
            estimates: Vec::new(),
            statistics: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let status = if self.inconclusive {
            "INCONCLUSIVE"
        } else if self.passed {
            "PASS"
        } else {
            "FAIL"
        };
        out.push_str(&format!(
            "[{status}] {} (n={}, seed={})\n",
            self.experiment, self.sample_size, self.master_seed
        ));
        for e in &self.estimates {
            out.push_str(&format!("  est {}: {:.6e} (se {:.3e})", e.name, e.value, e.std_error));
            if let (Some(t), Some(tol)) = (e.target, e.tolerance) {
                out.push_str(&format!(" target {t:.6e} ± {tol:.3e}"));
            }
            out.push('\n');
        }
        for s in &self.statistics {
            out.push_str(&format!(
                "  test {}: stat {:.4} p {:.4e} thr {:.3e} [{}] {}\n",
                s.name,
                s.statistic,
                s.p_value,
                s.threshold,
                s.correction,
                if s.rejected { "REJECT" } else { "accept" }
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }
}

/// Simulates `n` random-bridge paths in parallel and maps each through
/// `extract` immediately (paths are not retained). Path `i` always uses
/// stream `i` of the master seed, so results are schedule-independent.
pub fn simulate_extract<T, F>(
    eval: &DensityEvaluator,
    kind: SamplerKind,
    lm: &LengthMeasure,
    pm: &PinningMeasure,
    times: &[f64],
    n_paths: u64,
    seed: u64,
    extract: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&BridgePath) -> Result<T> + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let path = sample_random_bridge(eval, kind, lm, pm, times, &mut rng)?;
            extract(&path)
        })
        .collect()
}

/// Verifies the stopping identity: at every grid time the events
/// `{ζ_t = Z}` and `{τ ≤ t}` coincide exactly (bit-level value equality
/// against the realized pin versus the realized length).
pub fn stopping_time_test(
    eval: &DensityEvaluator,
    kind: SamplerKind,
    lm: &LengthMeasure,
    pm: &PinningMeasure,
    times: &[f64],
    n_paths: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    let counts = simulate_extract(eval, kind, lm, pm, times, n_paths, seed, |path| {
        let mut pinned_early = 0u64;
        let mut detached_late = 0u64;
        for (i, &t) in path.times.iter().enumerate() {
            let at_pin = path.values[i] == path.pin;
            let stopped = path.length <= t;
            match (at_pin, stopped) {
                (true, false) => pinned_early += 1,
                (false, true) => detached_late += 1,
                _ => {}
            }
        }
        Ok([pinned_early, detached_late])
    })?;
    let mut report = ExperimentReport::new("stopping_time", seed, n_paths);
    let pinned_early: u64 = counts.iter().map(|c| c[0]).sum();
    let detached_late: u64 = counts.iter().map(|c| c[1]).sum();
    report.estimates.push(Estimate {
        name: "events {ζ_t = Z, t < τ}".into(),
        value: pinned_early as f64,
        std_error: 0.0,
        target: Some(0.0),
        tolerance: Some(0.0),
    });
    report.estimates.push(Estimate {
        name: "events {ζ_t ≠ Z, τ ≤ t}".into(),
        value: detached_late as f64,
        std_error: 0.0,
        target: Some(0.0),
        tolerance: Some(0.0),
    });
    report.passed = pinned_early == 0 && detached_late == 0;
    report
        .notes
        .push("both event counts must be exactly zero (bit-level identity)".into());
    Ok(report)
}

/// Verifies the measurability dichotomy at a time `t` with `0 < F_τ(t) < 1`:
/// with `a_ac = 0` the posterior stopping probability is 0/1 on every draw;
/// with `a_ac > 0` the fraction of draws with a strictly interior value
/// matches `a_ac · F_τ(t)` within 4 standard errors.
pub fn measurability_test(
    rbm: &RandomBridgeModel,
    eval: &DensityEvaluator,
    kind: SamplerKind,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    let f_t = rbm.length.cdf(t);
    if !(f_t > 0.0 && f_t < 1.0) {
        return Err(Error::PreconditionViolation(format!(
            "measurability test needs 0 < F_τ(t) < 1, got F_τ({t}) = {f_t}"
        )));
    }
    let survivals = simulate_extract(
        eval,
        kind,
        &rbm.length,
        &rbm.pinning,
        &[t],
        n_paths,
        seed,
        |path| {
            let obs = Observation::from_value(t, path.values[0], &rbm.pinning)?;
            rbm.survival_given_state(&obs)
        },
    )?;
    const EDGE: f64 = 1e-6;
    let interior = survivals
        .iter()
        .filter(|&&s| s > EDGE && s < 1.0 - EDGE)
        .count() as f64;
    let frac = interior / n_paths as f64;
    let a_ac = rbm.pinning.a_ac();
    let target = a_ac * f_t;
    let se = (target * (1.0 - target) / n_paths as f64).sqrt();
    let mut report = ExperimentReport::new("measurability", seed, n_paths);
    report.estimates.push(Estimate {
        name: "interior posterior fraction".into(),
        value: frac,
        std_error: (frac * (1.0 - frac) / n_paths as f64).sqrt(),
        target: Some(target),
        tolerance: Some(4.0 * se),
    });
    report.passed = if a_ac == 0.0 {
        interior == 0.0
    } else {
        (frac - target).abs() <= 4.0 * se
    };
    report.notes.push(format!(
        "null: P(interior) = a_ac·F_τ(t) = {target:.6}; band is 4 SE; a_ac = {a_ac}"
    ));
    Ok(report)
}

/// Bin edges partition the line into `edges.len() + 1` half-open bins.
fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

fn bin_center(edges: &[f64], idx: usize) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    if idx == 0 {
        edges[0] - 0.5 * (edges.last().unwrap() - edges[0]).max(1.0)
    } else if idx == edges.len() {
        edges[edges.len() - 1] + 0.5 * (edges.last().unwrap() - edges[0]).max(1.0)
    } else {
        0.5 * (edges[idx - 1] + edges[idx])
    }
}

/// Specification of the Markov Monte Carlo test.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovTestSpec {
    pub t1: f64,
    pub t2: f64,
    pub u: f64,
    /// Interior bin edges for the early coordinate `ζ_{t1}`.
    pub x1_edges: Vec<f64>,
    /// Interior bin edges for the stratum coordinate `ζ_{t2}`.
    pub x2_edges: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
    /// When true the test expects a rejection (non-Markov witness) and
    /// refuses to run if the projected power is below 0.9.
    pub expect_rejection: bool,
}

const MARKOV_MIN_CELL: usize = 200;
const MARKOV_FW_ALPHA: f64 = 0.01;
const MARKOV_POWER_FLOOR: f64 = 0.9;

/// Strata paths by `(ζ_{t1}, ζ_{t2})`; within each `ζ_{t2}`-stratum,
/// compares the mean of `ζ_u` across `ζ_{t1}`-bins with leave-one-out
/// z-tests, Bonferroni-corrected at family-wise 1%.
///
/// Under a Markov configuration no cell may reject; for a non-Markov
/// witness configuration the analytic effect sizes are computed first from
/// the two-time predictive formula, and the run is declared inconclusive
/// if the projected power at `n_paths` is below 0.9.
pub fn markov_mc_test(
    rbm: &RandomBridgeModel,
    eval: &DensityEvaluator,
    kind: SamplerKind,
    spec: &MarkovTestSpec,
) -> Result<ExperimentReport> {
    if !(spec.t1 > 0.0 && spec.t1 < spec.t2 && spec.t2 < spec.u) {
        return Err(Error::invalid("markov test needs 0 < t1 < t2 < u"));
    }
    let n1 = spec.x1_edges.len() + 1;
    let n2 = spec.x2_edges.len() + 1;
    let times = [spec.t1, spec.t2, spec.u];
    let mut report = ExperimentReport::new("markov_mc", spec.seed, spec.n_paths);

    // Power guard for the witness direction, from analytic effect sizes at
    // bin centers and pilot occupancies.
    if spec.expect_rejection {
        let pilot_n = spec.n_paths.min(20_000).max(2_000);
        let pilot = simulate_extract(
            eval,
            kind,
            &rbm.length,
            &rbm.pinning,
            &times,
            pilot_n,
            spec.seed,
            |p| Ok([p.values[0], p.values[1], p.values[2]]),
        )?;
        let mut occ = vec![0usize; n1 * n2];
        let mut sum = vec![0.0f64; n2];
        let mut sumsq = vec![0.0f64; n2];
        let mut count2 = vec![0usize; n2];
        for v in &pilot {
            let i = bin_index(&spec.x1_edges, v[0]);
            let j = bin_index(&spec.x2_edges, v[1]);
            occ[j * n1 + i] += 1;
            sum[j] += v[2];
            sumsq[j] += v[2] * v[2];
            count2[j] += 1;
        }
        let mut k_tests = 0usize;
        for j in 0..n2 {
            let tested: Vec<usize> = (0..n1)
                .filter(|&i| {
                    occ[j * n1 + i] as f64 / pilot_n as f64 * spec.n_paths as f64
                        >= MARKOV_MIN_CELL as f64
                })
                .collect();
            if tested.len() >= 2 {
                k_tests += tested.len();
            }
        }
        if k_tests == 0 {
            report.inconclusive = true;
            report.notes.push("power guard: no testable cells at this binning".into());
            return Ok(report);
        }
        let crit = stats::normal_upper_quantile(MARKOV_FW_ALPHA / (2.0 * k_tests as f64));
        let mut best_power: f64 = 0.0;
        for j in 0..n2 {
            if count2[j] < 2 {
                continue;
            }
            let var_j = (sumsq[j] - sum[j] * sum[j] / count2[j] as f64)
                / (count2[j] as f64 - 1.0).max(1.0);
            let tested: Vec<usize> = (0..n1)
                .filter(|&i| {
                    occ[j * n1 + i] as f64 / pilot_n as f64 * spec.n_paths as f64
                        >= MARKOV_MIN_CELL as f64
                })
                .collect();
            if tested.len() < 2 {
                continue;
            }
            let x2c = bin_center(&spec.x2_edges, j);
            let mut means = Vec::new();
            for &i in &tested {
                let x1c = bin_center(&spec.x1_edges, i);
                means.push((
                    i,
                    rbm.two_time_predictive_expectation(
                        |y| y,
                        spec.t1,
                        spec.t2,
                        spec.u,
                        x1c,
                        x2c,
                        false,
                    )?,
                ));
            }
            for &(i, mu) in &means {
                let f_i = occ[j * n1 + i] as f64 / pilot_n as f64;
                let occ_rest: f64 = tested
                    .iter()
                    .filter(|&&ii| ii != i)
                    .map(|&ii| occ[j * n1 + ii] as f64 / pilot_n as f64)
                    .sum();
                if occ_rest <= 0.0 || f_i <= 0.0 {
                    continue;
                }
                let mu_rest: f64 = means
                    .iter()
                    .filter(|&&(ii, _)| ii != i)
                    .map(|&(ii, m)| m * occ[j * n1 + ii] as f64 / pilot_n as f64)
                    .sum::<f64>()
                    / occ_rest;
                let delta = (mu - mu_rest).abs();
                let se = (var_j / (spec.n_paths as f64 * f_i)
                    + var_j / (spec.n_paths as f64 * occ_rest))
                    .sqrt();
                if se > 0.0 {
                    best_power = best_power.max(stats::normal_cdf(delta / se - crit));
                }
            }
        }
        report.notes.push(format!(
            "power guard: projected power {best_power:.4} at n={} over {k_tests} cells",
            spec.n_paths
        ));
        if best_power < MARKOV_POWER_FLOOR {
            report.inconclusive = true;
            report
                .notes
                .push("projected power below 0.9; refusing to run the witness test".into());
            return Ok(report);
        }
    }

    // Full run.
    let draws = simulate_extract(
        eval,
        kind,
        &rbm.length,
        &rbm.pinning,
        &times,
        spec.n_paths,
        spec.seed,
        |p| Ok([p.values[0], p.values[1], p.values[2]]),
    )?;
    let mut count = vec![0usize; n1 * n2];
    let mut sum = vec![0.0f64; n1 * n2];
    let mut sumsq = vec![0.0f64; n1 * n2];
    for v in &draws {
        let i = bin_index(&spec.x1_edges, v[0]);
        let j = bin_index(&spec.x2_edges, v[1]);
        let c = j * n1 + i;
        count[c] += 1;
        sum[c] += v[2];
        sumsq[c] += v[2] * v[2];
    }

    // Collect testable cells first to fix the Bonferroni family size.
    let mut tested_cells: Vec<(usize, usize)> = Vec::new();
    for j in 0..n2 {
        let cells: Vec<usize> = (0..n1)
            .filter(|&i| count[j * n1 + i] >= MARKOV_MIN_CELL)
            .collect();
        if cells.len() >= 2 {
            tested_cells.extend(cells.iter().map(|&i| (i, j)));
        }
    }
    if tested_cells.is_empty() {
        report.inconclusive = true;
        report.notes.push("no strata with two populated cells".into());
        return Ok(report);
    }
    let k = tested_cells.len();
    let crit = stats::normal_upper_quantile(MARKOV_FW_ALPHA / (2.0 * k as f64));
    let mut rejections = 0usize;
    for &(i, j) in &tested_cells {
        let c = j * n1 + i;
        let n_c = count[c] as f64;
        let mean_c = sum[c] / n_c;
        let var_c = (sumsq[c] - sum[c] * sum[c] / n_c) / (n_c - 1.0);
        // Leave-one-out rest of the stratum (only tested cells).
        let mut n_r = 0.0;
        let mut s_r = 0.0;
        let mut ss_r = 0.0;
        for &(i2, j2) in &tested_cells {
            if j2 == j && i2 != i {
                let c2 = j2 * n1 + i2;
                n_r += count[c2] as f64;
                s_r += sum[c2];
                ss_r += sumsq[c2];
            }
        }
        if n_r < MARKOV_MIN_CELL as f64 {
            continue;
        }
        let mean_r = s_r / n_r;
        let var_r = (ss_r - s_r * s_r / n_r) / (n_r - 1.0);
        let se = (var_c / n_c + var_r / n_r).sqrt();
        if !(se > 0.0) {
            continue;
        }
        let z = (mean_c - mean_r) / se;
        let rejected = z.abs() > crit;
        if rejected {
            rejections += 1;
        }
        report.statistics.push(TestStatistic {
            name: format!("stratum x2-bin {j}, x1-bin {i}"),
            null_hypothesis: "E[ζ_u | ζ_t2 stratum] does not depend on the ζ_t1 bin".into(),
            statistic: z,
            p_value: stats::z_two_sided_p(z),
            threshold: crit,
            correction: format!("Bonferroni {k} tests at family-wise {MARKOV_FW_ALPHA}"),
            rejected,
        });
    }
    report.notes.push(format!(
        "{rejections} rejecting cells out of {k} tested; expectation: {}",
        if spec.expect_rejection { "≥ 1" } else { "0" }
    ));
    report.passed = if spec.expect_rejection {
        rejections >= 1
    } else {
        rejections == 0
    };
    Ok(report)
}

/// Which conditional formula a rejection-window MC check validates.
#[derive(Debug, Clone, Serialize)]
pub enum ConditionalTarget {
    /// `P(τ ≤ t | ζ_t ≈ x)` vs. `survival_given_state`.
    TauPosteriorPastMass { t: f64, x: f64 },
    /// `E[Z | ζ_t ≈ x]` vs. `z_posterior_expectation` (g = identity).
    ZPosteriorMean { t: f64, x: f64 },
    /// `E[ζ_u | ζ_t ≈ x]` vs. the mean of `predictive_law`.
    PredictiveMean { t: f64, x: f64, u: f64 },
    /// `P(τ ≤ t2 | ζ_{t1} ≈ x1, ζ_{t2} ≈ x2)` vs. `two_time_tau_posterior`.
    TwoTimeTauPastMass { t1: f64, t2: f64, x1: f64, x2: f64 },
    /// `E[ζ_u | (Z, ζ_t) ≈ (z, x)]` vs. `y_transition` (G = (z,y) ↦ y).
    YTransitionMean { t: f64, u: f64, z: f64, x: f64 },
}

const MIN_ACCEPTED: usize = 500;

/// Cross-validates a conditional formula against rejection-window Monte
/// Carlo at two window widths; agreement within 3 SE is required at both
/// (the second width is the shrinking-window sanity check).
pub fn formula_vs_mc_check(
    rbm: &RandomBridgeModel,
    eval: &DensityEvaluator,
    kind: SamplerKind,
    target: &ConditionalTarget,
    n_paths: u64,
    widths: (f64, f64),
    seed: u64,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("formula_vs_mc", seed, n_paths);
    report.notes.push(format!("target: {target:?}"));

    // (condition times, response extractor description) per target.
    let (times, formula): (Vec<f64>, f64) = match *target {
        ConditionalTarget::TauPosteriorPastMass { t, x } => {
            let obs = Observation::from_value(t, x, &rbm.pinning)?;
            (vec![t], rbm.survival_given_state(&obs)?)
        }
        ConditionalTarget::ZPosteriorMean { t, x } => {
            let obs = Observation::from_value(t, x, &rbm.pinning)?;
            (vec![t], rbm.z_posterior_expectation(|z| z, &obs)?)
        }
        ConditionalTarget::PredictiveMean { t, x, u } => {
            let obs = Observation::from_value(t, x, &rbm.pinning)?;
            let law = rbm.predictive_law(&obs, u)?;
            (vec![t, u], law.expect(|y| y, &rbm.quad)?)
        }
        ConditionalTarget::TwoTimeTauPastMass { t1, t2, x1, x2 } => {
            let law = rbm.two_time_tau_posterior(t1, t2, x1, x2, false)?;
            let past: f64 = law
                .atoms()
                .iter()
                .filter(|&&(r, _)| r <= t2)
                .map(|&(_, p)| p)
                .sum::<f64>()
                + law.continuous_mass_on(0.0, t2, &rbm.quad)?;
            (vec![t1, t2], past)
        }
        ConditionalTarget::YTransitionMean { t, u, z, x } => {
            (vec![t, u], rbm.y_transition(|_, y| y, t, u, z, x)?)
        }
    };

    for (wi, &h) in [widths.0, widths.1].iter().enumerate() {
        if !(h > 0.0) {
            return Err(Error::invalid("rejection window width must be positive"));
        }
        // Accept paths inside the window and record the response.
        let records = simulate_extract(
            eval,
            kind,
            &rbm.length,
            &rbm.pinning,
            &times,
            n_paths,
            seed,
            |p| {
                let keep_and_response = match *target {
                    ConditionalTarget::TauPosteriorPastMass { t: _, x } => {
                        if (p.values[0] - x).abs() < h {
                            Some(if p.length <= times[0] { 1.0 } else { 0.0 })
                        } else {
                            None
                        }
                    }
                    ConditionalTarget::ZPosteriorMean { t: _, x } => {
                        if (p.values[0] - x).abs() < h {
                            Some(p.pin)
                        } else {
                            None
                        }
                    }
                    ConditionalTarget::PredictiveMean { t: _, x, u: _ } => {
                        if (p.values[0] - x).abs() < h {
                            Some(p.values[1])
                        } else {
                            None
                        }
                    }
                    ConditionalTarget::TwoTimeTauPastMass { x1, x2, t2, .. } => {
                        if (p.values[0] - x1).abs() < h && (p.values[1] - x2).abs() < h {
                            Some(if p.length <= t2 { 1.0 } else { 0.0 })
                        } else {
                            None
                        }
                    }
                    ConditionalTarget::YTransitionMean { z, x, .. } => {
                        let pin_ok = if rbm.pinning.weight_discrete == 1.0 {
                            p.pin == z
                        } else {
                            (p.pin - z).abs() < h
                        };
                        if pin_ok && (p.values[0] - x).abs() < h && p.values[0] != p.pin {
                            Some(p.values[1])
                        } else {
                            None
                        }
                    }
                };
                Ok(keep_and_response)
            },
        )?;
        let accepted: Vec<f64> = records.into_iter().flatten().collect();
        if accepted.len() < MIN_ACCEPTED {
            report.inconclusive = true;
            report.notes.push(format!(
                "window {wi} (h={h}): only {} accepted paths (< {MIN_ACCEPTED})",
                accepted.len()
            ));
            continue;
        }
        let (mean, se) = stats::mean_and_se(&accepted);
        let ok = (mean - formula).abs() <= 3.0 * se;
        report.estimates.push(Estimate {
            name: format!("MC estimate, window h={h} ({} accepted)", accepted.len()),
            value: mean,
            std_error: se,
            target: Some(formula),
            tolerance: Some(3.0 * se),
        });
        if !ok {
            report.passed = false;
        }
    }
    if report.inconclusive {
        report.passed = false;
    }
    Ok(report)
}

/// Chapman–Kolmogorov composition check (requires `a_ac = 0`): the
/// predictive law composed `t → u → v` must match `t → v`. The composition
/// integral over the intermediate state is done by quadrature; the state
/// grid only discretizes the total-variation comparison at `v`.
pub fn chapman_kolmogorov_check(
    rbm: &RandomBridgeModel,
    x0: f64,
    t: f64,
    u: f64,
    v: f64,
    state_range: (f64, f64),
    n_cells: usize,
    tv_threshold: f64,
) -> Result<ExperimentReport> {
    if rbm.pinning.a_ac() != 0.0 {
        return Err(Error::PreconditionViolation(
            "Chapman–Kolmogorov composition requires a_ac = 0".into(),
        ));
    }
    if !(t > 0.0 && t <= u && u < v) {
        return Err(Error::invalid("ck check needs 0 < t ≤ u < v"));
    }
    if n_cells < 2 || !(state_range.0 < state_range.1) {
        return Err(Error::invalid("ck check needs a nonempty state grid"));
    }
    let mut report = ExperimentReport::new("chapman_kolmogorov", 0, 0);
    let obs0 = Observation::from_value(t, x0, &rbm.pinning)?;
    let direct = rbm.predictive_law(&obs0, v)?;

    // Masses of the direct law on atoms and cells.
    let mut atom_locs: Vec<f64> = direct.atoms().iter().map(|&(z, _)| z).collect();
    for &(z, _) in &rbm.pinning.atoms {
        if !atom_locs.iter().any(|&a| a.to_bits() == z.to_bits()) {
            atom_locs.push(z);
        }
    }
    atom_locs.sort_by(f64::total_cmp);
    let (lo, hi) = state_range;
    let width = (hi - lo) / n_cells as f64;
    let cell_edges: Vec<(f64, f64)> = (0..n_cells)
        .map(|k| (lo + k as f64 * width, lo + (k + 1) as f64 * width))
        .collect();

    let mass_profile = |law: &crate::conditional::PosteriorLaw| -> Result<(Vec<f64>, Vec<f64>)> {
        let atom_masses: Vec<f64> = atom_locs
            .iter()
            .map(|&z| {
                law.atoms()
                    .iter()
                    .filter(|&&(a, _)| a.to_bits() == z.to_bits())
                    .map(|&(_, p)| p)
                    .sum()
            })
            .collect();
        let mut cell_masses = Vec::with_capacity(n_cells);
        for &(a, b) in &cell_edges {
            cell_masses.push(law.continuous_mass_on(a, b, &rbm.quad)?);
        }
        Ok((atom_masses, cell_masses))
    };

    let (direct_atoms, direct_cells) = mass_profile(&direct)?;

    let (comp_atoms, comp_cells) = if u == t {
        // Identity composition.
        (direct_atoms.clone(), direct_cells.clone())
    } else {
        let mid = rbm.predictive_law(&obs0, u)?;
        // Pinned intermediate states transition as point masses; unstopped
        // states transition by the predictive law from (u, y).
        let mut comp_atoms = vec![0.0f64; atom_locs.len()];
        let mut comp_cells = vec![0.0f64; n_cells];
        for &(z, p) in mid.atoms() {
            if p == 0.0 {
                continue;
            }
            if rbm.pinning.in_singular_support(z) {
                // Stopped at the pin: stays there.
                if let Some(ai) = atom_locs.iter().position(|&a| a.to_bits() == z.to_bits()) {
                    comp_atoms[ai] += p;
                }
            } else {
                // An unstopped atom cannot occur when a_ac = 0 and p_stop = 0.
                return Err(Error::numerical(
                    "ck_check",
                    format!("unexpected non-singular atom at {z} in the intermediate law"),
                ));
            }
        }
        // Continuous intermediate states, integrated by quadrature through
        // the per-state predictive masses.
        for ai in 0..atom_locs.len() {
            let z = atom_locs[ai];
            let contrib = direct_expect_continuous(rbm, &mid, &|law_uy| {
                Ok(law_uy
                    .atoms()
                    .iter()
                    .filter(|&&(a, _)| a.to_bits() == z.to_bits())
                    .map(|&(_, p)| p)
                    .sum())
            }, u, v)?;
            comp_atoms[ai] += contrib;
        }
        for (k, &(a, b)) in cell_edges.iter().enumerate() {
            comp_cells[k] = direct_expect_continuous(rbm, &mid, &|law_uy| {
                law_uy.continuous_mass_on(a, b, &rbm.quad)
            }, u, v)?;
        }
        (comp_atoms, comp_cells)
    };

    let mut tv = 0.0;
    for (a, b) in direct_atoms.iter().zip(&comp_atoms) {
        tv += (a - b).abs();
    }
    for (a, b) in direct_cells.iter().zip(&comp_cells) {
        tv += (a - b).abs();
    }
    // Out-of-range bucket.
    let cov_direct: f64 = direct_atoms.iter().sum::<f64>() + direct_cells.iter().sum::<f64>();
    let cov_comp: f64 = comp_atoms.iter().sum::<f64>() + comp_cells.iter().sum::<f64>();
    tv += ((1.0 - cov_direct) - (1.0 - cov_comp)).abs();
    tv *= 0.5;

    report.estimates.push(Estimate {
        name: format!("TV(compose t→u→v, direct t→v) at t={t}, u={u}, v={v}"),
        value: tv,
        std_error: 0.0,
        target: Some(0.0),
        tolerance: Some(tv_threshold),
    });
    report.notes.push(format!(
        "state grid: {n_cells} cells on [{lo}, {hi}]; direct coverage {cov_direct:.9}"
    ));
    report.passed = tv <= tv_threshold;
    Ok(report)
}

/// `∫ q_mid(y) · f(predictive law from (u, y)) dy` over the continuous part
/// of the intermediate law, by quadrature against the stored density.
fn direct_expect_continuous(
    rbm: &RandomBridgeModel,
    mid: &crate::conditional::PosteriorLaw,
    f: &dyn Fn(&crate::conditional::PosteriorLaw) -> Result<f64>,
    u: f64,
    v: f64,
) -> Result<f64> {
    if mid.continuous_weight() == 0.0 {
        return Ok(0.0);
    }
    // Integrate y ↦ mid_density(y)·f(law from (u,y)) over a range that
    // carries the continuous mass. Locate it from the density itself.
    let probe = |y: f64| -> Result<f64> {
        let d = mid.continuous_density_at(y)?;
        if d <= 0.0 {
            return Ok(0.0);
        }
        let obs = Observation::from_value(u, y, &rbm.pinning)?;
        Ok(d * f(&rbm.predictive_law(&obs, v)?)?)
    };
    // The continuous part of a bridge predictive law is supported where the
    // step density lives; integrate over an adaptive expansion like the
    // sampler does, but with fixed generous bounds derived from mass probes.
    let mut lo = -1.0;
    let mut hi = 1.0;
    // Expand until the density at the edges is negligible.
    for _ in 0..60 {
        let d_lo = mid.continuous_density_at(lo)?;
        let d_hi = mid.continuous_density_at(hi)?;
        if d_lo < 1e-14 && d_hi < 1e-14 {
            break;
        }
        let w = hi - lo;
        if d_lo >= 1e-14 {
            lo -= w;
        }
        if d_hi >= 1e-14 {
            hi += w;
        }
    }
    let fail = crate::conditional::FailCell::new();
    let total = crate::quad::integrate(|y| fail.capture(|| probe(y)), lo, hi, &rbm.quad)?;
    fail.check()?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::LevyModel;
    use crate::measures::AcDensity;
    use crate::quad::QuadratureConfig;

    fn qcfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn brownian_eval() -> DensityEvaluator {
        DensityEvaluator::direct(LevyModel::brownian(1.0, 0.0).unwrap(), qcfg())
    }

    #[test]
    fn stopping_test_zero_discrepancies_brownian() {
        let lm = LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let pm = PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let eval = brownian_eval();
        let report = stopping_time_test(
            &eval,
            SamplerKind::Explicit,
            &lm,
            &pm,
            &[0.5, 1.0, 1.5, 2.5],
            2_000,
            7,
        )
        .unwrap();
        assert!(report.passed, "{}", report.to_text());
    }

    #[test]
    fn measurability_dichotomy_small() {
        // a_ac = 0: zero interior values.
        let model = LevyModel::brownian(1.0, 0.0).unwrap();
        let lm = LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let pm = PinningMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let rbm = RandomBridgeModel::new(model, lm, pm, qcfg()).unwrap();
        let eval = brownian_eval();
        let report =
            measurability_test(&rbm, &eval, SamplerKind::Explicit, 1.5, 2_000, 11).unwrap();
        assert!(report.passed, "{}", report.to_text());

        // a_ac = 1: interior fraction ≈ F_τ(t).
        let pm = PinningMeasure::absolutely_continuous(AcDensity::Normal {
            mean: 0.0,
            std_dev: 1.0,
        })
        .unwrap();
        let rbm = RandomBridgeModel::new(
            LevyModel::brownian(1.0, 0.0).unwrap(),
            LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            pm,
            qcfg(),
        )
        .unwrap();
        let report =
            measurability_test(&rbm, &eval, SamplerKind::Explicit, 1.5, 4_000, 13).unwrap();
        assert!(report.passed, "{}", report.to_text());
    }

    #[test]
    fn measurability_requires_interior_cdf() {
        let model = LevyModel::brownian(1.0, 0.0).unwrap();
        let lm = LengthMeasure::fixed(1.0).unwrap();
        let pm = PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap();
        let rbm = RandomBridgeModel::new(model, lm, pm, qcfg()).unwrap();
        let eval = brownian_eval();
        assert!(matches!(
            measurability_test(&rbm, &eval, SamplerKind::Explicit, 2.0, 100, 1),
            Err(Error::PreconditionViolation(_))
        ));
    }

    #[test]
    fn formula_vs_mc_tau_posterior_smoke() {
        let model = LevyModel::brownian(1.0, 0.0).unwrap();
        let lm = LengthMeasure::atoms(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let pm = PinningMeasure::absolutely_continuous(AcDensity::Normal {
            mean: 0.0,
            std_dev: 1.0,
        })
        .unwrap();
        let rbm = RandomBridgeModel::new(model, lm, pm, qcfg()).unwrap();
        let eval = brownian_eval();
        let report = formula_vs_mc_check(
            &rbm,
            &eval,
            SamplerKind::Explicit,
            &ConditionalTarget::TauPosteriorPastMass { t: 1.5, x: 0.7 },
            40_000,
            (0.1, 0.05),
            17,
        )
        .unwrap();
        assert!(report.passed, "{}", report.to_text());
    }

    #[test]
    fn ck_check_single_atom_reduces_to_transition_identity() {
        let model = LevyModel::brownian(1.0, 0.0).unwrap();
        let lm = LengthMeasure::fixed(2.0).unwrap();
        let pm = PinningMeasure::atoms(vec![(0.0, 1.0)]).unwrap();
        let rbm = RandomBridgeModel::new(model, lm, pm, qcfg()).unwrap();
        let report =
            chapman_kolmogorov_check(&rbm, 0.1, 0.5, 1.0, 1.5, (-4.0, 4.0), 60, 1e-4).unwrap();
        assert!(report.passed, "{}", report.to_text());
    }

    #[test]
    fn ck_check_rejects_ac_configs() {
        let model = LevyModel::brownian(1.0, 0.0).unwrap();
        let lm = LengthMeasure::fixed(2.0).unwrap();
        let pm = PinningMeasure::absolutely_continuous(AcDensity::Normal {
            mean: 0.0,
            std_dev: 1.0,
        })
        .unwrap();
        let rbm = RandomBridgeModel::new(model, lm, pm, qcfg()).unwrap();
        assert!(matches!(
            chapman_kolmogorov_check(&rbm, 0.1, 0.5, 1.0, 1.5, (-4.0, 4.0), 20, 1e-4),
            Err(Error::PreconditionViolation(_))
        ));
    }
}
