//! Lévy bridges with random length and random pinning point.
//!
//! The crate constructs, samples, and analyzes bridges of a Lévy process
//! `X` conditioned to hit a random pin `Z` at a random time `τ` (and held
//! constant at `Z` afterwards). The pinning law is stored as an explicit
//! Lebesgue decomposition, because the bridge's memorylessness hinges on
//! it: the process is Markov exactly when the pinning law carries no
//! absolutely continuous part, and the diagnostics verify both directions
//! of that dichotomy empirically.
//!
//! Module map:
//!
//! * [`density`] — marginal densities of the three families (Brownian with
//!   drift, gamma subordinator, symmetric stable) and the bridge kernels;
//! * [`measures`] — `P_τ` and the decomposed `P_Z`, integration and sampling;
//! * [`bridge`] — path sampling, explicit constructions and the generic
//!   transition-density sampler;
//! * [`conditional`] — the posterior and predictive laws given observations;
//! * [`diagnostics`] — seeded Monte Carlo experiments and statistical tests;
//! * [`quad`] — adaptive and oscillatory quadrature;
//! * [`stats`] — KS / chi-square / z-test helpers;
//! * [`rng`] — counter-based per-path random streams.

pub mod bridge;
pub mod conditional;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod measures;
pub mod quad;
pub mod rng;
pub mod stats;

pub use bridge::{BridgePath, GridSpec, SamplerKind};
pub use conditional::{Observation, PosteriorLaw};
pub use density::{DensityEvaluator, LevyModel, StableDensityCache};
pub use error::{Error, Result};
pub use measures::{
    validate_pair, AcDensity, CantorSpec, LengthDensity, LengthMeasure, PinComponent,
    PinningMeasure, ValidationReport,
};
pub use quad::QuadratureConfig;
