//! Simulation and shaping toolkit for PAM links whose dominant impairment
//! is laser intensity noise.
//!
//! The channel model is Y = X + Z·sqrt(σ_th² + (X+β)²·σ_rin²): additive
//! Gaussian noise whose variance grows with the squared optical power of the
//! transmitted symbol. On top of it the crate provides
//!
//! - [`link`]: physical link parameters and their reduction to the
//!   normalized two-sigma noise profile, plus the constellation type;
//! - [`metrics`]: decision thresholds, analytic symbol error rate and its
//!   RIN-only floor, and mutual information;
//! - [`optimizer`]: peak-power-constrained geometric shaping of the inner
//!   levels, with an exhaustive grid oracle for small orders;
//! - [`mc`]: reproducible Monte Carlo validation and received-value
//!   histograms;
//! - [`config`] and [`sweep`]: TOML-driven (OMA, RIN) grid sweeps emitted
//!   as CSV or JSON.
//!
//! Everything numerical is deterministic: fixed seeds, counter-addressed
//! RNG substreams, and worker-count-independent reductions.

#![forbid(unsafe_code)]

pub mod config;
pub mod error;
pub mod link;
pub mod mc;
pub mod metrics;
pub mod optimizer;
pub mod sweep;

pub use config::{Preset, SweepConfig};
pub use error::{Error, Result};
pub use link::{
    beta_from_er, net_bitrate, normalize_noise, LinkParams, NoiseProfile, PamConstellation,
};
pub use mc::{received_histogram, simulate, SimBudget, SimResult, SymbolHistogram};
pub use metrics::{
    decision_thresholds, mutual_information, q_function, ser_analytic, ser_floor,
    ser_with_thresholds, DecisionRule, SerBreakdown,
};
pub use optimizer::{
    grid_oracle, optimize_constellation, optimize_with_objective, Objective, OptimizationReport,
    OptimizerSettings,
};
pub use sweep::{
    emit, emit_to_path, json_string, parse_csv, relaxation_report, run_sweep, EmitFormat,
    RelaxationPair, RelaxationReport, SweepMetadata, SweepRecord, SweepResult,
};
