//! Config-driven Monte Carlo harness: rate sweeps, the verification
//! suite, report emission, and deterministic seed derivation.

pub mod config;
pub mod engine;
pub mod report;
pub mod seed;
pub mod verify;

pub use config::{
    EstimatorSpec, FamilySpec, ModeFlags, RunConfig, ScenarioSource, Tolerances,
    KNOWN_ESTIMATORS, POPULATION_ESTIMATORS,
};
pub use engine::{
    build_families, family_seed, fit_estimator, fit_estimator_population, run_rate_sweep,
    run_rate_sweep_with,
};
pub use report::{
    emit_reports, fit_loglog_slope, load_report, merge_rate_reports, render_csv, RateCell,
    RateReport, SlopeRow, CSV_HEADER,
};
pub use verify::{verify_suite, CheckSummary, VerifySummary};
