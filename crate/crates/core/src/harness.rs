//! Parameter sweeps, dataset emission, collapse metrics and the
//! acceptance suite.
//!
//! A run is described by a [`RunConfig`] read from TOML; every sweep point
//! is independent and deterministic, and results are always assembled in
//! point order so output bytes do not depend on scheduling.

pub mod acceptance;
mod collapse;
mod config;
mod sweep;

pub use collapse::{
    collapse, curve_deviation, read_lmg_curves, CollapseReport, Curve, GroupReport, RescaleExponents,
};
pub use config::{AnalyticSection, CollapseSection, EffectiveSection, LmgSection, OutputSection, RunConfig};
pub use sweep::{
    analytic_table, run_effective, run_lmg, write_analytic_csv, write_effective_csv, write_final_distributions,
    write_gnuplot_script,
    write_lmg_csv, AnalyticRow, EffectiveRow, LmgPoint, RunKind, SweepSpec, MAX_SITES,
};
