//! Experiment driver for `nestquad`: run configurations, built-in presets,
//! convergence reports and node-count tables.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{Adaptive, Domain, RunConfig};
pub use presets::{preset, presets, Preset};
pub use run::{fitted_order, node_count_report, run, ConvergenceReport, NodeCountRow, ReportRow, Strategy};
