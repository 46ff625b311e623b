//! Safety stock dimensioning for periodic-review inventory.
//!
//! The pipeline fits two demand models per item (a Gaussian KDE discretized to
//! an integer PMF, and a normal comparator), sizes safety stock for each model
//! over a grid of target service levels, measures the realized service in a
//! seeded lost-sales simulation, and picks the cheapest service-level
//! assignment that meets weighted per-class targets.
//!
//! Cell-level work (normality tests, grid simulation) runs on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.
//! Output ordering never depends on scheduling.

pub mod config;
pub mod demand_model;
pub mod ingest;
pub mod optimizer;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod seed;
pub mod simulator;
pub mod stats_tests;
pub mod synthetic;

mod par;

pub use config::RunConfig;
pub use demand_model::{DemandModel, DemandPmf, ModelKind, NormalParams, SigmaSource};
pub use ingest::{DemandSeries, ItemClass, ItemRecord, SeriesKind, ValidatedDataset};
pub use optimizer::{Plan, Problem};
pub use policy::StockLevels;
pub use simulator::{DemandStreamMode, GridResults, SimConfig, SimMetrics};
