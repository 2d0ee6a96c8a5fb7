//! Scenario files, closed-loop trials, batches and rendering.

pub mod batch;
pub mod config;
pub mod render;
pub mod scenario;
pub mod trial;

pub use batch::{run_batch, write_csv, BatchSummary};
pub use config::Config;
pub use render::{export_costmap_image, Overlays};
pub use scenario::{load_scenario, Scenario, ScenarioError};
pub use trial::{run_trial, run_trial_with, TrialMetrics, TrialOptions};
