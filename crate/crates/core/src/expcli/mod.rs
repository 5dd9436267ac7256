//! Experiment orchestration behind the `ivelab` command line.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod heatmap;

pub use commands::{cmd_didactic, cmd_fig3, cmd_fig5, cmd_plan_study, cmd_shift};
pub use config::RunConfig;
pub use heatmap::HeatmapImage;
