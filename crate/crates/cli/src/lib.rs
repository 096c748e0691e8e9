//! Command-line frontend for the radar simulator: scene configs,
//! trajectories and the `render`, `compare`, `calibrate` and `bench`
//! commands. The binary in `main.rs` is a thin clap wrapper over this crate.

pub mod commands;
pub mod config;
pub mod error;
pub mod trajectory;

pub use commands::{
    bench, calibrate_scene, cmd_bench, cmd_calibrate, cmd_compare, cmd_render, compare_dirs, frame_file_name,
    frame_seed, render_frames, BenchRow, CalibrateOptions, Comparison, FrameScore, ManifestRow, RenderOptions,
};
pub use config::{load_scene, LoadedScene, SceneConfig};
pub use error::{CliError, Result};
pub use trajectory::{load_trajectory, parse_trajectory, Trajectory, TrajectoryRecord};
