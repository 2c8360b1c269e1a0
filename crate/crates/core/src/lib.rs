//! DU-SRP direction-of-arrival estimation with Kalman tracking for microphone arrays.
//!
//! The processing chain is STFT → block CPSD → VAD → diagonal-unloading SRP
//! over a direction grid → constant-velocity Kalman tracker. [`pipeline`]
//! wires the stages together; [`sim`] synthesizes test scenes and [`eval`]
//! scores estimates against ground truth.

pub mod angles;
pub mod array;
pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod io;
pub mod localizer;
pub mod pipeline;
pub mod plot;
pub mod sim;
pub mod tracker;
pub mod vad;

pub use array::{ArrayGeometry, ArrayKind, Direction, DirectionGrid};
pub use config::{PipelineConfig, Preset};
pub use error::{Error, Result};
pub use eval::{ScoreReport, Scoring};
pub use localizer::{DoaEstimate, DuLocalizer};
pub use pipeline::{process_buffer, run_pipeline, BlockRecord, Pipeline, RunSummary};
pub use sim::{SceneFile, SceneSpec, Trajectory, TrajectoryPoint};
pub use tracker::{TrackMode, Tracker, TrackerConfig};
