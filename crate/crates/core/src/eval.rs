//! Wrap-aware angular error and RMSE scoring against a ground-truth trajectory.

use serde::{Deserialize, Serialize};

use crate::angles::wrap_deg;
use crate::array::Direction;
use crate::error::{Error, Result};
use crate::localizer::DoaEstimate;
use crate::sim::Trajectory;
use crate::tracker::{EstimateSource, SmoothedEstimate, TrackMode};

/// Absolute angular difference in degrees. Circular errors take the shorter
/// arc and lie in [0, 180].
pub fn angular_error(estimate_deg: f64, truth_deg: f64, circular: bool) -> f64 {
    if circular {
        wrap_deg(estimate_deg - truth_deg).abs()
    } else {
        (estimate_deg - truth_deg).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Only blocks where the source was detected active.
    #[default]
    ActiveOnly,
    /// Every block that produced a direction.
    AllEmitted,
}

/// One block as seen by the scorer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPoint {
    pub time_s: f64,
    pub direction: Option<Direction>,
    pub active: bool,
}

impl From<&SmoothedEstimate> for ScoredPoint {
    fn from(e: &SmoothedEstimate) -> Self {
        Self {
            time_s: e.time_s,
            direction: e.direction,
            active: e.source == EstimateSource::Corrected,
        }
    }
}

impl From<&DoaEstimate> for ScoredPoint {
    fn from(e: &DoaEstimate) -> Self {
        Self {
            time_s: e.time_s,
            direction: Some(e.direction),
            active: e.vad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmse_azimuth_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_elevation_deg: Option<f64>,
    pub n_scored_blocks: usize,
    pub n_skipped_blocks: usize,
}

/// Per-block errors of the scored blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub block: usize,
    pub time_s: f64,
    pub azimuth_error_deg: f64,
    pub elevation_error_deg: Option<f64>,
}

/// Errors for every scorable block. Blocks without a direction, inactive
/// blocks under [`Scoring::ActiveOnly`], and blocks outside the truth span
/// are skipped.
pub fn block_errors(
    points: &[ScoredPoint],
    truth: &Trajectory,
    scoring: Scoring,
    mode: TrackMode,
) -> Vec<BlockError> {
    points
        .iter()
        .enumerate()
        .filter_map(|(block, p)| {
            let est = p.direction?;
            if scoring == Scoring::ActiveOnly && !p.active {
                return None;
            }
            let gt = truth.ground_truth_at(p.time_s).ok()?;
            Some(BlockError {
                block,
                time_s: p.time_s,
                azimuth_error_deg: angular_error(est.azimuth_deg, gt.azimuth_deg, true),
                elevation_error_deg: (mode == TrackMode::AzimuthElevation)
                    .then(|| angular_error(est.elevation_deg, gt.elevation_deg, false)),
            })
        })
        .collect()
}

pub fn rmse(
    points: &[ScoredPoint],
    truth: &Trajectory,
    scoring: Scoring,
    mode: TrackMode,
) -> Result<ScoreReport> {
    let errors = block_errors(points, truth, scoring, mode);
    report(&errors, points.len())
}

/// Aggregates per-block errors into a report over `total_blocks` blocks.
pub fn report(errors: &[BlockError], total_blocks: usize) -> Result<ScoreReport> {
    if errors.is_empty() {
        return Err(Error::Evaluation(format!(
            "none of the {total_blocks} blocks is scorable"
        )));
    }
    let n = errors.len() as f64;
    let rms = |sq: f64| (sq / n).sqrt();
    let az = rms(errors.iter().map(|e| e.azimuth_error_deg.powi(2)).sum());
    let el = errors
        .iter()
        .map(|e| e.elevation_error_deg.map(|v| v * v))
        .sum::<Option<f64>>()
        .map(rms);
    Ok(ScoreReport {
        rmse_azimuth_deg: az,
        rmse_elevation_deg: el,
        n_scored_blocks: errors.len(),
        n_skipped_blocks: total_blocks - errors.len(),
    })
}
