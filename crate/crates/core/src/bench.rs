//! Throughput measurement on a synthetic scene, shared by `du-doa bench`
//! and the acceptance suite.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Direction};
use crate::config::{PipelineConfig, Preset};
use crate::error::{Error, Result};
use crate::pipeline::{worker_threads, Pipeline};
use crate::sim::{synthesize, SceneSpec, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub preset: Option<Preset>,
    pub mics: usize,
    pub directions: usize,
    pub bins: usize,
    pub threads: usize,
    pub audio_seconds: f64,
    pub blocks: usize,
    /// Steering-table construction, excluded from the rate.
    pub setup_seconds: f64,
    pub processing_seconds: f64,
    /// Input samples per channel consumed per second.
    pub samples_per_second: f64,
    pub realtime_factor: f64,
}

/// Streams `seconds` of a 20 dB white-noise scene through the pipeline in
/// 8192-sample chunks and times everything after setup.
pub fn run_benchmark(
    config: &PipelineConfig,
    geometry: &ArrayGeometry,
    seconds: f64,
) -> Result<BenchReport> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::Config(format!("benchmark length must be positive, got {seconds}")));
    }
    let truth = Trajectory::fixed(Direction::new(30.0, 20.0), 0.0, seconds)?;
    let spec = SceneSpec {
        snr_db: 20.0,
        sample_rate_hz: config.sample_rate_hz,
        ..SceneSpec::new(geometry.clone(), truth, seconds)
    };
    let (buffer, _) = synthesize(&spec)?;

    let threads = worker_threads();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let setup = Instant::now();
        let mut pipe = Pipeline::new(config, geometry, buffer.num_channels(), buffer.sample_rate_hz())?;
        let setup_seconds = setup.elapsed().as_secs_f64();
        let start = Instant::now();
        let mut blocks = 0;
        for s in (0..buffer.len()).step_by(8192) {
            let e = (s + 8192).min(buffer.len());
            let slices: Vec<&[f64]> = buffer.channels().iter().map(|c| &c[s..e]).collect();
            blocks += pipe.push_channels(&slices)?.len();
        }
        let processing_seconds = start.elapsed().as_secs_f64();
        if blocks == 0 {
            return Err(Error::Config("benchmark scene is shorter than one block".into()));
        }
        let rate = buffer.len() as f64 / processing_seconds;
        let table = pipe.backend().localizer().table();
        Ok(BenchReport {
            preset: config.preset,
            mics: table.num_mics(),
            directions: table.num_dirs(),
            bins: table.bins().len(),
            threads,
            audio_seconds: seconds,
            blocks,
            setup_seconds,
            processing_seconds,
            samples_per_second: rate,
            realtime_factor: rate / config.sample_rate_hz,
        })
    })
}
