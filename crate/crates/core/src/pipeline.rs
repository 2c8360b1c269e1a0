//! Block scheduler: STFT → CPSD (tumbling blocks of N frames) → VAD →
//! DU localization → Kalman tracking → scoring.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, Direction, DirectionGrid};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{self, BlockError, ScoreReport, ScoredPoint, Scoring};
use crate::frontend::{CpsdBlocker, CpsdStack, MultichannelBuffer, StreamingStft};
use crate::io::{self, EstimateWriter, SrpDumpWriter, WavStream};
use crate::localizer::{argmax_doa, DoaEstimate, DuLocalizer, SrpMap};
use crate::sim::Trajectory;
use crate::tracker::{EstimateSource, SmoothedEstimate, TrackMode, Tracker};
use crate::vad::{self, VadDecision};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DU_DOA_THREADS";

/// Worker count from `DU_DOA_THREADS`, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One row of the estimate CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_index: usize,
    pub time_s: f64,
    pub raw: Direction,
    pub vad: bool,
    pub smoothed: Option<Direction>,
    pub source: EstimateSource,
}

impl BlockRecord {
    pub fn raw_point(&self) -> ScoredPoint {
        ScoredPoint {
            time_s: self.time_s,
            direction: Some(self.raw),
            active: self.vad,
        }
    }

    pub fn smoothed_point(&self) -> ScoredPoint {
        ScoredPoint {
            time_s: self.time_s,
            direction: self.smoothed,
            active: self.source == EstimateSource::Corrected,
        }
    }
}

/// Everything produced for one block.
#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub record: BlockRecord,
    pub vad: VadDecision,
    pub doa: DoaEstimate,
    pub smoothed: SmoothedEstimate,
    pub srp: SrpMap,
}

/// Sample stream to CPSD blocks. Runs on the producer side of the pipeline.
pub struct BlockFrontend {
    stft: StreamingStft,
    blocker: CpsdBlocker,
    selection: Option<Vec<usize>>,
    input_channels: usize,
}

impl BlockFrontend {
    pub fn new(config: &PipelineConfig, input_channels: usize) -> Result<Self> {
        let used = match &config.channels {
            Some(sel) => {
                if let Some(&bad) = sel.iter().find(|&&c| c >= input_channels) {
                    return Err(Error::Config(format!(
                        "channel {bad} out of range for a {input_channels}-channel input"
                    )));
                }
                sel.len()
            }
            None => input_channels,
        };
        Ok(Self {
            stft: StreamingStft::new(&config.stft, config.sample_rate_hz, used)?,
            blocker: CpsdBlocker::new(config.cpsd_frames),
            selection: config.channels.clone(),
            input_channels,
        })
    }

    /// Accepts interleaved samples with the input's channel count.
    pub fn push_interleaved(&mut self, samples: &[f64]) -> Result<Vec<CpsdStack>> {
        let frames = match &self.selection {
            None => self.stft.push_interleaved(samples),
            Some(sel) => {
                let picked: Vec<f64> = samples
                    .chunks_exact(self.input_channels)
                    .flat_map(|f| sel.iter().map(move |&c| f[c]))
                    .collect();
                self.stft.push_interleaved(&picked)
            }
        };
        self.collect(frames)
    }

    /// Accepts one equal-length chunk per input channel.
    pub fn push_channels<S: AsRef<[f64]>>(&mut self, chunk: &[S]) -> Result<Vec<CpsdStack>> {
        let frames = match &self.selection {
            None => self.stft.push_channels(chunk),
            Some(sel) => {
                let picked: Vec<&[f64]> = sel.iter().map(|&c| chunk[c].as_ref()).collect();
                self.stft.push_channels(&picked)
            }
        };
        self.collect(frames)
    }

    fn collect(&mut self, frames: Vec<crate::frontend::SpectralFrame>) -> Result<Vec<CpsdStack>> {
        let mut out = Vec::new();
        for f in frames {
            if let Some(stack) = self.blocker.push(f)? {
                out.push(stack);
            }
        }
        Ok(out)
    }
}

/// CPSD blocks to VAD, DOA and tracked estimates. Runs on the consumer side.
pub struct BlockBackend {
    localizer: DuLocalizer,
    tracker: Tracker,
    vad_threshold: f64,
    fft_size: usize,
    hop: usize,
    frames_per_block: usize,
    sample_rate_hz: f64,
}

impl BlockBackend {
    pub fn new(config: &PipelineConfig, geometry: &ArrayGeometry) -> Result<Self> {
        config.validate()?;
        let grid = DirectionGrid::build(config.grid.kind, config.grid.resolution_deg)?;
        let localizer = DuLocalizer::new(
            geometry,
            grid,
            config.stft.bins(config.sample_rate_hz),
            config.stft.fft_size,
            config.sample_rate_hz,
        )?;
        Ok(Self {
            localizer,
            tracker: Tracker::new(config.tracker)?,
            vad_threshold: config.vad_threshold,
            fft_size: config.stft.fft_size,
            hop: config.stft.hop,
            frames_per_block: config.cpsd_frames,
            sample_rate_hz: config.sample_rate_hz,
        })
    }

    pub fn localizer(&self) -> &DuLocalizer {
        &self.localizer
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Midpoint of the samples covered by block `block`, in seconds.
    pub fn block_time(&self, block: usize) -> f64 {
        let first = block * self.frames_per_block * self.hop;
        let end = (block * self.frames_per_block + self.frames_per_block - 1) * self.hop + self.fft_size;
        0.5 * (first + end) as f64 / self.sample_rate_hz
    }

    pub fn process(&mut self, cpsd: &CpsdStack) -> Result<BlockOutput> {
        let block_index = (cpsd.frame_index + 1) / self.frames_per_block - 1;
        let time_s = self.block_time(block_index);
        let vad = vad::detect(cpsd, self.vad_threshold);
        let srp = self.localizer.srp(cpsd)?;
        let doa = argmax_doa(&srp, self.localizer.grid(), time_s, vad.active);
        let smoothed = self.tracker.step(&vad, Some(&doa), time_s)?;
        let record = BlockRecord {
            block_index,
            time_s,
            raw: doa.direction,
            vad: vad.active,
            smoothed: smoothed.direction,
            source: smoothed.source,
        };
        Ok(BlockOutput {
            record,
            vad,
            doa,
            smoothed,
            srp,
        })
    }
}

/// Synchronous pipeline for in-memory buffers.
pub struct Pipeline {
    frontend: BlockFrontend,
    backend: BlockBackend,
}

impl Pipeline {
    /// Checks the input's channel count and sample rate against the config
    /// and geometry before building the steering table.
    pub fn new(
        config: &PipelineConfig,
        geometry: &ArrayGeometry,
        input_channels: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        check_input(config, geometry, input_channels, sample_rate_hz)?;
        Ok(Self {
            frontend: BlockFrontend::new(config, input_channels)?,
            backend: BlockBackend::new(config, geometry)?,
        })
    }

    pub fn backend(&self) -> &BlockBackend {
        &self.backend
    }

    pub fn push_interleaved(&mut self, samples: &[f64]) -> Result<Vec<BlockOutput>> {
        let stacks = self.frontend.push_interleaved(samples)?;
        stacks.iter().map(|s| self.backend.process(s)).collect()
    }

    pub fn push_channels<S: AsRef<[f64]>>(&mut self, chunk: &[S]) -> Result<Vec<BlockOutput>> {
        let stacks = self.frontend.push_channels(chunk)?;
        stacks.iter().map(|s| self.backend.process(s)).collect()
    }
}

fn check_input(
    config: &PipelineConfig,
    geometry: &ArrayGeometry,
    input_channels: usize,
    sample_rate_hz: f64,
) -> Result<()> {
    if sample_rate_hz != config.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            expected: config.sample_rate_hz,
            got: sample_rate_hz,
        });
    }
    let used = config.channels.as_ref().map_or(input_channels, Vec::len);
    if used != geometry.num_mics() {
        return Err(Error::ChannelMismatch {
            expected: geometry.num_mics(),
            got: used,
        });
    }
    Ok(())
}

/// Runs the whole pipeline over an in-memory buffer.
pub fn process_buffer(
    config: &PipelineConfig,
    geometry: &ArrayGeometry,
    buffer: &MultichannelBuffer,
) -> Result<Vec<BlockOutput>> {
    let mut pipe = Pipeline::new(config, geometry, buffer.num_channels(), buffer.sample_rate_hz())?;
    let chunk = config.stft.hop * config.cpsd_frames;
    let mut out = Vec::new();
    for start in (0..buffer.len()).step_by(chunk.max(1)) {
        let end = (start + chunk).min(buffer.len());
        let slices: Vec<&[f64]> = buffer.channels().iter().map(|c| &c[start..end]).collect();
        out.extend(pipe.push_channels(&slices)?);
    }
    Ok(out)
}

/// Scores records against ground truth, using raw or smoothed directions.
pub fn score_records(
    records: &[BlockRecord],
    truth: &Trajectory,
    scoring: Scoring,
    mode: TrackMode,
    raw: bool,
) -> Result<(ScoreReport, Vec<BlockError>)> {
    let points: Vec<ScoredPoint> = records
        .iter()
        .map(|r| if raw { r.raw_point() } else { r.smoothed_point() })
        .collect();
    let errors = eval::block_errors(&points, truth, scoring, mode);
    let report = eval::report(&errors, points.len())?;
    Ok((report, errors))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<BlockRecord>,
    pub report: Option<ScoreReport>,
    pub warnings: Vec<String>,
    pub input_frames: usize,
    /// Steering-table construction and other one-time work.
    pub setup_time: Duration,
    /// Streaming time from the first read to the last block.
    pub processing_time: Duration,
}

impl RunSummary {
    /// Input samples per channel consumed per second of processing time.
    pub fn throughput(&self) -> f64 {
        self.input_frames as f64 / self.processing_time.as_secs_f64()
    }
}

const READ_CHUNK_FRAMES: usize = 8192;

/// Runs the file-driven pipeline described by `config.io`. Relative geometry
/// paths resolve against `base_dir`.
///
/// Reading and spectral analysis run on a producer thread feeding CPSD blocks
/// through a bounded channel; localization and tracking consume them in order.
pub fn run_pipeline(config: &PipelineConfig, base_dir: Option<&Path>) -> Result<RunSummary> {
    let setup_start = Instant::now();
    config.validate()?;
    let input = config
        .io
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input WAV given".into()))?;
    let geometry = config.load_geometry(base_dir)?;
    let mut wav = WavStream::open(input)?;
    let input_channels = wav.num_channels();
    check_input(config, &geometry, input_channels, wav.sample_rate_hz())?;
    let truth = match &config.io.truth {
        Some(p) => Some(io::read_truth_csv(p, config.io.truth_convention)?),
        None => None,
    };

    let mut estimates = match &config.io.output {
        Some(p) => Some(
            EstimateWriter::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
                .map_err(|e| Error::io(p, e))?,
        ),
        None => None,
    };
    let mut srp_dump = match &config.io.dump_srp {
        Some(p) => Some(
            SrpDumpWriter::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
                .map_err(|e| Error::io(p, e))?,
        ),
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut backend = pool.install(|| BlockBackend::new(config, &geometry))?;
    let mut frontend = BlockFrontend::new(config, input_channels)?;
    let setup_time = setup_start.elapsed();

    let start = Instant::now();
    let mut records = Vec::new();
    let input_frames = std::thread::scope(|scope| -> Result<usize> {
        let (tx, rx) = mpsc::sync_channel::<Result<CpsdStack>>(4);
        let producer = scope.spawn(move || -> Result<usize> {
            let mut frames = 0;
            loop {
                let chunk = wav.read_chunk(READ_CHUNK_FRAMES)?;
                if chunk.is_empty() {
                    return Ok(frames);
                }
                frames += chunk.len() / input_channels;
                for stack in frontend.push_interleaved(&chunk)? {
                    if tx.send(Ok(stack)).is_err() {
                        return Ok(frames);
                    }
                }
            }
        });
        for stack in rx {
            let out = pool.install(|| backend.process(&stack?))?;
            if let Some(w) = estimates.as_mut() {
                w.write(&out.record).map_err(|e| Error::io(config.io.output.clone().unwrap_or_default(), e))?;
            }
            if let Some(w) = srp_dump.as_mut() {
                w.write(out.record.block_index, &out.srp)
                    .map_err(|e| Error::io(config.io.dump_srp.clone().unwrap_or_default(), e))?;
            }
            records.push(out.record);
        }
        producer.join().expect("producer thread panicked")
    })?;
    let processing_time = start.elapsed();

    if let (Some(w), Some(p)) = (estimates, &config.io.output) {
        w.finish().map_err(|e| Error::io(p, e))?;
    }
    if let (Some(w), Some(p)) = (srp_dump, &config.io.dump_srp) {
        w.finish().map_err(|e| Error::io(p, e))?;
    }

    let report = match &truth {
        Some(truth) => {
            let (report, errors) =
                score_records(&records, truth, config.scoring, config.tracker.mode, false)?;
            if let Some(p) = &config.io.errors_out {
                io::write_errors_csv(p, &errors)?;
            }
            Some(report)
        }
        None => None,
    };
    if let Some(dir) = &config.io.plots_dir {
        crate::plot::emit_plots(&records, truth.as_ref(), config.tracker.mode, dir)?;
    }

    Ok(RunSummary {
        records,
        report,
        warnings: config.warnings(),
        input_frames,
        setup_time,
        processing_time,
    })
}
