//! WAV and CSV file formats.
//!
//! * Audio: RIFF/WAVE, integer PCM (16/24/32-bit) or 32-bit float. Integer
//!   samples are scaled to [-1, 1).
//! * Ground truth: `time_s,azimuth_deg,elevation_deg`.
//! * Estimates: `block_index,time_s,raw_azimuth,raw_elevation,vad,
//!   smoothed_azimuth,smoothed_elevation,source`; smoothed columns are empty
//!   when the tracker emitted nothing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::array::Direction;
use crate::error::{Error, Result};
use crate::eval::BlockError;
use crate::frontend::MultichannelBuffer;
use crate::localizer::SrpMap;
use crate::pipeline::BlockRecord;
use crate::sim::{Trajectory, TrajectoryPoint};
use crate::tracker::EstimateSource;

/// Sequential interleaved reader over a WAV file.
pub struct WavStream {
    reader: WavReader<BufReader<File>>,
    scale: f64,
    path: std::path::PathBuf,
}

impl WavStream {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
        let spec = reader.spec();
        let scale = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Float, 32) => 1.0,
            (SampleFormat::Int, b @ (8 | 16 | 24 | 32)) => 1.0 / (1u64 << (b - 1)) as f64,
            (fmt, b) => {
                return Err(Error::format(
                    path,
                    format!("unsupported sample format {fmt:?} with {b} bits"),
                ))
            }
        };
        Ok(Self {
            reader,
            scale,
            path: path.to_path_buf(),
        })
    }

    pub fn num_channels(&self) -> usize {
        self.reader.spec().channels as usize
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.reader.spec().sample_rate as f64
    }

    /// Frames (samples per channel) in the file.
    pub fn len_frames(&self) -> usize {
        self.reader.duration() as usize
    }

    /// Reads up to `frames` interleaved frames; an empty vector means end of file.
    pub fn read_chunk(&mut self, frames: usize) -> Result<Vec<f64>> {
        let n = frames * self.num_channels();
        let mut out = Vec::with_capacity(n);
        let path = &self.path;
        match self.reader.spec().sample_format {
            SampleFormat::Float => {
                for s in self.reader.samples::<f32>().take(n) {
                    out.push(s.map_err(|e| wav_error(path, e))? as f64);
                }
            }
            SampleFormat::Int => {
                let scale = self.scale;
                for s in self.reader.samples::<i32>().take(n) {
                    out.push(s.map_err(|e| wav_error(path, e))? as f64 * scale);
                }
            }
        }
        Ok(out)
    }
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelBuffer> {
    let mut stream = WavStream::open(path)?;
    let m = stream.num_channels();
    let fs = stream.sample_rate_hz();
    let interleaved = stream.read_chunk(stream.len_frames())?;
    let mut channels = vec![Vec::with_capacity(interleaved.len() / m); m];
    for frame in interleaved.chunks_exact(m) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    MultichannelBuffer::new(channels, fs)
}

/// Writes 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, buffer: &MultichannelBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate_hz().round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for n in 0..buffer.len() {
        for ch in buffer.channels() {
            writer
                .write_sample(ch[n] as f32)
                .map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// How the third truth column measures the vertical angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElevationConvention {
    /// Angle above the horizontal plane.
    #[default]
    Elevation,
    /// Polar angle from the +z axis; converted with `90 - value`.
    Inclination,
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    time_s: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
}

pub fn read_truth_csv(path: impl AsRef<Path>, convention: ElevationConvention) -> Result<Trajectory> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e))?;
    let mut points = Vec::new();
    for row in rdr.deserialize::<TruthRow>() {
        let row = row.map_err(|e| Error::format(path, e))?;
        let el = match convention {
            ElevationConvention::Elevation => row.elevation_deg,
            ElevationConvention::Inclination => 90.0 - row.elevation_deg,
        };
        points.push(TrajectoryPoint::new(row.time_s, row.azimuth_deg, el));
    }
    Trajectory::new(points).map_err(|e| Error::format(path, e))
}

pub fn write_truth_csv(path: impl AsRef<Path>, truth: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = String::from("time_s,azimuth_deg,elevation_deg\n");
    for p in truth.points() {
        body.push_str(&format!(
            "{},{},{}\n",
            p.time_s, p.azimuth_deg, p.elevation_deg
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub const ESTIMATE_HEADER: &str =
    "block_index,time_s,raw_azimuth,raw_elevation,vad,smoothed_azimuth,smoothed_elevation,source";

/// Formats one estimate row (without trailing newline).
pub fn format_estimate_row(r: &BlockRecord) -> String {
    let (sa, se) = match r.smoothed {
        Some(d) => (format!("{:.6}", d.azimuth_deg), format!("{:.6}", d.elevation_deg)),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{:.6},{:.6},{:.6},{},{},{},{}",
        r.block_index,
        r.time_s,
        r.raw.azimuth_deg,
        r.raw.elevation_deg,
        u8::from(r.vad),
        sa,
        se,
        r.source.as_str()
    )
}

/// Streams estimate rows to any writer.
pub struct EstimateWriter<W: Write> {
    out: W,
}

impl<W: Write> EstimateWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{ESTIMATE_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &BlockRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", format_estimate_row(record))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_estimates_csv(path: impl AsRef<Path>, records: &[BlockRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = EstimateWriter::new(create(path)?).map_err(io)?;
    for r in records {
        w.write(r).map_err(io)?;
    }
    w.finish().map(|_| ()).map_err(io)
}

pub fn read_estimates_csv(path: impl AsRef<Path>) -> Result<Vec<BlockRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    let expected: Vec<&str> = ESTIMATE_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(path, format!("expected header `{ESTIMATE_HEADER}`")));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: invalid {what}", line + 2));
        let num = |i: usize, what: &str| -> Result<f64> { rec[i].parse().map_err(|_| bad(what)) };
        let opt = |i: usize, what: &str| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i, what).map(Some)
            }
        };
        let smoothed = match (opt(5, "smoothed_azimuth")?, opt(6, "smoothed_elevation")?) {
            (Some(a), Some(e)) => Some(Direction::new(a, e)),
            (None, None) => None,
            _ => return Err(bad("smoothed direction")),
        };
        out.push(BlockRecord {
            block_index: rec[0].parse().map_err(|_| bad("block_index"))?,
            time_s: num(1, "time_s")?,
            raw: Direction::new(num(2, "raw_azimuth")?, num(3, "raw_elevation")?),
            vad: match &rec[4] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("vad")),
            },
            smoothed,
            source: EstimateSource::parse(&rec[7]).ok_or_else(|| bad("source"))?,
        });
    }
    Ok(out)
}

/// Writes per-block scoring errors as
/// `block_index,time_s,azimuth_error_deg,elevation_error_deg`.
pub fn write_errors_csv(path: impl AsRef<Path>, errors: &[BlockError]) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from("block_index,time_s,azimuth_error_deg,elevation_error_deg\n");
    for e in errors {
        let el = e
            .elevation_error_deg
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        body.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            e.block, e.time_s, e.azimuth_error_deg, el
        ));
    }
    let mut w = create(path)?;
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Appends SRP maps as `block_index,direction_index,value` rows.
pub struct SrpDumpWriter<W: Write> {
    out: W,
}

impl<W: Write> SrpDumpWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "block_index,direction_index,value")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, block_index: usize, map: &SrpMap) -> std::io::Result<()> {
        for (d, v) in map.values.iter().enumerate() {
            writeln!(self.out, "{block_index},{d},{v:.9e}")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
