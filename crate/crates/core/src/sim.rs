//! Far-field synthetic scenes: a single plane-wave source following a
//! piecewise-linear trajectory, rendered per microphone with a windowed-sinc
//! fractional delay, plus independent white Gaussian sensor noise.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::angles::{arc_diff_deg, wrap_deg};
use crate::array::{propagation_delays, ArrayGeometry, Direction};
use crate::error::{Error, Result};
use crate::frontend::MultichannelBuffer;

/// Half-width of the interpolation kernel; the kernel has `2·HALF_TAPS + 1` taps.
const HALF_TAPS: i64 = 31;
/// Blackman window half-length in samples.
const WINDOW_HALF: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time_s: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl TrajectoryPoint {
    pub fn new(time_s: f64, azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            time_s,
            azimuth_deg,
            elevation_deg,
        }
    }
}

/// Piecewise-linear direction over time. Azimuth interpolates along the
/// shorter arc, so a segment from 170° to -170° passes through 180°.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("trajectory has no points".into()));
        }
        for p in &points {
            if !(p.time_s.is_finite()
                && (-180.0..=180.0).contains(&p.azimuth_deg)
                && (-90.0..=90.0).contains(&p.elevation_deg))
            {
                return Err(Error::Config(format!(
                    "trajectory point out of range: t={} az={} el={}",
                    p.time_s, p.azimuth_deg, p.elevation_deg
                )));
            }
        }
        if points.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
            return Err(Error::Config(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn fixed(direction: Direction, start_s: f64, end_s: f64) -> Result<Self> {
        Self::new(vec![
            TrajectoryPoint::new(start_s, direction.azimuth_deg, direction.elevation_deg),
            TrajectoryPoint::new(end_s, direction.azimuth_deg, direction.elevation_deg),
        ])
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn span(&self) -> (f64, f64) {
        (self.points[0].time_s, self.points[self.points.len() - 1].time_s)
    }

    pub fn is_static(&self) -> bool {
        let p0 = self.points[0];
        self.points
            .iter()
            .all(|p| p.azimuth_deg == p0.azimuth_deg && p.elevation_deg == p0.elevation_deg)
    }

    pub fn ground_truth_at(&self, time_s: f64) -> Result<Direction> {
        let (start, end) = self.span();
        if !(time_s >= start && time_s <= end) {
            return Err(Error::OutOfSpan { time_s, start, end });
        }
        let i = self.points.partition_point(|p| p.time_s <= time_s);
        let hi = i.min(self.points.len() - 1);
        let lo = hi.saturating_sub(1);
        let (a, b) = (self.points[lo], self.points[hi]);
        if time_s == a.time_s || lo == hi {
            return Ok(Direction::new(a.azimuth_deg, a.elevation_deg));
        }
        if time_s == b.time_s {
            return Ok(Direction::new(b.azimuth_deg, b.elevation_deg));
        }
        let u = (time_s - a.time_s) / (b.time_s - a.time_s);
        let az = a.azimuth_deg + u * arc_diff_deg(b.azimuth_deg, a.azimuth_deg);
        let el = a.elevation_deg + u * (b.elevation_deg - a.elevation_deg);
        // Keep values that never leave the +/-180 range unwrapped so line-array
        // trajectories stay in [0, 180].
        let az = if (-180.0..=180.0).contains(&az) { az } else { wrap_deg(az) };
        Ok(Direction::new(az, el))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    WhiteNoise,
    /// White noise through an AR(2) resonator at 500 Hz, gated on/off at 10 Hz.
    SpeechLike,
    /// First channel of a WAV file, looped to the scene length.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry,
    pub trajectory: Trajectory,
    pub source: SourceKind,
    /// Per-channel SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    /// RMS level of the ungated source signal.
    pub source_rms: f64,
    /// `[start_s, end_s)` intervals where the source is on; `None` means always.
    pub active_segments: Option<Vec<[f64; 2]>>,
}

impl SceneSpec {
    pub fn new(geometry: ArrayGeometry, trajectory: Trajectory, duration_s: f64) -> Self {
        Self {
            geometry,
            trajectory,
            source: SourceKind::WhiteNoise,
            snr_db: f64::INFINITY,
            duration_s,
            sample_rate_hz: 48_000.0,
            seed: 0,
            source_rms: 0.05,
            active_segments: None,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config("scene sample rate must be positive".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config("scene duration must be positive".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {} dB", self.snr_db)));
        }
        if !(self.source_rms.is_finite() && self.source_rms > 0.0) {
            return Err(Error::Config("source level must be positive".into()));
        }
        let (start, end) = self.trajectory.span();
        let last = (self.num_samples().max(1) - 1) as f64 / self.sample_rate_hz;
        if start > 0.0 || end < last {
            return Err(Error::Config(format!(
                "trajectory span [{start}, {end}] s does not cover the scene [0, {last}] s"
            )));
        }
        Ok(())
    }

    fn is_active(&self, t: f64) -> bool {
        match &self.active_segments {
            None => true,
            Some(segs) => segs.iter().any(|&[a, b]| t >= a && t < b),
        }
    }
}

/// Clean (noise-free) channels and the noise added to them, kept apart so
/// tests can measure the realized SNR.
#[derive(Debug, Clone)]
pub struct SceneParts {
    pub clean: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
}

pub fn synthesize(spec: &SceneSpec) -> Result<(MultichannelBuffer, Trajectory)> {
    let parts = synthesize_parts(spec)?;
    let channels = parts
        .clean
        .into_iter()
        .zip(parts.noise)
        .map(|(c, n)| c.into_iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    Ok((
        MultichannelBuffer::new(channels, spec.sample_rate_hz)?,
        spec.trajectory.clone(),
    ))
}

pub fn synthesize_parts(spec: &SceneSpec) -> Result<SceneParts> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let len = spec.num_samples();
    let geo = &spec.geometry;

    let radius = geo
        .positions()
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    let pad = (radius / geo.speed_of_sound() * fs).ceil() as usize + HALF_TAPS as usize + 2;
    let source = source_signal(spec, len + 2 * pad, pad)?;

    let m = geo.num_mics();
    let mut clean = vec![vec![0.0; len]; m];
    let kernel = SincKernel::new();
    if spec.trajectory.is_static() {
        let dir = spec.trajectory.ground_truth_at(spec.trajectory.span().0)?;
        for (out, tau) in clean.iter_mut().zip(propagation_delays(geo, dir)) {
            let shift = tau * fs;
            let (i0, taps) = kernel.taps(-shift);
            for (n, o) in out.iter_mut().enumerate() {
                *o = apply(&source, pad as i64 + n as i64 + i0, &taps);
            }
        }
    } else {
        for n in 0..len {
            let dir = spec.trajectory.ground_truth_at(n as f64 / fs)?;
            for (out, tau) in clean.iter_mut().zip(propagation_delays(geo, dir)) {
                let (i0, taps) = kernel.taps(-tau * fs);
                out[n] = apply(&source, pad as i64 + n as i64 + i0, &taps);
            }
        }
    }

    let mut noise = vec![vec![0.0; len]; m];
    if spec.snr_db.is_finite() {
        let active: Vec<bool> = (0..len).map(|n| spec.is_active(n as f64 / fs)).collect();
        for (ch, (out, sig)) in noise.iter_mut().zip(&clean).enumerate() {
            let (sum, count) = sig
                .iter()
                .zip(&active)
                .filter(|(_, a)| **a)
                .fold((0.0, 0usize), |(s, c), (x, _)| (s + x * x, c + 1));
            let power = if count > 0 { sum / count as f64 } else { 0.0 };
            let std = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(ch as u64 + 1);
            for o in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *o = std * z;
            }
        }
    }
    Ok(SceneParts { clean, noise })
}

/// Source samples; index `pad` corresponds to scene time zero.
fn source_signal(spec: &SceneSpec, len: usize, pad: usize) -> Result<Vec<f64>> {
    let fs = spec.sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let mut white = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut sig: Vec<f64> = match &spec.source {
        SourceKind::WhiteNoise => (0..len).map(|_| white()).collect(),
        SourceKind::SpeechLike => {
            let r = 0.97;
            let a1 = 2.0 * r * (2.0 * std::f64::consts::PI * 500.0 / fs).cos();
            let a2 = -r * r;
            let (mut y1, mut y2) = (0.0, 0.0);
            (0..len)
                .map(|_| {
                    let y = white() + a1 * y1 + a2 * y2;
                    y2 = y1;
                    y1 = y;
                    y
                })
                .collect()
        }
        SourceKind::File(path) => {
            let buf = crate::io::read_wav(path)?;
            if buf.sample_rate_hz() != fs {
                return Err(Error::SampleRateMismatch {
                    expected: fs,
                    got: buf.sample_rate_hz(),
                });
            }
            let ch = &buf.channels()[0];
            if ch.is_empty() {
                return Err(Error::format(path, "source file has no samples"));
            }
            ch.iter().copied().cycle().take(len).collect()
        }
    };
    let rms = (sig.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    let gain = if rms > 0.0 { spec.source_rms / rms } else { 0.0 };
    let gated = spec.source == SourceKind::SpeechLike;
    for (i, s) in sig.iter_mut().enumerate() {
        let t = (i as f64 - pad as f64) / fs;
        let on = spec.is_active(t) && (!gated || (t * 20.0).floor().rem_euclid(2.0) == 0.0);
        *s = if on { *s * gain } else { 0.0 };
    }
    Ok(sig)
}

fn apply(source: &[f64], start: i64, taps: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, &w) in taps.iter().enumerate() {
        let i = start + k as i64;
        if i >= 0 && (i as usize) < source.len() {
            acc += source[i as usize] * w;
        }
    }
    acc
}

/// Blackman-windowed sinc interpolation weights.
struct SincKernel {
    cos1: Vec<f64>,
    sin1: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
}

impl SincKernel {
    fn new() -> Self {
        let beta = std::f64::consts::PI / WINDOW_HALF;
        let ks = -HALF_TAPS..=HALF_TAPS;
        Self {
            cos1: ks.clone().map(|k| (k as f64 * beta).cos()).collect(),
            sin1: ks.clone().map(|k| (k as f64 * beta).sin()).collect(),
            cos2: ks.clone().map(|k| (2.0 * k as f64 * beta).cos()).collect(),
            sin2: ks.map(|k| (2.0 * k as f64 * beta).sin()).collect(),
        }
    }

    /// Weights to evaluate `x(n + offset)` as `Σ_k w_k·x(n + i0 + k)`.
    fn taps(&self, offset: f64) -> (i64, [f64; 2 * HALF_TAPS as usize + 1]) {
        let center = offset.round();
        let frac = offset - center;
        let mut w = [0.0; 2 * HALF_TAPS as usize + 1];
        if frac == 0.0 {
            w[HALF_TAPS as usize] = 1.0;
            return (center as i64 - HALF_TAPS, w);
        }
        let pi = std::f64::consts::PI;
        let s = (pi * frac).sin();
        let alpha = pi * frac / WINDOW_HALF;
        let (sa, ca) = alpha.sin_cos();
        let (s2a, c2a) = (2.0 * alpha).sin_cos();
        for (idx, k) in (-HALF_TAPS..=HALF_TAPS).enumerate() {
            // t = frac - k
            let t = frac - k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let sinc = sign * s / (pi * t);
            let c1 = ca * self.cos1[idx] + sa * self.sin1[idx];
            let c2 = c2a * self.cos2[idx] + s2a * self.sin2[idx];
            w[idx] = sinc * (0.42 + 0.5 * c1 + 0.08 * c2);
        }
        (center as i64 - HALF_TAPS, w)
    }
}

/// JSON description of a scene, as read by `du-doa sim --spec`.
///
/// `geometry` is a built-in name or a path; `trajectory` lists
/// `{time_s, azimuth_deg, elevation_deg}` knots; a missing or null `snr_db`
/// means no noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub geometry: String,
    pub trajectory: Vec<TrajectoryPoint>,
    pub duration_s: f64,
    #[serde(default = "SceneFile::default_source")]
    pub source: SourceKind,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default = "SceneFile::default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "SceneFile::default_rms")]
    pub source_rms: f64,
    #[serde(default)]
    pub active_segments: Option<Vec<[f64; 2]>>,
}

impl SceneFile {
    fn default_source() -> SourceKind {
        SourceKind::WhiteNoise
    }

    fn default_rate() -> f64 {
        48_000.0
    }

    fn default_rms() -> f64 {
        0.05
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::format(path, e))
    }

    /// Resolves the geometry and any source file against `base_dir`.
    pub fn into_spec(self, base_dir: Option<&std::path::Path>) -> Result<SceneSpec> {
        let geometry = crate::config::resolve_geometry(&self.geometry, base_dir)?;
        let source = match self.source {
            SourceKind::File(p) if p.is_relative() => {
                SourceKind::File(base_dir.map_or(p.clone(), |d| d.join(&p)))
            }
            other => other,
        };
        Ok(SceneSpec {
            geometry,
            trajectory: Trajectory::new(self.trajectory)?,
            source,
            snr_db: self.snr_db.unwrap_or(f64::INFINITY),
            duration_s: self.duration_s,
            sample_rate_hz: self.sample_rate_hz,
            seed: self.seed,
            source_rms: self.source_rms,
            active_segments: self.active_segments,
        })
    }
}
