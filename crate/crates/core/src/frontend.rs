//! STFT analysis and cross-power spectral density estimation.
//!
//! Frames are start-aligned: frame `k` covers samples `[kR, kR + L)`. Only the
//! in-band FFT bins are kept, and each frame stores the stacked channel vector
//! per bin so the CPSD outer products read contiguous memory.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: f64,
}

impl MultichannelBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate_hz: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("buffer has no channels".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Config("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite sample value".into()));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Keeps only the listed channels, in the listed order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        let picked = channels
            .iter()
            .map(|&c| {
                self.channels.get(c).cloned().ok_or_else(|| {
                    Error::Config(format!(
                        "channel {c} out of range for a {}-channel input",
                        self.num_channels()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked, self.sample_rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    /// `[f_min_hz, f_max_hz]`
    pub band_hz: [f64; 2],
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 2048,
            hop: 512,
            band_hz: [80.0, 8000.0],
        }
    }
}

impl StftConfig {
    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let l = self.fft_size;
        if l < 2 || l % 2 != 0 {
            return Err(Error::Config(format!(
                "FFT size must be even and at least 2, got {l}"
            )));
        }
        if self.hop == 0 || self.hop > l {
            return Err(Error::Config(format!(
                "hop must be in 1..={l}, got {}",
                self.hop
            )));
        }
        let [lo, hi] = self.band_hz;
        if !(lo >= 0.0 && lo < hi && hi <= sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "band [{lo}, {hi}] Hz must satisfy 0 <= f_min < f_max <= {}",
                sample_rate_hz / 2.0
            )));
        }
        if self.bins(sample_rate_hz).is_empty() {
            return Err(Error::Config(format!(
                "band [{lo}, {hi}] Hz contains no FFT bin"
            )));
        }
        Ok(())
    }

    /// In-band FFT bins `ceil(f_min·L/fs) ..= floor(f_max·L/fs)`.
    pub fn bins(&self, sample_rate_hz: f64) -> Range<usize> {
        let l = self.fft_size as f64;
        let first = (self.band_hz[0] * l / sample_rate_hz).ceil() as usize;
        let last = (self.band_hz[1] * l / sample_rate_hz).floor() as usize;
        first..(last + 1).max(first)
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.fft_size {
            0
        } else {
            (num_samples - self.fft_size) / self.hop + 1
        }
    }
}

/// Periodic Hann window `0.5·(1 − cos(2πl/L))`.
pub fn hann_window(len: usize) -> Vec<f64> {
    let n = len as f64;
    (0..len)
        .map(|l| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * l as f64 / n).cos()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame {
    pub frame_index: usize,
    num_mics: usize,
    first_bin: usize,
    /// `[bin][mic]`
    spectra: Vec<Complex64>,
}

impl SpectralFrame {
    pub fn new(frame_index: usize, num_mics: usize, first_bin: usize, spectra: Vec<Complex64>) -> Self {
        assert!(num_mics > 0 && spectra.len() % num_mics == 0);
        Self {
            frame_index,
            num_mics,
            first_bin,
            spectra,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.spectra.len() / self.num_mics
    }

    pub fn bin_indices(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.num_bins()
    }

    /// Stacked channel vector `x(k, f)` for the `b`-th in-band bin.
    pub fn channel_vector(&self, b: usize) -> &[Complex64] {
        &self.spectra[b * self.num_mics..(b + 1) * self.num_mics]
    }

    pub fn get(&self, mic: usize, b: usize) -> Complex64 {
        self.spectra[b * self.num_mics + mic]
    }
}

/// Windowed FFT of one frame for all channels, restricted to the band.
pub struct FrameAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bins: Range<usize>,
    scratch: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl FrameAnalyzer {
    pub fn new(config: &StftConfig, sample_rate_hz: f64) -> Result<Self> {
        config.validate(sample_rate_hz)?;
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            fft,
            window: hann_window(config.fft_size),
            bins: config.bins(sample_rate_hz),
            scratch,
            work: vec![Complex64::default(); config.fft_size],
        })
    }

    pub fn bins(&self) -> Range<usize> {
        self.bins.clone()
    }

    /// `frames[m]` must hold exactly L samples of channel `m`.
    pub fn analyze<S: AsRef<[f64]>>(&mut self, frame_index: usize, frames: &[S]) -> SpectralFrame {
        let num_mics = frames.len();
        let nb = self.bins.len();
        let mut spectra = vec![Complex64::default(); nb * num_mics];
        for (m, samples) in frames.iter().enumerate() {
            let samples = samples.as_ref();
            debug_assert_eq!(samples.len(), self.window.len());
            for ((w, &x), &win) in self.work.iter_mut().zip(samples).zip(&self.window) {
                *w = Complex64::new(x * win, 0.0);
            }
            self.fft.process_with_scratch(&mut self.work, &mut self.scratch);
            for (b, bin) in self.bins.clone().enumerate() {
                spectra[b * num_mics + m] = self.work[bin];
            }
        }
        SpectralFrame::new(frame_index, num_mics, self.bins.start, spectra)
    }
}

/// Batch STFT; a buffer shorter than one frame yields no frames.
pub fn stft(buffer: &MultichannelBuffer, config: &StftConfig) -> Result<Vec<SpectralFrame>> {
    let mut analyzer = FrameAnalyzer::new(config, buffer.sample_rate_hz())?;
    let (l, r) = (config.fft_size, config.hop);
    Ok((0..config.num_frames(buffer.len()))
        .map(|k| {
            let slices: Vec<&[f64]> = buffer
                .channels()
                .iter()
                .map(|c| &c[k * r..k * r + l])
                .collect();
            analyzer.analyze(k, &slices)
        })
        .collect())
}

/// Incremental STFT over a sample stream; frame numbering matches [`stft`].
pub struct StreamingStft {
    analyzer: FrameAnalyzer,
    fft_size: usize,
    hop: usize,
    pending: Vec<Vec<f64>>,
    next_frame: usize,
}

impl StreamingStft {
    pub fn new(config: &StftConfig, sample_rate_hz: f64, num_channels: usize) -> Result<Self> {
        Ok(Self {
            analyzer: FrameAnalyzer::new(config, sample_rate_hz)?,
            fft_size: config.fft_size,
            hop: config.hop,
            pending: vec![Vec::new(); num_channels],
            next_frame: 0,
        })
    }

    pub fn bins(&self) -> Range<usize> {
        self.analyzer.bins()
    }

    /// Appends interleaved samples and returns every frame that became complete.
    pub fn push_interleaved(&mut self, samples: &[f64]) -> Vec<SpectralFrame> {
        let m = self.pending.len();
        debug_assert_eq!(samples.len() % m, 0);
        for chunk in samples.chunks_exact(m) {
            for (buf, &s) in self.pending.iter_mut().zip(chunk) {
                buf.push(s);
            }
        }
        self.drain()
    }

    /// Appends one equal-length chunk per channel.
    pub fn push_channels<S: AsRef<[f64]>>(&mut self, chunk: &[S]) -> Vec<SpectralFrame> {
        debug_assert_eq!(chunk.len(), self.pending.len());
        for (buf, c) in self.pending.iter_mut().zip(chunk) {
            buf.extend_from_slice(c.as_ref());
        }
        self.drain()
    }

    fn drain(&mut self) -> Vec<SpectralFrame> {
        let mut out = Vec::new();
        let mut start = 0;
        while self.pending[0].len() - start >= self.fft_size {
            let slices: Vec<&[f64]> = self
                .pending
                .iter()
                .map(|c| &c[start..start + self.fft_size])
                .collect();
            out.push(self.analyzer.analyze(self.next_frame, &slices));
            self.next_frame += 1;
            start += self.hop;
        }
        if start > 0 {
            for buf in &mut self.pending {
                buf.drain(..start);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpsdStack {
    pub frame_index: usize,
    num_mics: usize,
    first_bin: usize,
    /// `[bin][row][col]`
    data: Vec<Complex64>,
}

impl CpsdStack {
    pub fn new(frame_index: usize, num_mics: usize, first_bin: usize, data: Vec<Complex64>) -> Self {
        assert!(num_mics > 0 && data.len() % (num_mics * num_mics) == 0);
        Self {
            frame_index,
            num_mics,
            first_bin,
            data,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.data.len() / (self.num_mics * self.num_mics)
    }

    pub fn bin_indices(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.num_bins()
    }

    /// Row-major M×M matrix of the `b`-th in-band bin.
    pub fn matrix(&self, b: usize) -> &[Complex64] {
        let mm = self.num_mics * self.num_mics;
        &self.data[b * mm..(b + 1) * mm]
    }

    pub fn trace(&self, b: usize) -> f64 {
        let m = self.num_mics;
        let mat = self.matrix(b);
        (0..m).map(|i| mat[i * m + i].re).sum()
    }

    /// Multiplies every matrix by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }
}

/// Averages `x·x^H` over the last `n` frames.
pub fn estimate_cpsd(frames: &[SpectralFrame], n: usize) -> Result<CpsdStack> {
    if n == 0 || frames.len() < n {
        return Err(Error::InsufficientHistory {
            needed: n.max(1),
            got: frames.len(),
        });
    }
    let frames = &frames[frames.len() - n..];
    for w in frames.windows(2) {
        if w[1].frame_index != w[0].frame_index + 1 {
            return Err(Error::NonConsecutiveFrames {
                prev: w[0].frame_index,
                got: w[1].frame_index,
            });
        }
    }
    let first = &frames[0];
    let (m, nb) = (first.num_mics(), first.num_bins());
    if frames
        .iter()
        .any(|f| f.num_mics() != m || f.num_bins() != nb || f.first_bin != first.first_bin)
    {
        return Err(Error::Config("frames differ in shape".into()));
    }

    let mm = m * m;
    let mut data = vec![Complex64::default(); nb * mm];
    for frame in frames {
        for b in 0..nb {
            let x = frame.channel_vector(b);
            let mat = &mut data[b * mm..(b + 1) * mm];
            for i in 0..m {
                let xi = x[i];
                mat[i * m + i].re += xi.norm_sqr();
                for j in i + 1..m {
                    mat[i * m + j] += xi * x[j].conj();
                }
            }
        }
    }
    let scale = 1.0 / n as f64;
    for mat in data.chunks_exact_mut(mm) {
        for i in 0..m {
            mat[i * m + i].re *= scale;
            for j in i + 1..m {
                let v = mat[i * m + j] * scale;
                mat[i * m + j] = v;
                mat[j * m + i] = v.conj();
            }
        }
    }
    let newest = frames[n - 1].frame_index;
    Ok(CpsdStack::new(newest, m, first.first_bin, data))
}

/// Groups frames into non-overlapping blocks of `n` and emits one CPSD per block.
pub struct CpsdBlocker {
    n: usize,
    frames: Vec<SpectralFrame>,
}

impl CpsdBlocker {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "block length must be positive");
        Self {
            n,
            frames: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, frame: SpectralFrame) -> Result<Option<CpsdStack>> {
        self.frames.push(frame);
        if self.frames.len() < self.n {
            return Ok(None);
        }
        let stack = estimate_cpsd(&self.frames, self.n);
        self.frames.clear();
        stack.map(Some)
    }
}
