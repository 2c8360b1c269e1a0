//! Broadband diagonal-unloading steered response power.
//!
//! For each in-band bin the CPSD matrix Φ is replaced by `tr[Φ]·I − Φ`, which
//! suppresses the signal subspace. The narrowband power `1 / a^H (tr[Φ]·I − Φ) a`
//! therefore peaks sharply where the steering vector `a` aligns with the
//! source. Each bin's map is divided by its own maximum before the bins are
//! summed, so every frequency contributes at most 1 to any direction.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{propagation_delays, ArrayGeometry, Direction, DirectionGrid};
use crate::error::{Error, Result};
use crate::frontend::CpsdStack;

/// Directions evaluated together in the quadratic-form kernel.
const TILE: usize = 16;

fn epsilon(trace: f64, num_mics: usize) -> f64 {
    1e-12 * (trace * num_mics as f64).max(1.0)
}

/// Narrowband DU power for one bin and one steering vector. `matrix` is
/// row-major M×M Hermitian.
pub fn du_power(matrix: &[Complex64], steering: &[Complex64]) -> f64 {
    let m = steering.len();
    assert_eq!(matrix.len(), m * m, "matrix and steering vector sizes differ");
    let trace: f64 = (0..m).map(|i| matrix[i * m + i].re).sum();
    let mut acc = Complex64::default();
    for i in 0..m {
        let mut row = Complex64::default();
        for j in 0..m {
            let t = if i == j {
                Complex64::new(trace, 0.0) - matrix[i * m + j]
            } else {
                -matrix[i * m + j]
            };
            row += t * steering[j];
        }
        acc += steering[i].conj() * row;
    }
    debug_assert!(acc.im.abs() <= 1e-9 * (trace * m as f64).max(acc.re.abs()).max(1e-300));
    1.0 / acc.re.max(epsilon(trace, m))
}

/// Steering vectors for every (bin, direction) pair. Directions are grouped
/// in tiles of `TILE`; each tile stores, per microphone, `TILE` real parts
/// followed by `TILE` imaginary parts, so the kernel streams memory in order.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    bins: Range<usize>,
    num_mics: usize,
    num_dirs: usize,
    tiles: usize,
    data: Vec<f64>,
}

impl SteeringTable {
    /// `bins` are absolute FFT bin numbers for an FFT of `fft_size` at `sample_rate_hz`.
    pub fn build(
        geometry: &ArrayGeometry,
        grid: &DirectionGrid,
        bins: Range<usize>,
        fft_size: usize,
        sample_rate_hz: f64,
    ) -> Self {
        let m = geometry.num_mics();
        let d = grid.len();
        let tiles = d.div_ceil(TILE);
        let delays: Vec<Vec<f64>> = grid
            .directions()
            .iter()
            .map(|dir| propagation_delays(geometry, *dir))
            .collect();
        let tile_len = m * 2 * TILE;
        let plane = tiles * tile_len;
        let mut data = vec![0.0; bins.len() * plane];
        data.par_chunks_mut(plane)
            .zip(bins.clone().into_par_iter())
            .for_each(|(out, bin)| {
                let freq = bin as f64 * sample_rate_hz / fft_size as f64;
                let omega = -2.0 * std::f64::consts::PI * freq;
                for (k, tau) in delays.iter().enumerate() {
                    let (tile, t) = (k / TILE, k % TILE);
                    for (mic, &tau) in tau.iter().enumerate() {
                        let (s, c) = (omega * tau).sin_cos();
                        let base = tile * tile_len + mic * 2 * TILE;
                        out[base + t] = c;
                        out[base + TILE + t] = s;
                    }
                }
            });
        Self {
            bins,
            num_mics: m,
            num_dirs: d,
            tiles,
            data,
        }
    }

    pub fn bins(&self) -> Range<usize> {
        self.bins.clone()
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_dirs(&self) -> usize {
        self.num_dirs
    }

    fn tile_len(&self) -> usize {
        self.num_mics * 2 * TILE
    }

    /// Steering vector of the `b`-th table bin toward grid direction `dir`.
    pub fn vector(&self, b: usize, dir: usize) -> Vec<Complex64> {
        let tile = &self.bin_data(b)[dir / TILE * self.tile_len()..][..self.tile_len()];
        let t = dir % TILE;
        (0..self.num_mics)
            .map(|mic| Complex64::new(tile[mic * 2 * TILE + t], tile[mic * 2 * TILE + TILE + t]))
            .collect()
    }

    fn bin_data(&self, b: usize) -> &[f64] {
        let plane = self.tiles * self.tile_len();
        &self.data[b * plane..(b + 1) * plane]
    }

    /// Narrowband DU power of one bin over all grid directions.
    pub fn narrowband_powers(&self, b: usize, matrix: &[Complex64], out: &mut [f64]) {
        let m = self.num_mics;
        debug_assert_eq!(matrix.len(), m * m);
        debug_assert_eq!(out.len(), self.num_dirs);
        let trace: f64 = (0..m).map(|i| matrix[i * m + i].re).sum();
        let eps = epsilon(trace, m);
        let diag = (m as f64 - 1.0) * trace;
        let mut q = [0.0; TILE];
        for (tile, chunk) in self.bin_data(b).chunks_exact(self.tile_len()).enumerate() {
            quad_tile(matrix, m, chunk, &mut q);
            let d0 = tile * TILE;
            let n = TILE.min(self.num_dirs - d0);
            for (o, &qt) in out[d0..d0 + n].iter_mut().zip(&q) {
                *o = 1.0 / (diag - 2.0 * qt).max(eps);
            }
        }
    }
}

/// `Re Σ_{i<j} conj(a_i)·Φ_ij·a_j` for the TILE directions of one tile.
#[inline]
fn quad_tile(matrix: &[Complex64], m: usize, tile: &[f64], q: &mut [f64; TILE]) {
    let lane = |mic: usize| -> (&[f64; TILE], &[f64; TILE]) {
        let v = &tile[mic * 2 * TILE..][..2 * TILE];
        (v[..TILE].try_into().unwrap(), v[TILE..].try_into().unwrap())
    };
    *q = [0.0; TILE];
    for i in 0..m {
        let mut sr = [0.0; TILE];
        let mut si = [0.0; TILE];
        for j in i + 1..m {
            let c = matrix[i * m + j];
            let (ar, ai) = lane(j);
            for t in 0..TILE {
                sr[t] = c.re.mul_add(ar[t], (-c.im).mul_add(ai[t], sr[t]));
                si[t] = c.re.mul_add(ai[t], c.im.mul_add(ar[t], si[t]));
            }
        }
        let (ar, ai) = lane(i);
        for t in 0..TILE {
            q[t] = ar[t].mul_add(sr[t], ai[t].mul_add(si[t], q[t]));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrpMap {
    pub frame_index: usize,
    pub values: Vec<f64>,
}

/// Sums the max-normalized narrowband DU maps of every bin. Bins whose CPSD
/// is identically zero contribute nothing.
pub fn broadband_srp(cpsd: &CpsdStack, table: &SteeringTable) -> Result<SrpMap> {
    if cpsd.num_mics() != table.num_mics() {
        return Err(Error::Config(format!(
            "CPSD has {} microphones, steering table {}",
            cpsd.num_mics(),
            table.num_mics()
        )));
    }
    if cpsd.bin_indices() != table.bins() {
        return Err(Error::Config(format!(
            "CPSD bins {:?} do not match steering table bins {:?}",
            cpsd.bin_indices(),
            table.bins()
        )));
    }
    let d = table.num_dirs();
    let per_bin: Vec<Option<Vec<f64>>> = (0..cpsd.num_bins())
        .into_par_iter()
        .map(|b| {
            let mat = cpsd.matrix(b);
            if mat.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                return None;
            }
            let mut g = vec![0.0; d];
            table.narrowband_powers(b, mat, &mut g);
            let peak = g.iter().copied().fold(0.0, f64::max);
            let inv = 1.0 / peak;
            g.iter_mut().for_each(|v| *v *= inv);
            Some(g)
        })
        .collect();
    let mut values = vec![0.0; d];
    for g in per_bin.into_iter().flatten() {
        for (v, x) in values.iter_mut().zip(g) {
            *v += x;
        }
    }
    Ok(SrpMap {
        frame_index: cpsd.frame_index,
        values,
    })
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub frame_index: usize,
    pub time_s: f64,
    pub direction: Direction,
    pub grid_index: usize,
    pub vad: bool,
}

pub fn argmax_doa(map: &SrpMap, grid: &DirectionGrid, time_s: f64, vad: bool) -> DoaEstimate {
    assert!(!map.values.is_empty(), "empty SRP map");
    assert_eq!(map.values.len(), grid.len(), "map and grid sizes differ");
    let grid_index = argmax_index(&map.values);
    DoaEstimate {
        frame_index: map.frame_index,
        time_s,
        direction: grid.directions()[grid_index],
        grid_index,
        vad,
    }
}

/// Grid plus precomputed steering table for one array and STFT setup.
#[derive(Debug, Clone)]
pub struct DuLocalizer {
    grid: DirectionGrid,
    table: SteeringTable,
}

impl DuLocalizer {
    pub fn new(
        geometry: &ArrayGeometry,
        grid: DirectionGrid,
        bins: Range<usize>,
        fft_size: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if geometry.kind() != grid.kind() {
            return Err(Error::Config(format!(
                "array kind {:?} does not match grid kind {:?}",
                geometry.kind(),
                grid.kind()
            )));
        }
        let table = SteeringTable::build(geometry, &grid, bins, fft_size, sample_rate_hz);
        Ok(Self { grid, table })
    }

    pub fn grid(&self) -> &DirectionGrid {
        &self.grid
    }

    pub fn table(&self) -> &SteeringTable {
        &self.table
    }

    pub fn srp(&self, cpsd: &CpsdStack) -> Result<SrpMap> {
        broadband_srp(cpsd, &self.table)
    }
}
