//! Brute-force oracles, random instance generators and invariant checks
//! shared by the integration suites and the acceptance harness.
//!
//! Oracles use only dense textbook arithmetic on plain `Vec`s so they share
//! no code with the library paths they check.

#![allow(dead_code)]

use std::f64::consts::PI;

use du_doa::angles::wrap_deg;
use du_doa::array::{steering_vector, ArrayGeometry, ArrayKind, Direction, DirectionGrid};
use du_doa::eval::{self, angular_error, ScoredPoint, Scoring};
use du_doa::frontend::{
    estimate_cpsd, stft, CpsdBlocker, CpsdStack, MultichannelBuffer, SpectralFrame, StftConfig,
    StreamingStft,
};
use du_doa::localizer::{argmax_index, broadband_srp, du_power, SteeringTable};
use du_doa::sim::{Trajectory, TrajectoryPoint};
use du_doa::tracker::{
    self, AzimuthRange, TrackMode, TrackState, Tracker, TrackerConfig,
};
use du_doa::vad::VadDecision;
use du_doa::DoaEstimate;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub const TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|got − want| ≤ tol · max(|want|, scale)`.
pub fn close(got: f64, want: f64, scale: f64, tol: f64, what: &str) -> Check {
    let bound = tol * want.abs().max(scale);
    if (got - want).abs() <= bound && got.is_finite() {
        Ok(())
    } else {
        Err(format!("{what}: got {got:e}, want {want:e} (bound {bound:e})"))
    }
}

pub fn close_c(got: Complex64, want: Complex64, scale: f64, tol: f64, what: &str) -> Check {
    let bound = tol * want.norm().max(scale);
    if (got - want).norm() <= bound {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want} (bound {bound:e})"))
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub fn cgauss(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(gauss(rng), gauss(rng))
}

pub fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller keeps the oracle side free of library sampling code.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

// ---------------------------------------------------------------- oracles

/// `X[k] = Σ_n x[n]·exp(−j2πkn/L)` by direct summation.
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let l = x.len();
    (0..l)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(n, &v)| {
                    let ang = -2.0 * PI * ((k * n) % l) as f64 / l as f64;
                    Complex64::new(v * ang.cos(), v * ang.sin())
                })
                .sum()
        })
        .collect()
}

/// Windowed DFT of each frame, restricted to `bins`; `[frame][bin][mic]`.
pub fn oracle_stft(
    channels: &[Vec<f64>],
    fft_size: usize,
    hop: usize,
    bins: std::ops::Range<usize>,
) -> Vec<Vec<Vec<Complex64>>> {
    let len = channels[0].len();
    let frames = if len < fft_size { 0 } else { (len - fft_size) / hop + 1 };
    let window: Vec<f64> = (0..fft_size)
        .map(|l| 0.5 - 0.5 * (2.0 * PI * l as f64 / fft_size as f64).cos())
        .collect();
    (0..frames)
        .map(|k| {
            let spectra: Vec<Vec<Complex64>> = channels
                .iter()
                .map(|c| {
                    let seg: Vec<f64> = (0..fft_size).map(|l| c[k * hop + l] * window[l]).collect();
                    naive_dft(&seg)
                })
                .collect();
            bins.clone()
                .map(|b| spectra.iter().map(|s| s[b]).collect())
                .collect()
        })
        .collect()
}

/// `(1/N)·Σ x·x^H` per bin from `[frame][bin][mic]` spectra; `[bin][row][col]`.
pub fn oracle_cpsd(frames: &[Vec<Vec<Complex64>>]) -> Vec<Vec<Vec<Complex64>>> {
    let n = frames.len() as f64;
    let nb = frames[0].len();
    let m = frames[0][0].len();
    (0..nb)
        .map(|b| {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            frames.iter().map(|f| f[b][i] * f[b][j].conj()).sum::<Complex64>() / n
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn oracle_steering(positions: &[[f64; 3]], c: f64, freq: f64, dir: Direction) -> Vec<Complex64> {
    let az = dir.azimuth_deg * PI / 180.0;
    let el = dir.elevation_deg * PI / 180.0;
    let u = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
    positions
        .iter()
        .map(|p| {
            let tau = -(p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / c;
            let ph = -2.0 * PI * freq * tau;
            Complex64::new(ph.cos(), ph.sin())
        })
        .collect()
}

/// `1 / max(ε, a^H·(tr[Φ]·I − Φ)·a)` with the unloaded matrix formed explicitly.
pub fn oracle_du_power(phi: &[Vec<Complex64>], a: &[Complex64]) -> f64 {
    let m = a.len();
    let tr: f64 = (0..m).map(|i| phi[i][i].re).sum();
    let mut q = Complex64::default();
    for i in 0..m {
        for j in 0..m {
            let u = if i == j { Complex64::new(tr, 0.0) - phi[i][j] } else { -phi[i][j] };
            q += a[i].conj() * u * a[j];
        }
    }
    let eps = 1e-12 * (tr * m as f64).max(1.0);
    1.0 / q.re.max(eps)
}

pub fn oracle_broadband(phis: &[Vec<Vec<Complex64>>], steer: &[Vec<Vec<Complex64>>]) -> Vec<f64> {
    // steer: [bin][dir][mic]
    let d = steer[0].len();
    let mut out = vec![0.0; d];
    for (phi, s) in phis.iter().zip(steer) {
        if phi.iter().flatten().all(|z| *z == Complex64::default()) {
            continue;
        }
        let g: Vec<f64> = s.iter().map(|a| oracle_du_power(phi, a)).collect();
        let peak = g.iter().copied().fold(0.0, f64::max);
        for (o, v) in out.iter_mut().zip(g) {
            *o += v / peak;
        }
    }
    out
}

pub type Mat = Vec<Vec<f64>>;

pub fn mat_zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn mat_eye(n: usize) -> Mat {
    let mut m = mat_zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = mat_zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

pub fn mat_t(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn mat_add(a: &Mat, b: &Mat, sb: f64) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + sb * v).collect())
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn mat_inv(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().zip(mat_eye(n)).map(|(r, e)| [r.clone(), e].concat()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, p) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn vec_col(v: &[f64]) -> Mat {
    v.iter().map(|&x| vec![x]).collect()
}

fn dm(a: &DMatrix<f64>) -> Mat {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

fn mats_close(got: &Mat, want: &Mat, tol: f64, what: &str) -> Check {
    let scale = max_abs(want.iter().flatten().copied());
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        for (j, (&x, &y)) in g.iter().zip(w).enumerate() {
            close(x, y, scale, tol, &format!("{what}[{i},{j}]"))?;
        }
    }
    Ok(())
}

/// Dense constant-velocity model matrices `(A, B, Q, C, R)` built from scratch.
pub fn oracle_kf_model(cfg: &TrackerConfig) -> (Mat, Mat, Mat, Mat, Mat) {
    let a = cfg.mode.axes();
    let n = 2 * a;
    let mut am = mat_eye(n);
    let mut bm = mat_zeros(n, a);
    let mut cm = mat_zeros(a, n);
    for i in 0..a {
        am[i][a + i] = cfg.dt;
        bm[i][i] = 0.5 * cfg.dt * cfg.dt;
        bm[a + i][i] = cfg.dt;
        cm[i][i] = 1.0;
    }
    let q: Mat = mat_eye(a).into_iter().map(|r| r.into_iter().map(|v| v * cfg.sigma_q2).collect()).collect();
    let r: Mat = mat_eye(a).into_iter().map(|r| r.into_iter().map(|v| v * cfg.sigma_r2).collect()).collect();
    (am, bm, q, cm, r)
}

// ------------------------------------------------------------- generators

pub fn random_sphere_geometry(rng: &mut impl Rng, m: usize) -> ArrayGeometry {
    let positions = (0..m)
        .map(|_| [0.0, 0.0, 0.0].map(|_: f64| rng.random_range(-0.1..0.1)))
        .collect();
    ArrayGeometry::new(positions, 343.0, ArrayKind::FullSphere).unwrap()
}

pub fn random_line_geometry(rng: &mut impl Rng, m: usize) -> ArrayGeometry {
    let mut xs: Vec<f64> = (0..m).map(|i| i as f64 * 0.03 + rng.random_range(0.0..0.02)).collect();
    xs[0] -= 0.01;
    ArrayGeometry::new(xs.into_iter().map(|x| [x, 0.0, 0.0]).collect(), 343.0, ArrayKind::LinearAzimuthOnly)
        .unwrap()
}

pub fn random_direction(rng: &mut impl Rng) -> Direction {
    Direction::new(rng.random_range(-180.0..180.0), rng.random_range(-90.0..=90.0))
}

/// Consecutive spectral frames with random content.
pub fn random_frames(rng: &mut impl Rng, count: usize, m: usize, first_bin: usize, nb: usize) -> Vec<SpectralFrame> {
    let start = rng.random_range(0..1000);
    (0..count)
        .map(|k| {
            let spectra = (0..nb * m).map(|_| cgauss(rng)).collect();
            SpectralFrame::new(start + k, m, first_bin, spectra)
        })
        .collect()
}

fn frame_spectra(f: &SpectralFrame) -> Vec<Vec<Complex64>> {
    (0..f.num_bins()).map(|b| f.channel_vector(b).to_vec()).collect()
}

/// Random full-rank CPSD stack built from `m + 2` random snapshots per bin.
pub fn random_cpsd(rng: &mut impl Rng, m: usize, first_bin: usize, nb: usize) -> CpsdStack {
    let frames = random_frames(rng, m + 2, m, first_bin, nb);
    estimate_cpsd(&frames, m + 2).unwrap()
}

fn stack_dense(s: &CpsdStack) -> Vec<Vec<Vec<Complex64>>> {
    let m = s.num_mics();
    (0..s.num_bins())
        .map(|b| {
            let mat = s.matrix(b);
            (0..m).map(|i| mat[i * m..(i + 1) * m].to_vec()).collect()
        })
        .collect()
}

pub fn random_tracker_config(rng: &mut impl Rng, mode: TrackMode) -> TrackerConfig {
    TrackerConfig {
        dt: rng.random_range(0.05..0.5),
        sigma_q2: 10f64.powf(rng.random_range(-4.0..-1.0)),
        sigma_r2: 10f64.powf(rng.random_range(-5.0..-1.0)),
        mode,
        azimuth_range: AzimuthRange::Circular,
    }
}

fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn meas(dir: Direction) -> DoaEstimate {
    DoaEstimate {
        frame_index: 0,
        time_s: 0.0,
        direction: dir,
        grid_index: 0,
        vad: true,
    }
}

pub fn vad(active: bool) -> VadDecision {
    VadDecision {
        frame_index: 0,
        active,
        band_power: 0.0,
    }
}

// --------------------------------------------------- equation fidelity

/// Batch and streaming STFT against windowed naive DFTs.
pub fn fidelity_stft(rng: &mut impl Rng) -> Check {
    let m = rng.random_range(1..=4);
    let fft_size = [8, 16, 32, 64][rng.random_range(0..4)];
    let hop = rng.random_range(1..=fft_size);
    let fs = 1000.0;
    let lo = rng.random_range(0.0..250.0);
    let hi = rng.random_range(260.0..=500.0);
    let cfg = StftConfig {
        fft_size,
        hop,
        band_hz: [lo, hi],
    };
    let len = fft_size + hop * rng.random_range(0..6) + rng.random_range(0..hop);
    let channels: Vec<Vec<f64>> = (0..m).map(|_| (0..len).map(|_| gauss(rng)).collect()).collect();
    let want = oracle_stft(&channels, fft_size, hop, cfg.bins(fs));
    let buffer = MultichannelBuffer::new(channels.clone(), fs).map_err(|e| e.to_string())?;
    let batch = stft(&buffer, &cfg).map_err(|e| e.to_string())?;

    let mut streaming = StreamingStft::new(&cfg, fs, m).map_err(|e| e.to_string())?;
    let mut streamed = Vec::new();
    let mut pos = 0;
    while pos < len {
        let step = rng.random_range(1..=2 * fft_size).min(len - pos);
        let chunk: Vec<&[f64]> = channels.iter().map(|c| &c[pos..pos + step]).collect();
        streamed.extend(streaming.push_channels(&chunk));
        pos += step;
    }
    if batch.len() != want.len() || streamed.len() != want.len() {
        return Err(format!(
            "frame count: batch {}, streaming {}, oracle {}",
            batch.len(),
            streamed.len(),
            want.len()
        ));
    }
    let scale = max_abs(want.iter().flatten().flatten().map(|z| z.norm()));
    for (k, w) in want.iter().enumerate() {
        for got in [&batch[k], &streamed[k]] {
            if got.frame_index != k {
                return Err(format!("frame index {} != {k}", got.frame_index));
            }
            for (b, wb) in w.iter().enumerate() {
                for (mic, &z) in wb.iter().enumerate() {
                    close_c(got.get(mic, b), z, scale, TOL, &format!("STFT frame {k} bin {b} mic {mic}"))?;
                }
            }
        }
    }
    Ok(())
}

/// CPSD estimation and block grouping against direct outer-product sums.
pub fn fidelity_cpsd(rng: &mut impl Rng) -> Check {
    let m = rng.random_range(1..=4);
    let nb = rng.random_range(1..=5);
    let n = rng.random_range(1..=8);
    let count = n + rng.random_range(0..3);
    let frames = random_frames(rng, count, m, 3, nb);
    let tail = &frames[frames.len() - n..];
    let want = oracle_cpsd(&tail.iter().map(frame_spectra).collect::<Vec<_>>());
    let got = estimate_cpsd(&frames, n).map_err(|e| e.to_string())?;
    if got.frame_index != tail[n - 1].frame_index {
        return Err("CPSD frame index is not the newest frame".into());
    }
    let scale = max_abs(want.iter().flatten().flatten().map(|z| z.norm()));
    for (b, wb) in want.iter().enumerate() {
        let mat = got.matrix(b);
        for i in 0..m {
            for j in 0..m {
                close_c(mat[i * m + j], wb[i][j], scale, TOL, &format!("CPSD bin {b} ({i},{j})"))?;
            }
        }
    }
    // The blocker must produce the same matrices for each complete block.
    let mut blocker = CpsdBlocker::new(n);
    let mut blocks = Vec::new();
    for f in frames.iter().cloned() {
        if let Some(s) = blocker.push(f).map_err(|e| e.to_string())? {
            blocks.push(s);
        }
    }
    for (k, s) in blocks.iter().enumerate() {
        let want = oracle_cpsd(&frames[k * n..(k + 1) * n].iter().map(frame_spectra).collect::<Vec<_>>());
        for (b, wb) in want.iter().enumerate() {
            let mat = s.matrix(b);
            for i in 0..m {
                for j in 0..m {
                    close_c(mat[i * m + j], wb[i][j], scale, TOL, &format!("block {k} bin {b} ({i},{j})"))?;
                }
            }
        }
    }
    if blocks.len() != frames.len() / n {
        return Err(format!("{} blocks from {} frames of {n}", blocks.len(), frames.len()));
    }
    Ok(())
}

/// Steering table, narrowband DU power and the broadband map against dense
/// quadratic forms.
pub fn fidelity_du(rng: &mut impl Rng) -> Check {
    let m = rng.random_range(2..=4);
    let geo = random_sphere_geometry(rng, m);
    let grid = DirectionGrid::build(ArrayKind::FullSphere, [30.0, 45.0, 60.0][rng.random_range(0..3)])
        .map_err(|e| e.to_string())?;
    let (fft_size, fs) = (64, 16_000.0);
    let first = rng.random_range(1..20);
    let nb = rng.random_range(1..=6);
    let bins = first..first + nb;
    let table = SteeringTable::build(&geo, &grid, bins.clone(), fft_size, fs);
    let cpsd = random_cpsd(rng, m, first, nb);
    let phis = stack_dense(&cpsd);

    let mut steer = Vec::new();
    for (b, bin) in bins.clone().enumerate() {
        let freq = bin as f64 * fs / fft_size as f64;
        let dirs: Vec<Vec<Complex64>> = grid
            .directions()
            .iter()
            .map(|&d| oracle_steering(geo.positions(), geo.speed_of_sound(), freq, d))
            .collect();
        let mut got = vec![0.0; grid.len()];
        table.narrowband_powers(b, cpsd.matrix(b), &mut got);
        for (k, a) in dirs.iter().enumerate() {
            for (mic, (x, y)) in table.vector(b, k).iter().zip(a).enumerate() {
                close_c(*x, *y, 1.0, TOL, &format!("steering bin {bin} dir {k} mic {mic}"))?;
            }
            let want = oracle_du_power(&phis[b], a);
            close(got[k], want, 0.0, TOL, &format!("DU power bin {bin} dir {k}"))?;
            close(du_power(cpsd.matrix(b), a), want, 0.0, TOL, &format!("reference DU power bin {bin} dir {k}"))?;
        }
        steer.push(dirs);
    }
    let want = oracle_broadband(&phis, &steer);
    let got = broadband_srp(&cpsd, &table).map_err(|e| e.to_string())?;
    for (k, (g, w)) in got.values.iter().zip(&want).enumerate() {
        close(*g, *w, 0.0, TOL, &format!("broadband dir {k}"))?;
    }
    Ok(())
}

/// Predict, gain, state update and covariance update against dense matrices.
pub fn fidelity_kf(rng: &mut impl Rng) -> Check {
    let mode = if rng.random() { TrackMode::AzimuthOnly } else { TrackMode::AzimuthElevation };
    let cfg = random_tracker_config(rng, mode);
    let a = mode.axes();
    let n = 2 * a;
    let mut y = DVector::zeros(n);
    y[0] = rng.random_range(-100.0..100.0);
    if a == 2 {
        y[1] = rng.random_range(-40.0..40.0);
    }
    for i in a..n {
        y[i] = rng.random_range(-5.0..5.0);
    }
    let state = TrackState {
        y: y.clone(),
        p: random_spd(rng, n),
        initialized: true,
        last_vad: true,
    };
    let z = Direction::new(
        y[0] + rng.random_range(-20.0..20.0),
        if a == 2 { y[1] + rng.random_range(-20.0..20.0) } else { 0.0 },
    );

    let (am, bm, q, cm, r) = oracle_kf_model(&cfg);
    let y0 = vec_col(y.as_slice());
    let p0 = dm(&state.p);
    // Predict.
    let yp = mat_mul(&am, &y0);
    let pp = mat_add(&mat_mul(&mat_mul(&am, &p0), &mat_t(&am)), &mat_mul(&mat_mul(&bm, &q), &mat_t(&bm)), 1.0);
    let pred = tracker::predict(&state, &cfg).map_err(|e| e.to_string())?;
    mats_close(&vec_col(pred.y.as_slice()), &yp, TOL, "predicted state")?;
    mats_close(&dm(&pred.p), &pp, TOL, "predicted covariance")?;
    // Gain.
    let s = mat_add(&mat_mul(&mat_mul(&cm, &pp), &mat_t(&cm)), &r, 1.0);
    let k = mat_mul(&mat_mul(&pp, &mat_t(&cm)), &mat_inv(&s));
    let gain = tracker::kalman_gain(&pred, &cfg).map_err(|e| e.to_string())?;
    mats_close(&dm(&gain), &k, TOL, "Kalman gain")?;
    // State and covariance update.
    let zv = if a == 2 { vec![z.azimuth_deg, z.elevation_deg] } else { vec![z.azimuth_deg] };
    let innov = mat_add(&vec_col(&zv), &mat_mul(&cm, &yp), -1.0);
    let yc = mat_add(&yp, &mat_mul(&k, &innov), 1.0);
    let pc = mat_mul(&mat_add(&mat_eye(n), &mat_mul(&k, &cm), -1.0), &pp);
    let corr = tracker::correct(&pred, &meas(z), &cfg).map_err(|e| e.to_string())?;
    mats_close(&vec_col(corr.y.as_slice()), &yc, TOL, "corrected state")?;
    mats_close(&dm(&corr.p), &pc, TOL, "corrected covariance")?;
    Ok(())
}

pub type Suite = Vec<(&'static str, fn(&mut ChaCha8Rng) -> Check)>;

pub fn fidelity_checks() -> Suite {
    vec![
        ("STFT vs naive DFT", fidelity_stft),
        ("CPSD vs outer-product sum", fidelity_cpsd),
        ("DU power vs dense quadratic form", fidelity_du),
        ("Kalman equations vs dense matrices", fidelity_kf),
    ]
}

// ------------------------------------------------------------- invariants

pub fn inv_steering_unit_modulus(geo: &ArrayGeometry, freq: f64, dir: Direction) -> Check {
    for (i, z) in steering_vector(geo, freq, dir).entries().iter().enumerate() {
        close(z.norm(), 1.0, 1.0, 1e-12, &format!("|a_{i}|"))?;
    }
    Ok(())
}

pub fn inv_steering_conjugate(geo: &ArrayGeometry, freq: f64, dir: Direction) -> Check {
    let pos = steering_vector(geo, freq, dir);
    let neg = steering_vector(geo, -freq, dir);
    for (i, (p, n)) in pos.entries().iter().zip(neg.entries()).enumerate() {
        close_c(*n, p.conj(), 1.0, 1e-12, &format!("a_{i}(-f)"))?;
    }
    Ok(())
}

/// Translating the array multiplies every steering entry by one common phase,
/// which the DU quadratic form cannot see.
pub fn inv_translation(geo: &ArrayGeometry, offset: [f64; 3], freq: f64, dir: Direction, cpsd: &CpsdStack) -> Check {
    let moved = geo.translated(offset);
    let a = steering_vector(geo, freq, dir);
    let b = steering_vector(&moved, freq, dir);
    let phase = b.entries()[0] / a.entries()[0];
    for (x, y) in a.entries().iter().zip(b.entries()) {
        close_c(*y, x * phase, 1.0, 1e-9, "common translation phase")?;
    }
    let mat = cpsd.matrix(0);
    close(du_power(mat, b.entries()), du_power(mat, a.entries()), 0.0, TOL, "DU power after translation")
}

pub fn inv_common_phase(cpsd: &CpsdStack, a: &[Complex64], theta: f64) -> Check {
    let rot = Complex64::from_polar(1.0, theta);
    let b: Vec<Complex64> = a.iter().map(|z| z * rot).collect();
    let mat = cpsd.matrix(0);
    close(du_power(mat, &b), du_power(mat, a), 0.0, TOL, "DU power under common phase")
}

pub fn inv_cpsd_hermitian_psd(cpsd: &CpsdStack, probes: &[Vec<Complex64>]) -> Check {
    let m = cpsd.num_mics();
    for b in 0..cpsd.num_bins() {
        let mat = cpsd.matrix(b);
        let tr = cpsd.trace(b);
        for i in 0..m {
            if mat[i * m + i].im != 0.0 || mat[i * m + i].re < 0.0 {
                return Err(format!("bin {b}: diagonal {} not real non-negative", mat[i * m + i]));
            }
            for j in 0..m {
                if mat[i * m + j] != mat[j * m + i].conj() {
                    return Err(format!("bin {b}: ({i},{j}) not Hermitian"));
                }
            }
        }
        for x in probes {
            let mut q = Complex64::default();
            for i in 0..m {
                for j in 0..m {
                    q += x[i].conj() * mat[i * m + j] * x[j];
                }
            }
            let norm2: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            if q.re < -1e-12 * tr * norm2 {
                return Err(format!("bin {b}: x^H Φ x = {} < 0", q.re));
            }
        }
        let dense = DMatrix::from_fn(m, m, |i, j| mat[i * m + j]) + DMatrix::identity(m, m) * Complex64::new(1e-12 * tr.max(1e-300), 0.0);
        if dense.cholesky().is_none() {
            return Err(format!("bin {b}: Cholesky of Φ + δI failed"));
        }
    }
    Ok(())
}

pub fn inv_trace_identity(frames: &[SpectralFrame]) -> Check {
    let n = frames.len();
    let cpsd = estimate_cpsd(frames, n).map_err(|e| e.to_string())?;
    for b in 0..cpsd.num_bins() {
        let want: f64 = frames
            .iter()
            .map(|f| f.channel_vector(b).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        close(cpsd.trace(b), want, 0.0, 1e-12, &format!("trace bin {b}"))?;
    }
    Ok(())
}

pub fn inv_stft_linearity(x: &[Vec<f64>], y: &[Vec<f64>], alpha: f64, beta: f64, cfg: &StftConfig) -> Check {
    let fs = 1000.0;
    let mix: Vec<Vec<f64>> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| alpha * u + beta * v).collect())
        .collect();
    let run = |ch: &[Vec<f64>]| stft(&MultichannelBuffer::new(ch.to_vec(), fs).unwrap(), cfg).unwrap();
    let (fx, fy, fm) = (run(x), run(y), run(&mix));
    let scale = fx
        .iter()
        .chain(&fy)
        .flat_map(|f| (0..f.num_bins()).flat_map(move |b| f.channel_vector(b).iter().map(|z| z.norm())))
        .fold(0.0, f64::max)
        * (alpha.abs() + beta.abs()).max(1.0);
    for ((a, b), c) in fx.iter().zip(&fy).zip(&fm) {
        for bin in 0..a.num_bins() {
            for mic in 0..a.num_mics() {
                let want = alpha * a.get(mic, bin) + beta * b.get(mic, bin);
                close_c(c.get(mic, bin), want, scale, 1e-12, "STFT linearity")?;
            }
        }
    }
    Ok(())
}

pub fn inv_du_scale(cpsd: &CpsdStack, table: &SteeringTable, c: f64) -> Check {
    let base = broadband_srp(cpsd, table).map_err(|e| e.to_string())?;
    let scaled = broadband_srp(&cpsd.scaled(c), table).map_err(|e| e.to_string())?;
    for (k, (s, b)) in scaled.values.iter().zip(&base.values).enumerate() {
        close(*s, *b, 0.0, TOL, &format!("scaled map dir {k}"))?;
    }
    // Argmax must agree unless the peak is tied to within rounding.
    let peak = argmax_index(&base.values);
    let top = base.values[peak];
    let runner_up = base
        .values
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != peak)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if top - runner_up > 1e-6 * top && argmax_index(&scaled.values) != peak {
        return Err("argmax moved under scaling".into());
    }
    Ok(())
}

fn covariance_ok(p: &DMatrix<f64>, what: &str) -> Check {
    if p != &p.transpose() {
        return Err(format!("{what}: covariance not symmetric"));
    }
    let scale = p.amax();
    let min = p.clone().symmetric_eigen().eigenvalues.min();
    if min < -1e-12 * scale {
        return Err(format!("{what}: covariance eigenvalue {min:e} < 0"));
    }
    Ok(())
}

/// Runs a tracker over a VAD/measurement sequence, checking P after every step.
pub fn inv_kf_covariance(cfg: TrackerConfig, steps: &[(bool, Direction)]) -> Check {
    let mut t = Tracker::new(cfg).map_err(|e| e.to_string())?;
    for (k, (active, dir)) in steps.iter().enumerate() {
        t.step(&vad(*active), Some(&meas(*dir)), k as f64 * cfg.dt).map_err(|e| e.to_string())?;
        if t.state().initialized {
            covariance_ok(&t.state().p, &format!("step {k}"))?;
        }
    }
    Ok(())
}

pub fn inv_wrap(x: f64, k: i32) -> Check {
    let w = wrap_deg(x);
    if !(w > -180.0 && w <= 180.0) {
        return Err(format!("wrap({x}) = {w} outside (-180, 180]"));
    }
    if wrap_deg(w) != w {
        return Err(format!("wrap not idempotent at {x}"));
    }
    let shifted = wrap_deg(x + 360.0 * k as f64);
    let d = wrap_deg(shifted - w).abs();
    if d > 1e-9 * (1.0 + x.abs() + 360.0 * k.unsigned_abs() as f64) {
        return Err(format!("wrap({x} + 360·{k}) = {shifted}, wrap({x}) = {w}"));
    }
    let e1 = angular_error(x, 0.3 * x + 17.0, true);
    let e2 = angular_error(0.3 * x + 17.0, x, true);
    if (e1 - e2).abs() > 1e-9 || !(0.0..=180.0).contains(&e1) {
        return Err(format!("circular error asymmetric or out of range: {e1} vs {e2}"));
    }
    Ok(())
}

/// With diagonal noise the axes decouple, so an azimuth-only tracker must
/// reproduce the azimuth half of a two-angle tracker.
pub fn inv_azimuth_only_matches(cfg: TrackerConfig, steps: &[(bool, Direction)]) -> Check {
    let one = TrackerConfig { mode: TrackMode::AzimuthOnly, ..cfg };
    let two = TrackerConfig { mode: TrackMode::AzimuthElevation, ..cfg };
    let mut t1 = Tracker::new(one).map_err(|e| e.to_string())?;
    let mut t2 = Tracker::new(two).map_err(|e| e.to_string())?;
    for (k, (active, dir)) in steps.iter().enumerate() {
        let time = k as f64 * cfg.dt;
        let e1 = t1.step(&vad(*active), Some(&meas(Direction::azimuth(dir.azimuth_deg))), time).map_err(|e| e.to_string())?;
        let e2 = t2.step(&vad(*active), Some(&meas(*dir)), time).map_err(|e| e.to_string())?;
        if e1.source != e2.source {
            return Err(format!("step {k}: sources differ"));
        }
        if let (Some(a), Some(b)) = (e1.direction, e2.direction) {
            close(a.azimuth_deg, b.azimuth_deg, 1.0, TOL, &format!("step {k} azimuth"))?;
        }
        close(t1.state().p[(0, 0)], t2.state().p[(0, 0)], 0.0, TOL, &format!("step {k} P(az)"))?;
        close(t1.state().p[(0, 1)], t2.state().p[(0, 2)], 0.0, TOL, &format!("step {k} P(az, vel)"))?;
    }
    Ok(())
}

fn rotate_points(points: &[ScoredPoint], offset: f64) -> Vec<ScoredPoint> {
    points
        .iter()
        .map(|p| ScoredPoint {
            direction: p.direction.map(|d| Direction::new(wrap_deg(d.azimuth_deg + offset), d.elevation_deg)),
            ..*p
        })
        .collect()
}

pub fn random_truth(rng: &mut impl Rng, span: f64) -> Trajectory {
    let knots = rng.random_range(2..6);
    let pts = (0..knots)
        .map(|i| {
            TrajectoryPoint::new(
                span * i as f64 / (knots - 1) as f64,
                rng.random_range(-180.0..180.0),
                rng.random_range(-60.0..60.0),
            )
        })
        .collect();
    Trajectory::new(pts).unwrap()
}

pub fn random_points(rng: &mut impl Rng, truth: &Trajectory, n: usize) -> Vec<ScoredPoint> {
    let (a, b) = truth.span();
    (0..n)
        .map(|_| {
            let t = rng.random_range(a..=b);
            let gt = truth.ground_truth_at(t).unwrap();
            ScoredPoint {
                time_s: t,
                direction: Some(Direction::new(
                    gt.azimuth_deg + rng.random_range(-30.0..30.0),
                    gt.elevation_deg + rng.random_range(-10.0..10.0),
                )),
                active: rng.random_bool(0.8),
            }
        })
        .collect()
}

pub fn inv_rmse_rotation(points: &[ScoredPoint], truth: &Trajectory, offset: f64) -> Check {
    let rotated_truth = Trajectory::new(
        truth
            .points()
            .iter()
            .map(|p| TrajectoryPoint::new(p.time_s, wrap_deg(p.azimuth_deg + offset), p.elevation_deg))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    for scoring in [Scoring::ActiveOnly, Scoring::AllEmitted] {
        let a = eval::rmse(points, truth, scoring, TrackMode::AzimuthElevation);
        let b = eval::rmse(&rotate_points(points, offset), &rotated_truth, scoring, TrackMode::AzimuthElevation);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                close(b.rmse_azimuth_deg, a.rmse_azimuth_deg, 1.0, 1e-9, "rotated azimuth RMSE")?;
                close(b.rmse_elevation_deg.unwrap(), a.rmse_elevation_deg.unwrap(), 1.0, 1e-9, "rotated elevation RMSE")?;
            }
            (Err(_), Err(_)) => {}
            _ => return Err("rotation changed scorability".into()),
        }
    }
    Ok(())
}

/// Appending inactive blocks leaves the active-only score unchanged.
pub fn inv_rmse_silence_padding(points: &[ScoredPoint], truth: &Trajectory, pad: usize) -> Check {
    let before = eval::rmse(points, truth, Scoring::ActiveOnly, TrackMode::AzimuthOnly);
    let mut padded = points.to_vec();
    let t = truth.span().1;
    for _ in 0..pad {
        padded.push(ScoredPoint {
            time_s: t,
            direction: Some(Direction::azimuth(123.0)),
            active: false,
        });
    }
    let after = eval::rmse(&padded, truth, Scoring::ActiveOnly, TrackMode::AzimuthOnly);
    match (before, after) {
        (Ok(a), Ok(b)) if a.rmse_azimuth_deg == b.rmse_azimuth_deg && a.n_scored_blocks == b.n_scored_blocks => Ok(()),
        (Err(_), Err(_)) => Ok(()),
        (a, b) => Err(format!("padding changed the score: {a:?} vs {b:?}")),
    }
}

/// Adding a block whose error exceeds the current RMSE strictly increases it.
pub fn inv_rmse_monotone(points: &[ScoredPoint], truth: &Trajectory, extra: f64) -> Check {
    let Ok(before) = eval::rmse(points, truth, Scoring::AllEmitted, TrackMode::AzimuthOnly) else {
        return Ok(());
    };
    let err = (before.rmse_azimuth_deg + extra).min(179.0);
    if err <= before.rmse_azimuth_deg {
        return Ok(());
    }
    let t = truth.span().0;
    let gt = truth.ground_truth_at(t).unwrap();
    let mut more = points.to_vec();
    more.push(ScoredPoint {
        time_s: t,
        direction: Some(Direction::azimuth(wrap_deg(gt.azimuth_deg + err))),
        active: true,
    });
    let after = eval::rmse(&more, truth, Scoring::AllEmitted, TrackMode::AzimuthOnly).map_err(|e| e.to_string())?;
    if after.rmse_azimuth_deg > before.rmse_azimuth_deg {
        Ok(())
    } else {
        Err(format!("RMSE {} did not grow past {}", after.rmse_azimuth_deg, before.rmse_azimuth_deg))
    }
}

// Random drivers for each invariant, used by the acceptance harness.

fn tracker_steps(rng: &mut impl Rng, n: usize) -> Vec<(bool, Direction)> {
    let mut az = rng.random_range(-180.0..180.0);
    let mut el: f64 = rng.random_range(-50.0..50.0);
    (0..n)
        .map(|_| {
            az = wrap_deg(az + rng.random_range(-8.0..8.0));
            el = (el + rng.random_range(-3.0..3.0)).clamp(-60.0, 60.0);
            (rng.random_bool(0.8), Direction::new(az, el))
        })
        .collect()
}

pub fn invariant_checks() -> Suite {
    vec![
        ("steering unit modulus", |r| {
            let m = r.random_range(2..=8);
            let geo = random_sphere_geometry(r, m);
            inv_steering_unit_modulus(&geo, r.random_range(0.0..24_000.0), random_direction(r))
        }),
        ("steering conjugate symmetry", |r| {
            let m = r.random_range(2..=8);
            let geo = random_sphere_geometry(r, m);
            inv_steering_conjugate(&geo, r.random_range(0.0..24_000.0), random_direction(r))
        }),
        ("DU power translation invariance", |r| {
            let m = r.random_range(2..=6);
            let geo = if r.random() { random_sphere_geometry(r, m) } else { random_line_geometry(r, m) };
            let off = [0.0; 3].map(|_: f64| r.random_range(-1.0..1.0));
            let cpsd = random_cpsd(r, m, 5, 1);
            let dir = if geo.kind() == ArrayKind::FullSphere { random_direction(r) } else { Direction::azimuth(r.random_range(0.0..=180.0)) };
            inv_translation(&geo, off, r.random_range(50.0..8000.0), dir, &cpsd)
        }),
        ("DU power common-phase immunity", |r| {
            let m = r.random_range(2..=6);
            let cpsd = random_cpsd(r, m, 5, 1);
            let a: Vec<Complex64> = (0..m).map(|_| Complex64::from_polar(1.0, r.random_range(-PI..PI))).collect();
            inv_common_phase(&cpsd, &a, r.random_range(-PI..PI))
        }),
        ("CPSD Hermitian and PSD", |r| {
            let m = r.random_range(1..=6);
            let n = r.random_range(1..=10);
            let frames = random_frames(r, n, m, 2, 3);
            let cpsd = estimate_cpsd(&frames, n).map_err(|e| e.to_string())?;
            let probes: Vec<Vec<Complex64>> = (0..8).map(|_| (0..m).map(|_| cgauss(r)).collect()).collect();
            inv_cpsd_hermitian_psd(&cpsd, &probes)
        }),
        ("CPSD trace identity", |r| {
            let (m, n) = (r.random_range(1..=6), r.random_range(1..=10));
            inv_trace_identity(&random_frames(r, n, m, 0, 4))
        }),
        ("STFT linearity", |r| {
            let m = r.random_range(1..=3);
            let fft_size = [8, 16, 32, 64][r.random_range(0..4)];
            let cfg = StftConfig { fft_size, hop: r.random_range(1..=fft_size), band_hz: [0.0, 500.0] };
            let len = fft_size * 3;
            let mut sig = || -> Vec<Vec<f64>> { (0..m).map(|_| (0..len).map(|_| gauss(&mut *r)).collect()).collect() };
            let (x, y) = (sig(), sig());
            inv_stft_linearity(&x, &y, r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), &cfg)
        }),
        ("DU map scale invariance", |r| {
            let m = r.random_range(2..=5);
            let geo = random_sphere_geometry(r, m);
            let grid = DirectionGrid::build(ArrayKind::FullSphere, 30.0).unwrap();
            let nb = r.random_range(1..=4);
            let table = SteeringTable::build(&geo, &grid, 3..3 + nb, 64, 16_000.0);
            let cpsd = random_cpsd(r, m, 3, nb);
            inv_du_scale(&cpsd, &table, 10f64.powf(r.random_range(-6.0..6.0)))
        }),
        ("KF covariance symmetric PSD", |r| {
            let mode = if r.random() { TrackMode::AzimuthOnly } else { TrackMode::AzimuthElevation };
            let cfg = random_tracker_config(r, mode);
            let n = r.random_range(1..40);
            inv_kf_covariance(cfg, &tracker_steps(r, n))
        }),
        ("angle wrap consistency", |r| inv_wrap(r.random_range(-5000.0..5000.0), r.random_range(-20..=20))),
        ("azimuth-only tracker matches two-angle tracker", |r| {
            let cfg = random_tracker_config(r, TrackMode::AzimuthElevation);
            let n = r.random_range(1..40);
            inv_azimuth_only_matches(cfg, &tracker_steps(r, n))
        }),
        ("RMSE rotation invariance", |r| {
            let truth = random_truth(r, 10.0);
            let n = r.random_range(1..30);
            let pts = random_points(r, &truth, n);
            inv_rmse_rotation(&pts, &truth, r.random_range(-360.0..360.0))
        }),
        ("RMSE ignores silence padding", |r| {
            let truth = random_truth(r, 10.0);
            let n = r.random_range(1..30);
            let pts = random_points(r, &truth, n);
            inv_rmse_silence_padding(&pts, &truth, r.random_range(1..10))
        }),
        ("RMSE monotonicity", |r| {
            let truth = random_truth(r, 10.0);
            let n = r.random_range(1..30);
            let pts = random_points(r, &truth, n);
            inv_rmse_monotone(&pts, &truth, r.random_range(0.01..50.0))
        }),
    ]
}

/// Runs each check on `cases` seeded instances; returns the first failure.
pub fn run_suite(suite: &Suite, seed: u64, cases: usize) -> Vec<(&'static str, Check)> {
    suite
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut r = rng(seed.wrapping_add(i as u64 * 0x9e37_79b9));
            let result = (0..cases).try_for_each(|case| check(&mut r).map_err(|e| format!("case {case}: {e}")));
            (*name, result)
        })
        .collect()
}
