//! Constant-velocity Kalman smoothing of the raw DOA stream.
//!
//! State ordering is angles first, then angular velocities: `[θ, φ, v_θ, v_φ]`
//! for azimuth-elevation tracking and `[θ, v_θ]` for azimuth-only tracking.
//! The filter is (re)initialized at every VAD rising edge and coasts on
//! predictions while the source is silent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angles::wrap_deg;
use crate::array::{ArrayKind, Direction};
use crate::error::{Error, Result};
use crate::localizer::DoaEstimate;
use crate::vad::VadDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackMode {
    AzimuthOnly,
    AzimuthElevation,
}

impl TrackMode {
    pub fn for_array(kind: ArrayKind) -> Self {
        match kind {
            ArrayKind::LinearAzimuthOnly => TrackMode::AzimuthOnly,
            ArrayKind::FullSphere => TrackMode::AzimuthElevation,
        }
    }

    /// Number of tracked angles.
    pub fn axes(self) -> usize {
        match self {
            TrackMode::AzimuthOnly => 1,
            TrackMode::AzimuthElevation => 2,
        }
    }
}

/// How the azimuth state is kept inside the grid's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AzimuthRange {
    /// Wrapped to (-180, 180].
    Circular,
    /// Clamped to [0, 180] (line arrays).
    HalfPlane,
}

impl AzimuthRange {
    pub fn for_array(kind: ArrayKind) -> Self {
        match kind {
            ArrayKind::LinearAzimuthOnly => AzimuthRange::HalfPlane,
            ArrayKind::FullSphere => AzimuthRange::Circular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub dt: f64,
    pub sigma_q2: f64,
    pub sigma_r2: f64,
    pub mode: TrackMode,
    pub azimuth_range: AzimuthRange,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dt: 0.2667,
            sigma_q2: 1e-3,
            sigma_r2: 1e-4,
            mode: TrackMode::AzimuthElevation,
            azimuth_range: AzimuthRange::Circular,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.dt) || !ok(self.sigma_q2) || !ok(self.sigma_r2) {
            return Err(Error::Config(format!(
                "tracker dt and variances must be positive (dt={}, σq²={}, σr²={})",
                self.dt, self.sigma_q2, self.sigma_r2
            )));
        }
        Ok(())
    }

    /// State transition `[[I, dt·I], [0, I]]`.
    pub fn transition(&self) -> DMatrix<f64> {
        let a = self.mode.axes();
        let mut m = DMatrix::identity(2 * a, 2 * a);
        for i in 0..a {
            m[(i, a + i)] = self.dt;
        }
        m
    }

    /// Acceleration-noise input `[[0.5·dt²·I], [dt·I]]`.
    pub fn noise_input(&self) -> DMatrix<f64> {
        let a = self.mode.axes();
        let mut m = DMatrix::zeros(2 * a, a);
        for i in 0..a {
            m[(i, i)] = 0.5 * self.dt * self.dt;
            m[(a + i, i)] = self.dt;
        }
        m
    }

    pub fn process_noise(&self) -> DMatrix<f64> {
        DMatrix::identity(self.mode.axes(), self.mode.axes()) * self.sigma_q2
    }

    /// Observation `[I, 0]`.
    pub fn observation(&self) -> DMatrix<f64> {
        let a = self.mode.axes();
        DMatrix::identity(a, 2 * a)
    }

    pub fn measurement_noise(&self) -> DMatrix<f64> {
        DMatrix::identity(self.mode.axes(), self.mode.axes()) * self.sigma_r2
    }

    /// `B·Q·Bᵀ`: the added covariance per prediction and the initial covariance.
    pub fn process_covariance(&self) -> DMatrix<f64> {
        let b = self.noise_input();
        &b * self.process_noise() * b.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub y: DVector<f64>,
    pub p: DMatrix<f64>,
    pub initialized: bool,
    pub last_vad: bool,
}

impl TrackState {
    pub fn new(mode: TrackMode) -> Self {
        let n = 2 * mode.axes();
        Self {
            y: DVector::zeros(n),
            p: DMatrix::zeros(n, n),
            initialized: false,
            last_vad: false,
        }
    }

    pub fn direction(&self, mode: TrackMode) -> Direction {
        match mode {
            TrackMode::AzimuthOnly => Direction::azimuth(self.y[0]),
            TrackMode::AzimuthElevation => Direction::new(self.y[0], self.y[1]),
        }
    }

    /// Angular velocities in degrees per second.
    pub fn velocity(&self) -> &[f64] {
        let n = self.y.len();
        &self.y.as_slice()[n / 2..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    Corrected,
    PredictedOnly,
    None,
}

impl EstimateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateSource::Corrected => "corrected",
            EstimateSource::PredictedOnly => "predicted-only",
            EstimateSource::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "corrected" => Some(EstimateSource::Corrected),
            "predicted-only" => Some(EstimateSource::PredictedOnly),
            "none" => Some(EstimateSource::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedEstimate {
    pub frame_index: usize,
    pub time_s: f64,
    pub direction: Option<Direction>,
    pub source: EstimateSource,
}

fn measurement_vector(direction: Direction, mode: TrackMode) -> DVector<f64> {
    match mode {
        TrackMode::AzimuthOnly => DVector::from_vec(vec![direction.azimuth_deg]),
        TrackMode::AzimuthElevation => {
            DVector::from_vec(vec![direction.azimuth_deg, direction.elevation_deg])
        }
    }
}

fn normalize_angles(y: &mut DVector<f64>, config: &TrackerConfig) {
    y[0] = match config.azimuth_range {
        AzimuthRange::Circular => wrap_deg(y[0]),
        AzimuthRange::HalfPlane => y[0].clamp(0.0, 180.0),
    };
    if config.mode == TrackMode::AzimuthElevation {
        y[1] = y[1].clamp(-90.0, 90.0);
    }
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Starts a track at `measurement` with zero velocity and covariance `B·Q·Bᵀ`.
pub fn initialize(measurement: &DoaEstimate, config: &TrackerConfig) -> TrackState {
    let a = config.mode.axes();
    let mut y = DVector::zeros(2 * a);
    y.rows_mut(0, a)
        .copy_from(&measurement_vector(measurement.direction, config.mode));
    normalize_angles(&mut y, config);
    TrackState {
        y,
        p: symmetrize(&config.process_covariance()),
        initialized: true,
        last_vad: true,
    }
}

pub fn predict(state: &TrackState, config: &TrackerConfig) -> Result<TrackState> {
    if !state.initialized {
        return Err(Error::Uninitialized);
    }
    let a = config.transition();
    let mut y = &a * &state.y;
    normalize_angles(&mut y, config);
    let p = symmetrize(&(&a * &state.p * a.transpose() + config.process_covariance()));
    Ok(TrackState {
        y,
        p,
        ..state.clone()
    })
}

/// `K = P_p·Cᵀ·(C·P_p·Cᵀ + R)⁻¹`
pub fn kalman_gain(predicted: &TrackState, config: &TrackerConfig) -> Result<DMatrix<f64>> {
    let c = config.observation();
    let s = &c * &predicted.p * c.transpose() + config.measurement_noise();
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular innovation covariance".into()))?;
    Ok(&predicted.p * c.transpose() * s_inv)
}

/// Measurement residual; azimuth takes the shorter arc, elevation does not wrap.
pub fn innovation(predicted: &TrackState, measurement: Direction, config: &TrackerConfig) -> DVector<f64> {
    let z = measurement_vector(measurement, config.mode);
    let mut r = &z - config.observation() * &predicted.y;
    r[0] = wrap_deg(r[0]);
    r
}

/// Correction step with an explicit gain.
pub fn correct_with_gain(
    predicted: &TrackState,
    measurement: Direction,
    gain: &DMatrix<f64>,
    config: &TrackerConfig,
) -> TrackState {
    let n = predicted.y.len();
    let r = innovation(predicted, measurement, config);
    let mut y = &predicted.y + gain * r;
    normalize_angles(&mut y, config);
    let ikc = DMatrix::identity(n, n) - gain * config.observation();
    let p = symmetrize(&(ikc * &predicted.p));
    TrackState {
        y,
        p,
        ..predicted.clone()
    }
}

pub fn correct(
    predicted: &TrackState,
    measurement: &DoaEstimate,
    config: &TrackerConfig,
) -> Result<TrackState> {
    if !predicted.initialized {
        return Err(Error::Uninitialized);
    }
    let gain = kalman_gain(predicted, config)?;
    Ok(correct_with_gain(predicted, measurement.direction, &gain, config))
}

/// One block of the VAD-gated tracker.
///
/// | VAD | state              | action                  | source         |
/// |-----|--------------------|-------------------------|----------------|
/// | 0→1 | any                | initialize              | corrected      |
/// | 1→1 | initialized        | predict + correct       | corrected      |
/// | 0   | initialized        | predict                 | predicted-only |
/// | 0   | never initialized  | nothing                 | none           |
pub fn step(
    state: &TrackState,
    vad: &VadDecision,
    measurement: Option<&DoaEstimate>,
    time_s: f64,
    config: &TrackerConfig,
) -> Result<(TrackState, SmoothedEstimate)> {
    let rising = vad.active && !state.last_vad;
    let (mut next, source) = match (vad.active, measurement) {
        (true, Some(meas)) if rising || !state.initialized => {
            (initialize(meas, config), EstimateSource::Corrected)
        }
        (true, Some(meas)) => (
            correct(&predict(state, config)?, meas, config)?,
            EstimateSource::Corrected,
        ),
        _ if state.initialized => (predict(state, config)?, EstimateSource::PredictedOnly),
        _ => (state.clone(), EstimateSource::None),
    };
    next.last_vad = vad.active;
    let direction = (source != EstimateSource::None).then(|| next.direction(config.mode));
    Ok((
        next,
        SmoothedEstimate {
            frame_index: vad.frame_index,
            time_s,
            direction,
            source,
        },
    ))
}

/// Owns a tracker state for one stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    state: TrackState,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: TrackState::new(config.mode),
            config,
        })
    }

    pub fn state(&self) -> &TrackState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn step(
        &mut self,
        vad: &VadDecision,
        measurement: Option<&DoaEstimate>,
        time_s: f64,
    ) -> Result<SmoothedEstimate> {
        let (next, est) = step(&self.state, vad, measurement, time_s, &self.config)?;
        self.state = next;
        Ok(est)
    }
}
