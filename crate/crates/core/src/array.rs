//! Array geometries, candidate-direction grids and far-field steering vectors.
//!
//! Directions use azimuth measured counterclockwise from the +x axis and
//! elevation measured from the xy-plane. Linear arrays are canonicalized onto
//! the x-axis so that broadside is azimuth 90°.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayKind {
    /// Line array; only azimuth in [0, 180] is observable.
    #[serde(alias = "linear")]
    LinearAzimuthOnly,
    /// Three-dimensional array steered over the whole sphere.
    #[serde(alias = "sphere")]
    FullSphere,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 3]>,
    speed_of_sound: f64,
    kind: ArrayKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeometryFile {
    positions: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_of_sound: Option<f64>,
    kind: ArrayKind,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, speed_of_sound: f64, kind: ArrayKind) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 microphones, got {}",
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite microphone coordinate".into()));
        }
        if !(speed_of_sound.is_finite() && speed_of_sound > 0.0) {
            return Err(Error::Geometry(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        let first = positions[0];
        if positions.iter().all(|p| *p == first) {
            return Err(Error::Geometry("all microphone positions coincide".into()));
        }
        let positions = match kind {
            ArrayKind::LinearAzimuthOnly => canonicalize_line(&positions)?,
            ArrayKind::FullSphere => positions,
        };
        Ok(Self {
            positions,
            speed_of_sound,
            kind,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GeometryFile =
            serde_json::from_str(text).map_err(|e| Error::Geometry(e.to_string()))?;
        Self::new(
            file.positions,
            file.speed_of_sound.unwrap_or(DEFAULT_SPEED_OF_SOUND),
            file.kind,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_json_string(&self) -> String {
        let file = GeometryFile {
            positions: self.positions.clone(),
            speed_of_sound: Some(self.speed_of_sound),
            kind: self.kind,
        };
        serde_json::to_string_pretty(&file).expect("geometry serializes")
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    /// Returns a copy with every microphone shifted by `offset`. Linear arrays
    /// stay on the x-axis, so only the x component applies to them.
    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| match self.kind {
                ArrayKind::LinearAzimuthOnly => [p[0] + offset[0], 0.0, 0.0],
                ArrayKind::FullSphere => [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]],
            })
            .collect();
        Self {
            positions,
            ..self.clone()
        }
    }

    /// Keeps only the listed microphones, in the listed order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        let positions = channels
            .iter()
            .map(|&c| {
                self.positions.get(c).copied().ok_or_else(|| {
                    Error::Geometry(format!(
                        "channel {c} out of range for a {}-microphone array",
                        self.num_mics()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(positions, self.speed_of_sound, self.kind)
    }
}

/// Projects collinear positions onto the x-axis, keeping their coordinate
/// along the line measured from the origin's projection.
fn canonicalize_line(positions: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    if positions.iter().all(|p| p[1] == 0.0 && p[2] == 0.0) {
        return Ok(positions.to_vec());
    }
    let origin = positions[0];
    let far = positions
        .iter()
        .max_by(|a, b| dist(a, &origin).total_cmp(&dist(b, &origin)))
        .copied()
        .unwrap_or(origin);
    let len = dist(&far, &origin);
    let axis = [
        (far[0] - origin[0]) / len,
        (far[1] - origin[1]) / len,
        (far[2] - origin[2]) / len,
    ];
    let scale = positions
        .iter()
        .map(|p| p.iter().map(|v| v.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let mut out = Vec::with_capacity(positions.len());
    for p in positions {
        let rel = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
        let s = dot(&rel, &axis);
        let off = [rel[0] - s * axis[0], rel[1] - s * axis[1], rel[2] - s * axis[2]];
        if dot(&off, &off).sqrt() > 1e-6 * scale.max(1.0) {
            return Err(Error::Geometry(
                "linear array positions are not collinear".into(),
            ));
        }
        out.push([dot(p, &axis), 0.0, 0.0]);
    }
    Ok(out)
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    dot(&d, &d).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Direction {
    pub const fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    pub const fn azimuth(azimuth_deg: f64) -> Self {
        Self::new(azimuth_deg, 0.0)
    }

    /// Unit vector pointing from the array toward the source.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.azimuth_deg.to_radians().sin_cos();
        let (sp, cp) = self.elevation_deg.to_radians().sin_cos();
        [cp * ct, cp * st, sp]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    directions: Vec<Direction>,
    resolution_deg: f64,
    kind: ArrayKind,
}

impl DirectionGrid {
    /// Enumerates the candidate directions, elevation-major with azimuth
    /// ascending. Linear grids span azimuth 0..=180; sphere grids span
    /// elevation -90..=90 and azimuth -180..=180, both endpoints included.
    pub fn build(kind: ArrayKind, resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg.is_finite() && resolution_deg > 0.0) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {resolution_deg}"
            )));
        }
        let steps = |span: f64| -> Result<usize> {
            let n = span / resolution_deg;
            let r = n.round();
            if (n - r).abs() > 1e-9 * n.max(1.0) || r < 1.0 {
                return Err(Error::Config(format!(
                    "grid resolution {resolution_deg}° does not divide {span}°"
                )));
            }
            Ok(r as usize)
        };
        let directions = match kind {
            ArrayKind::LinearAzimuthOnly => {
                let n = steps(180.0)?;
                (0..=n)
                    .map(|i| Direction::azimuth(i as f64 * resolution_deg))
                    .collect()
            }
            ArrayKind::FullSphere => {
                let n_az = steps(360.0)?;
                let n_el = steps(180.0)?;
                let mut dirs = Vec::with_capacity((n_az + 1) * (n_el + 1));
                for e in 0..=n_el {
                    let el = -90.0 + e as f64 * resolution_deg;
                    for a in 0..=n_az {
                        dirs.push(Direction::new(-180.0 + a as f64 * resolution_deg, el));
                    }
                }
                dirs
            }
        };
        Ok(Self {
            directions,
            resolution_deg,
            kind,
        })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<Direction> {
        self.directions.get(index).copied()
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }
}

/// Plane-wave arrival delays relative to the array origin, in seconds.
pub fn propagation_delays(geometry: &ArrayGeometry, direction: Direction) -> Vec<f64> {
    let u = direction.unit_vector();
    let c = geometry.speed_of_sound();
    geometry
        .positions()
        .iter()
        .map(|p| -dot(p, &u) / c)
        .collect()
}

/// Unit-modulus phase weights `exp(-j 2π f τ_m)` for one frequency and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }
}

pub fn steering_vector(geometry: &ArrayGeometry, freq_hz: f64, direction: Direction) -> SteeringVector {
    let omega = -2.0 * std::f64::consts::PI * freq_hz;
    SteeringVector(
        propagation_delays(geometry, direction)
            .into_iter()
            .map(|tau| Complex64::from_polar(1.0, omega * tau))
            .collect(),
    )
}
