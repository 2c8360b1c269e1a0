//! Pipeline configuration, shipped presets and built-in array geometries.
//!
//! A config file is JSON. It may name a `preset`; any other fields it carries
//! override that preset (nested objects merge key by key).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::array::{ArrayGeometry, ArrayKind};
use crate::error::{Error, Result};
use crate::eval::Scoring;
use crate::frontend::StftConfig;
use crate::io::ElevationConvention;
use crate::tracker::{AzimuthRange, TrackMode, TrackerConfig};

const LINEAR7: &str = include_str!("../presets/linear7.json");
const ROBOT_HEAD12: &str = include_str!("../presets/robot-head12.json");
const SPHERE32: &str = include_str!("../presets/sphere32.json");

/// Built-in geometry by name, if `name` is one.
pub fn builtin_geometry(name: &str) -> Option<ArrayGeometry> {
    let text = match name {
        "linear7" => LINEAR7,
        "robot-head12" => ROBOT_HEAD12,
        "sphere32" => SPHERE32,
        _ => return None,
    };
    Some(ArrayGeometry::from_json_str(text).expect("built-in geometry is valid"))
}

/// Resolves a geometry reference: a built-in name, or a path relative to `base_dir`.
pub fn resolve_geometry(reference: &str, base_dir: Option<&Path>) -> Result<ArrayGeometry> {
    if let Some(g) = builtin_geometry(reference) {
        return Ok(g);
    }
    let path = PathBuf::from(reference);
    let path = match base_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    };
    ArrayGeometry::load(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Linear,
    RobotHead,
    Spherical,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Linear, Preset::RobotHead, Preset::Spherical];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Linear => "linear",
            Preset::RobotHead => "robot-head",
            Preset::Spherical => "spherical",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub kind: ArrayKind,
    pub resolution_deg: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IoConfig {
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    #[serde(default)]
    pub truth_convention: ElevationConvention,
    pub output: Option<PathBuf>,
    pub dump_srp: Option<PathBuf>,
    pub errors_out: Option<PathBuf>,
    pub plots_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preset: Option<Preset>,
    /// Built-in geometry name or path to a geometry JSON file.
    pub geometry: String,
    /// Input channels to use, in microphone order; `None` uses all.
    pub channels: Option<Vec<usize>>,
    pub sample_rate_hz: f64,
    pub stft: StftConfig,
    pub cpsd_frames: usize,
    pub vad_threshold: f64,
    pub grid: GridConfig,
    pub tracker: TrackerConfig,
    pub scoring: Scoring,
    pub io: IoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::Linear)
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let (geometry, vad_threshold, kind, resolution_deg) = match preset {
            Preset::Linear => ("linear7", 200.0, ArrayKind::LinearAzimuthOnly, 1.0),
            Preset::RobotHead => ("robot-head12", 50.0, ArrayKind::FullSphere, 5.0),
            Preset::Spherical => ("sphere32", 10.0, ArrayKind::FullSphere, 5.0),
        };
        Self {
            preset: Some(preset),
            geometry: geometry.into(),
            channels: None,
            sample_rate_hz: 48_000.0,
            stft: StftConfig::default(),
            cpsd_frames: 25,
            vad_threshold,
            grid: GridConfig {
                kind,
                resolution_deg,
            },
            tracker: TrackerConfig {
                mode: TrackMode::for_array(kind),
                azimuth_range: AzimuthRange::for_array(kind),
                ..TrackerConfig::default()
            },
            scoring: Scoring::ActiveOnly,
            io: IoConfig::default(),
        }
    }

    /// Parses a JSON config, layering it over its `preset` (default `linear`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let overrides: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !overrides.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let preset = match overrides.get("preset") {
            None | Some(Value::Null) => Preset::Linear,
            Some(Value::String(s)) => Preset::parse(s)?,
            Some(other) => return Err(Error::Config(format!("invalid preset {other}"))),
        };
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Block period implied by the STFT and CPSD settings.
    pub fn block_period_s(&self) -> f64 {
        (self.stft.hop * self.cpsd_frames) as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate(self.sample_rate_hz)?;
        if self.cpsd_frames == 0 {
            return Err(Error::Config("cpsd_frames must be positive".into()));
        }
        if !(self.vad_threshold.is_finite() && self.vad_threshold > 0.0) {
            return Err(Error::Config(format!(
                "VAD threshold must be positive, got {}",
                self.vad_threshold
            )));
        }
        self.tracker.validate()?;
        if self.grid.kind == ArrayKind::LinearAzimuthOnly
            && self.tracker.mode == TrackMode::AzimuthElevation
        {
            return Err(Error::Config(
                "a linear grid cannot feed an azimuth-elevation tracker".into(),
            ));
        }
        if matches!(&self.channels, Some(c) if c.is_empty()) {
            return Err(Error::Config("channel selection is empty".into()));
        }
        Ok(())
    }

    /// Non-fatal inconsistencies.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let implied = self.block_period_s();
        if (self.tracker.dt - implied).abs() > 1e-3 * implied {
            out.push(format!(
                "tracker dt {} s differs from the block period R·N/fs = {implied:.6} s",
                self.tracker.dt
            ));
        }
        out
    }

    /// Loads the configured geometry. With a channel selection, the geometry
    /// lists the selected microphones in selection order.
    pub fn load_geometry(&self, base_dir: Option<&Path>) -> Result<ArrayGeometry> {
        let geo = resolve_geometry(&self.geometry, base_dir)?;
        if geo.kind() != self.grid.kind {
            return Err(Error::Config(format!(
                "geometry kind {:?} does not match grid kind {:?}",
                geo.kind(),
                self.grid.kind
            )));
        }
        Ok(geo)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}
