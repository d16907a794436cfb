//! Run configuration: a TOML file of `key = value` sections mirrored by
//! CLI flags (flags win), with every knob defaulted so an empty config is
//! a valid run. Unknown keys are a hard error. The resolved configuration
//! is written back out as the run manifest, and re-running from that
//! manifest reproduces the run byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesopt::{BoConfig, KernelConfig};
use crate::controller::{AutopilotConfig, PidGains};
use crate::detector::{EnvCondition, QualityLandscape};
use crate::geometry::{CameraModel, GeometryError, Helipad, MIN_CAMERA_ALTITUDE_M};
use crate::tracker::TrackerConfig;
use crate::trials::{Scenario, TrialConfig};
use crate::vehicle::KinematicsConfig;

/// Environment variable overriding the configured seed.
pub const SEED_ENV_VAR: &str = "HELIBO_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub fov_deg: f64,
    pub image_px: u32,
    pub center_box_side: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            fov_deg: 90.0,
            image_px: 640,
            center_box_side: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadSection {
    pub x: f64,
    pub y: f64,
    pub side_m: f64,
}

impl Default for PadSection {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            side_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// Box-jitter scale in normalized units.
    pub noise_px: f64,
    /// Per-frame probability of a spurious clutter detection.
    pub clutter_rate: f64,
    /// Subset-jitter scale for ensemble training.
    pub sigma_sub: f64,
    pub ensemble_size: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            noise_px: 0.05,
            clutter_rate: 0.0,
            sigma_sub: 0.03,
            ensemble_size: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub integral_limit: f64,
    pub hold_frames: u32,
    pub min_descent_rate: f64,
    pub scale_by_altitude: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let d = AutopilotConfig::default();
        Self {
            integral_limit: d.integral_limit,
            hold_frames: d.hold_frames,
            min_descent_rate: d.min_descent_rate,
            scale_by_altitude: d.scale_by_altitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub kernel: KernelConfig,
    /// Observation noise variance on success rates.
    pub noise_var: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            noise_var: 0.0225,
        }
    }
}

/// Settings for the `uncertainty` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySection {
    /// Detector parameters the ensemble is trained at; defaults to the
    /// training environment's landscape peak when unset.
    pub scale: Option<f64>,
    pub brightness: Option<f64>,
    /// Frames averaged per evaluation environment.
    pub frames: u32,
    /// Truth-box altitude used for the probe frames.
    pub probe_altitude_m: f64,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            scale: None,
            brightness: None,
            frames: 1000,
            probe_altitude_m: 30.0,
        }
    }
}

/// The full resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvCondition,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bo: BoConfig,
    pub gp: GpSection,
    pub trials: TrialConfig,
    pub kinematics: KinematicsConfig,
    pub gains: PidGains,
    pub controller: ControllerSection,
    pub tracker: TrackerConfig,
    pub camera: CameraSection,
    pub pad: PadSection,
    pub detector: DetectorSection,
    pub landscape: QualityLandscape,
    pub uncertainty: UncertaintySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvCondition::ClearDay,
            seed: 42,
            output_dir: PathBuf::from("helibo-out"),
            bo: BoConfig::default(),
            gp: GpSection::default(),
            trials: TrialConfig::default(),
            kinematics: KinematicsConfig::default(),
            gains: PidGains::default(),
            controller: ControllerSection::default(),
            tracker: TrackerConfig::default(),
            camera: CameraSection::default(),
            pad: PadSection::default(),
            detector: DetectorSection::default(),
            landscape: QualityLandscape::default(),
            uncertainty: UncertaintySection::default(),
        }
    }
}

impl RunConfig {
    /// Load from a TOML file, or the defaults when no path is given. The
    /// `HELIBO_SEED` environment variable, when set, overrides the seed.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            None => Self::default(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                toml::from_str(&text).map_err(|source| ConfigError::Parse {
                    path: path.to_path_buf(),
                    source: Box::new(source),
                })?
            }
        };
        if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
            config.seed = seed
                .parse()
                .map_err(|_| invalid("seed", format!("{SEED_ENV_VAR}='{seed}' is not a u64")))?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("kinematics.dt", self.kinematics.dt)?;
        if self.kinematics.tau < 0.0 {
            return Err(invalid("kinematics.tau", "must be non-negative"));
        }
        positive("kinematics.v_max_xy", self.kinematics.v_max_xy)?;
        positive("kinematics.v_max_z", self.kinematics.v_max_z)?;
        if !(self.camera.fov_deg > 0.0 && self.camera.fov_deg < 180.0) {
            return Err(invalid("camera.fov_deg", "must be in (0, 180)"));
        }
        positive("camera.center_box_side", self.camera.center_box_side)?;
        positive("pad.side_m", self.pad.side_m)?;
        if !(self.tracker.iou_threshold > 0.0 && self.tracker.iou_threshold < 1.0) {
            return Err(invalid("tracker.iou_threshold", "must be in (0, 1)"));
        }
        if self.tracker.max_age < 1 || self.tracker.min_hits < 1 {
            return Err(invalid("tracker.max_age", "max_age and min_hits must be >= 1"));
        }
        for (field, g) in [
            ("gains.x", self.gains.x),
            ("gains.y", self.gains.y),
            ("gains.z", self.gains.z),
        ] {
            if g.kp < 0.0 || g.ki < 0.0 || g.kd < 0.0 {
                return Err(invalid(field, "gains must be non-negative"));
            }
        }
        positive("trials.success_xy", self.trials.success_xy)?;
        positive("trials.success_z", self.trials.success_z)?;
        if self.trials.trials_per_eval < 1 {
            return Err(invalid("trials.trials_per_eval", "must be >= 1"));
        }
        if self.trials.touchdown_z <= MIN_CAMERA_ALTITUDE_M {
            return Err(invalid(
                "trials.touchdown_z",
                format!("must exceed the camera minimum {MIN_CAMERA_ALTITUDE_M}"),
            ));
        }
        if self.trials.init_z_min <= self.trials.touchdown_z {
            return Err(invalid("trials.init_z_min", "must exceed touchdown_z"));
        }
        if self.bo.kappa < 0.0 {
            return Err(invalid("bo.kappa", "must be non-negative"));
        }
        if self.bo.epsilon < 0.0 {
            return Err(invalid("bo.epsilon", "must be non-negative"));
        }
        if self.bo.budget < 1 || self.bo.init_samples < 1 {
            return Err(invalid("bo.budget", "budget and init_samples must be >= 1"));
        }
        positive("gp.kernel.length_scale", self.gp.kernel.length_scale)?;
        positive("gp.kernel.signal_var", self.gp.kernel.signal_var)?;
        if self.gp.noise_var < 0.0 {
            return Err(invalid("gp.noise_var", "must be non-negative"));
        }
        if self.detector.noise_px < 0.0 {
            return Err(invalid("detector.noise_px", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.detector.clutter_rate) {
            return Err(invalid("detector.clutter_rate", "must be in [0, 1]"));
        }
        if self.detector.ensemble_size < 2 {
            return Err(invalid("detector.ensemble_size", "must be >= 2"));
        }
        for (field, v) in [
            ("uncertainty.scale", self.uncertainty.scale),
            ("uncertainty.brightness", self.uncertainty.brightness),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(field, "must be in [0, 1]"));
                }
            }
        }
        self.build_camera().map_err(|e| invalid("camera", e.to_string()))?;
        Ok(())
    }

    fn build_camera(&self) -> Result<CameraModel, GeometryError> {
        CameraModel::new(
            self.camera.fov_deg,
            self.camera.image_px,
            self.camera.center_box_side,
        )
    }

    /// Assemble the trial scenario from the validated configuration.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let camera = self.build_camera().map_err(|e| invalid("camera", e.to_string()))?;
        let pad = Helipad::new(self.pad.x, self.pad.y, self.pad.side_m)
            .map_err(|e| invalid("pad.side_m", e.to_string()))?;
        Ok(Scenario {
            camera,
            pad,
            kinematics: self.kinematics,
            autopilot: AutopilotConfig {
                gains: self.gains,
                dt: self.kinematics.dt,
                integral_limit: self.controller.integral_limit,
                hold_frames: self.controller.hold_frames,
                min_descent_rate: self.controller.min_descent_rate,
                scale_by_altitude: self.controller.scale_by_altitude,
            },
            tracker: self.tracker,
            trial: self.trials,
            landscape: self.landscape,
            noise_px: self.detector.noise_px,
            clutter_rate: self.detector.clutter_rate,
        })
    }

    /// Apply `key.path=value` overrides on top of the loaded file.
    /// The config is round-tripped through a TOML table so every field
    /// is reachable, and unknown paths fail like any other unknown key.
    pub fn apply_overrides(self, sets: &[String]) -> Result<Self, ConfigError> {
        if sets.is_empty() {
            return Ok(self);
        }
        let bad = |reason: String| ConfigError::Invalid {
            field: "--set",
            reason,
        };
        let mut table: toml::Table = toml::Table::try_from(&self)
            .map_err(|e| bad(format!("serializing config: {e}")))?;
        for set in sets {
            let (path, raw) = set
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key.path=value, got '{set}'")))?;
            // Parse the value as a TOML literal; bare words fall back to
            // strings so `--set env=clear_night` works unquoted.
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .map(|t| t["v"].clone())
                .unwrap_or_else(|_| toml::Value::String(raw.trim().to_string()));
            let mut node = &mut table;
            let segments: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = segments.split_last().unwrap();
            for seg in parents {
                node = node
                    .entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| bad(format!("'{seg}' in '{path}' is not a section")))?;
            }
            node.insert(last.to_string(), value);
        }
        table
            .try_into()
            .map_err(|e| bad(format!("applying overrides: {e}")))
    }

    /// Serialize the resolved config as the run manifest.
    pub fn manifest_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("config serializes");
        format!(
            "# {} v{} run manifest; rerun with --config <this file>\n{}",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            body
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let parsed: RunConfig = toml::from_str("").unwrap();
        assert_eq!(parsed, RunConfig::default());
        parsed.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("unknown_key = 1").unwrap_err();
        assert!(err.to_string().contains("unknown_key"), "{err}");
        let err = toml::from_str::<RunConfig>("[trials]\nmax_stepz = 10").unwrap_err();
        assert!(err.to_string().contains("max_stepz"), "{err}");
    }

    #[test]
    fn partial_sections_fill_from_defaults() {
        let parsed: RunConfig = toml::from_str(
            "env = \"clear_night\"\n[bo]\nbudget = 7\n[landscape.clear_day]\npeak_scale = 0.5\npeak_brightness = 0.5\nlength_scale = 0.2\nq_max = 0.9\n",
        )
        .unwrap();
        assert_eq!(parsed.env, EnvCondition::ClearNight);
        assert_eq!(parsed.bo.budget, 7);
        assert_eq!(parsed.bo.kappa, 2.567);
        assert_eq!(parsed.landscape.clear_day.q_max, 0.9);
        assert_eq!(parsed.landscape.clear_night.q_max, 0.95);
    }

    #[test]
    fn manifest_round_trips_exactly() {
        let mut config = RunConfig {
            seed: 1234,
            ..RunConfig::default()
        };
        config.bo.budget = 3;
        let manifest = config.manifest_toml();
        let parsed: RunConfig = toml::from_str(&manifest).unwrap();
        assert_eq!(parsed, config);
        assert_eq!(parsed.manifest_toml(), manifest);
    }

    #[test]
    fn validation_names_the_bad_field() {
        let mut config = RunConfig::default();
        config.tracker.iou_threshold = 1.5;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("tracker.iou_threshold"), "{err}");

        let mut config = RunConfig::default();
        config.kinematics.dt = 0.0;
        assert!(config.validate().unwrap_err().to_string().contains("kinematics.dt"));
    }

    #[test]
    fn seed_env_var_wins() {
        // Serialized through a temp file to exercise the load path.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        fs::write(&path, "seed = 5\n").unwrap();
        std::env::set_var(SEED_ENV_VAR, "777");
        let config = RunConfig::load(Some(&path)).unwrap();
        std::env::remove_var(SEED_ENV_VAR);
        assert_eq!(config.seed, 777);
    }
}
