//! Seeded landing trials: spawn the vehicle at a random pose, close the
//! project -> detect -> track -> PID -> step loop until touchdown or the
//! step budget runs out, and score the landing. Repeated trials at one
//! parameter point give the success-rate objective the optimizer sees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Autopilot, AutopilotConfig, ControllerError, ErrorVector};
use crate::detector::{AugParams, DetectorModel, EnvCondition, QualityLandscape};
use crate::geometry::{project_pad, CameraModel, GeometryError, Helipad, WorldPose};
use crate::seed;
use crate::tracker::{Tracker, TrackerConfig};
use crate::vehicle::{self, KinematicsConfig, VehicleError, VehicleState};
use rand::Rng;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Initial horizontal offset drawn uniformly from [-R, R] per axis.
    pub init_xy_range: f64,
    /// Initial altitude drawn uniformly from [0, max] then floored.
    pub init_z_max: f64,
    pub init_z_min: f64,
    pub max_steps: u32,
    /// Per-axis horizontal tolerance for a successful landing, meters.
    pub success_xy: f64,
    /// Altitude the vehicle must be at or below when the trial ends.
    pub success_z: f64,
    /// Altitude at which the trial terminates as touched down.
    pub touchdown_z: f64,
    pub trials_per_eval: u32,
    /// Score the horizontal miss as a Euclidean radius instead of
    /// per-axis bounds.
    pub euclidean_success: bool,
    pub record_trace: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            init_xy_range: 40.0,
            init_z_max: 120.0,
            init_z_min: 20.0,
            max_steps: 15_000,
            success_xy: 4.0,
            success_z: 1.0,
            touchdown_z: 1.0,
            trials_per_eval: 10,
            euclidean_success: false,
            record_trace: false,
        }
    }
}

/// Everything a trial needs beyond the detector model itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub camera: CameraModel,
    pub pad: Helipad,
    pub kinematics: KinematicsConfig,
    pub autopilot: AutopilotConfig,
    pub tracker: TrackerConfig,
    pub trial: TrialConfig,
    pub landscape: QualityLandscape,
    pub noise_px: f64,
    pub clutter_rate: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            camera: CameraModel::default_landing_camera(),
            pad: Helipad::new(0.0, 0.0, 5.0).expect("valid default pad"),
            kinematics: KinematicsConfig::default(),
            autopilot: AutopilotConfig::default(),
            tracker: TrackerConfig::default(),
            trial: TrialConfig::default(),
            landscape: QualityLandscape::default(),
            noise_px: 0.05,
            clutter_rate: 0.0,
        }
    }
}

impl Scenario {
    pub fn build_model(&self, params: AugParams, model_seed: u64) -> DetectorModel {
        DetectorModel::single(params, self.landscape, self.noise_px, model_seed)
            .with_clutter(self.clutter_rate)
    }
}

/// Primary-track snapshot recorded in a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSnapshot {
    pub id: u64,
    pub bbox: crate::geometry::BoundingBox,
    pub hits: u32,
}

/// One recorded step of a trial trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub step: u32,
    pub pose: WorldPose,
    pub detected: bool,
    pub track: Option<TrackSnapshot>,
    pub error: Option<ErrorVector>,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub init: WorldPose,
    pub final_pose: WorldPose,
    pub success: bool,
    pub touched_down: bool,
    pub steps_used: u32,
    pub trace: Option<Vec<TraceStep>>,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub params: AugParams,
    pub env: EnvCondition,
    pub success_rate: f64,
    pub outcomes: Vec<TrialOutcome>,
}

/// Fraction of successful outcomes.
pub fn success_rate(outcomes: &[TrialOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64
}

fn landing_success(final_pose: &WorldPose, pad: &Helipad, cfg: &TrialConfig) -> bool {
    let dx = final_pose.x - pad.center.x;
    let dy = final_pose.y - pad.center.y;
    let horizontal_ok = if cfg.euclidean_success {
        dx.hypot(dy) <= cfg.success_xy
    } else {
        dx.abs() <= cfg.success_xy && dy.abs() <= cfg.success_xy
    };
    horizontal_ok && final_pose.z <= cfg.success_z
}

/// Run one trial from a seeded random initial pose.
pub fn run_trial(
    scenario: &Scenario,
    model: &DetectorModel,
    env: EnvCondition,
    trial_seed: u64,
) -> Result<TrialOutcome, TrialError> {
    let mut init_rng = seed::stream(trial_seed, "init-pose", &[]);
    let r = scenario.trial.init_xy_range;
    let init = WorldPose::new(
        scenario.pad.center.x + init_rng.random_range(-r..=r),
        scenario.pad.center.y + init_rng.random_range(-r..=r),
        init_rng
            .random_range(0.0..=scenario.trial.init_z_max)
            .max(scenario.trial.init_z_min),
    );
    run_trial_from(scenario, model, env, init, trial_seed)
}

/// Run one trial from an explicit initial pose.
pub fn run_trial_from(
    scenario: &Scenario,
    model: &DetectorModel,
    env: EnvCondition,
    init: WorldPose,
    trial_seed: u64,
) -> Result<TrialOutcome, TrialError> {
    let cfg = &scenario.trial;
    let mut rng = seed::stream(trial_seed, "frames", &[]);
    let mut tracker = Tracker::new(scenario.tracker);
    let mut autopilot = Autopilot::new(
        scenario.autopilot,
        scenario.camera.center_box,
        scenario.camera.focal(),
        scenario.pad.side_m,
    );
    let mut state = VehicleState::at_rest(init);
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut steps_used = 0;
    let mut touched_down = false;

    for step in 1..=cfg.max_steps {
        let truth = project_pad(&state.pose, &scenario.pad, &scenario.camera)?;
        let detections = model.detect_frame(truth.as_ref(), env, &mut rng);
        let confirmed = tracker.step(&detections);
        let primary = tracker.primary(&confirmed).map(|t| t.bbox);
        let cmd = autopilot.command(primary.as_ref())?;
        state = vehicle::step(&state, cmd, &scenario.kinematics)?;
        steps_used = step;

        if let Some(trace) = trace.as_mut() {
            trace.push(TraceStep {
                step,
                pose: state.pose,
                detected: !detections.is_empty(),
                track: tracker.primary(&confirmed).map(|t| TrackSnapshot {
                    id: t.id,
                    bbox: t.bbox,
                    hits: t.hits,
                }),
                error: primary.is_some().then(|| autopilot.last_error()).flatten(),
            });
        }
        if state.pose.z <= cfg.touchdown_z {
            touched_down = true;
            break;
        }
    }

    let success = landing_success(&state.pose, &scenario.pad, cfg);
    Ok(TrialOutcome {
        init,
        final_pose: state.pose,
        success,
        touched_down,
        steps_used,
        trace,
    })
}

/// Evaluate one parameter point: build the detector, run the configured
/// number of independent trials (in parallel; each owns its RNG stream),
/// and report the success rate.
pub fn evaluate(
    scenario: &Scenario,
    params: AugParams,
    env: EnvCondition,
    eval_seed: u64,
) -> Result<EvalResult, TrialError> {
    let model = scenario.build_model(params, seed::derive(eval_seed, "model", &[]));
    let outcomes: Vec<TrialOutcome> = (0..scenario.trial.trials_per_eval as u64)
        .into_par_iter()
        .map(|i| run_trial(scenario, &model, env, seed::derive(eval_seed, "trial", &[i])))
        .collect::<Result<_, _>>()?;
    Ok(EvalResult {
        params,
        env,
        success_rate: success_rate(&outcomes),
        outcomes,
    })
}

/// Number of frames sampled by the confidence probe.
pub const PROBE_FRAMES: u32 = 100;

/// Extreme-offset probe: park the vehicle at (pad + 40, pad + 40, 120)
/// and average the detector's confidence over seeded frames, counting
/// misses as zero.
pub fn confidence_probe(
    scenario: &Scenario,
    model: &DetectorModel,
    env: EnvCondition,
    probe_seed: u64,
) -> Result<f64, TrialError> {
    let pose = WorldPose::new(
        scenario.pad.center.x + 40.0,
        scenario.pad.center.y + 40.0,
        120.0,
    );
    let truth = project_pad(&pose, &scenario.pad, &scenario.camera)?;
    let mut rng = seed::stream(probe_seed, "probe", &[]);
    let mut total = 0.0;
    for _ in 0..PROBE_FRAMES {
        if let Some(det) = model.detect(truth.as_ref(), env, &mut rng) {
            total += det.confidence;
        }
    }
    Ok(total / f64::from(PROBE_FRAMES))
}
