//! Landing controller: turns the tracked box into the three-axis error
//! `e = b_c - b_o` and runs a discrete PID per axis to produce a world
//! velocity command.
//!
//! The horizontal image errors are mapped to world axes through the
//! downward camera (image x east, image y south, so the y channel flips
//! sign) and rescaled to meters by the altitude estimate recovered from
//! the box size, `alt = f * pad_side / sqrt(area(b_o))`, before entering
//! the PID. A raw-pixel mode without the metric rescale is kept behind a
//! flag for comparison runs.
//!
//! The vertical channel descends while the area error shrinks, but never
//! slower than `min_descent_rate` while the pad is tracked: the area
//! error crosses zero at the altitude where the pad fills the center box,
//! which sits well above the touchdown line for a realistically sized
//! pad, so a pure error-nulling law would hover there instead of landing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::vehicle::Velocity;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("error vector has a non-finite component: ({0}, {1}, {2})")]
    NonFiniteError(f64, f64, f64),
}

/// Image-space control error: center offsets plus normalized area
/// difference. Large `ez` means high altitude; it approaches zero as the
/// detected box grows toward the center box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub ex: f64,
    pub ey: f64,
    pub ez: f64,
}

impl ErrorVector {
    pub fn is_finite(&self) -> bool {
        self.ex.is_finite() && self.ey.is_finite() && self.ez.is_finite()
    }
}

/// `e = b_c - b_o` on the centers; the z component is the area deficit
/// relative to the center box.
pub fn compute_error(b_c: &BoundingBox, b_o: &BoundingBox) -> ErrorVector {
    ErrorVector {
        ex: b_c.cx - b_o.cx,
        ey: b_c.cy - b_o.cy,
        ez: (b_c.area() - b_o.area()) / b_c.area(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Per-axis PID gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub x: AxisGains,
    pub y: AxisGains,
    pub z: AxisGains,
}

impl PidGains {
    pub fn uniform(kp: f64, ki: f64, kd: f64) -> Self {
        let g = AxisGains { kp, ki, kd };
        Self { x: g, y: g, z: g }
    }
}

impl Default for PidGains {
    fn default() -> Self {
        // Tuned against the noiseless closed-loop convergence test.
        Self::uniform(0.8, 0.05, 0.2)
    }
}

/// Discrete PID state: rectangular integration with anti-windup clamping,
/// backward-difference derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub dt: f64,
    /// Anti-windup bound on each integral accumulator.
    pub integral_limit: f64,
    integral: [f64; 3],
    prev_error: Option<[f64; 3]>,
}

impl PidState {
    pub fn new(dt: f64, integral_limit: f64) -> Self {
        Self {
            dt,
            integral_limit,
            integral: [0.0; 3],
            prev_error: None,
        }
    }

    pub fn integral(&self) -> [f64; 3] {
        self.integral
    }
}

/// One PID step in image space. Returns the per-axis outputs
/// `(u_x, u_y, u_z)` before any world mapping or metric scaling.
pub fn pid_step(
    state: &PidState,
    e: &ErrorVector,
    gains: &PidGains,
) -> Result<(PidState, [f64; 3]), ControllerError> {
    if !e.is_finite() {
        return Err(ControllerError::NonFiniteError(e.ex, e.ey, e.ez));
    }
    let errs = [e.ex, e.ey, e.ez];
    let axis = [gains.x, gains.y, gains.z];
    let mut next = *state;
    let mut out = [0.0; 3];
    for i in 0..3 {
        next.integral[i] = (state.integral[i] + errs[i] * state.dt)
            .clamp(-state.integral_limit, state.integral_limit);
        let derivative = match state.prev_error {
            Some(prev) => (errs[i] - prev[i]) / state.dt,
            None => 0.0,
        };
        out[i] = axis[i].kp * errs[i] + axis[i].ki * next.integral[i] + axis[i].kd * derivative;
    }
    next.prev_error = Some(errs);
    Ok((next, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutopilotConfig {
    pub gains: PidGains,
    /// Control period, seconds.
    pub dt: f64,
    pub integral_limit: f64,
    /// Frames the last command is held when no confirmed track exists
    /// before the vehicle stops and hovers.
    pub hold_frames: u32,
    /// Descent-rate floor while the pad is tracked, m/s.
    pub min_descent_rate: f64,
    /// Metric rescale of image errors by the box-derived altitude
    /// estimate; raw image-space commands when false.
    pub scale_by_altitude: bool,
}

impl Default for AutopilotConfig {
    fn default() -> Self {
        Self {
            gains: PidGains::default(),
            dt: 0.02,
            // Tight bound: the plant carries no steady disturbance, so
            // the integral only has to absorb small residual biases, and
            // anything larger would park the vehicle off-center for
            // longer than a descent lasts.
            integral_limit: 0.05,
            hold_frames: 25,
            min_descent_rate: 2.0,
            scale_by_altitude: true,
        }
    }
}

/// Per-frame guidance: PID on the tracked box, command hold over short
/// track losses, stop-and-hover after long ones.
#[derive(Debug, Clone)]
pub struct Autopilot {
    config: AutopilotConfig,
    center_box: BoundingBox,
    /// Focal factor times pad side: the numerator of the altitude
    /// estimate.
    focal_pad: f64,
    focal: f64,
    pid: PidState,
    last_cmd: Velocity,
    frames_without_track: u32,
    last_error: Option<ErrorVector>,
}

impl Autopilot {
    pub fn new(config: AutopilotConfig, center_box: BoundingBox, focal: f64, pad_side_m: f64) -> Self {
        Self {
            config,
            center_box,
            focal_pad: focal * pad_side_m,
            focal,
            pid: PidState::new(config.dt, config.integral_limit),
            last_cmd: Velocity::ZERO,
            frames_without_track: 0,
            last_error: None,
        }
    }

    /// Altitude estimate from the apparent box size.
    pub fn altitude_estimate(&self, b_o: &BoundingBox) -> f64 {
        self.focal_pad / b_o.area().sqrt().max(1e-9)
    }

    /// Most recent image-space error, for diagnostics and traces.
    pub fn last_error(&self) -> Option<ErrorVector> {
        self.last_error
    }

    /// Compute the frame's velocity command from the tracked box, if any.
    ///
    /// The horizontal channels run the PID on the metric-rescaled errors
    /// rather than rescaling the PID output: integrating in image space
    /// and multiplying afterwards would blow the accumulated integral up
    /// by the altitude factor and leave a windup offset that outlives the
    /// descent.
    pub fn command(&mut self, tracked: Option<&BoundingBox>) -> Result<Velocity, ControllerError> {
        let Some(b_o) = tracked else {
            self.frames_without_track += 1;
            if self.frames_without_track > self.config.hold_frames {
                self.last_cmd = Velocity::ZERO;
            }
            return Ok(self.last_cmd);
        };
        self.frames_without_track = 0;

        let e = compute_error(&self.center_box, b_o);
        self.last_error = Some(e);

        // Image x is east and image y south, so with e = b_c - b_o the
        // x channel flips sign and the y channel does not.
        let alt = self.altitude_estimate(b_o);
        let e_ctl = if self.config.scale_by_altitude {
            let horiz = alt / self.focal;
            ErrorVector {
                ex: -e.ex * horiz,
                ey: e.ey * horiz,
                ez: e.ez,
            }
        } else {
            ErrorVector {
                ex: -e.ex,
                ey: e.ey,
                ez: e.ez,
            }
        };
        let (pid, u) = pid_step(&self.pid, &e_ctl, &self.config.gains)?;
        self.pid = pid;

        let descent = if self.config.scale_by_altitude {
            (u[2] * alt).max(self.config.min_descent_rate)
        } else {
            u[2].max(self.config.min_descent_rate)
        };
        let cmd = Velocity::new(u[0], u[1], -descent);
        self.last_cmd = cmd;
        Ok(cmd)
    }
}
