//! Kinematic vehicle: integrates clamped velocity commands at a fixed
//! rate, with an optional first-order lag standing in for the closed
//! inner-loop dynamics of a full 6-DOF simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::WorldPose;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("velocity command has a non-finite component: ({0}, {1}, {2})")]
    NonFiniteCommand(f64, f64, f64),
}

/// Velocity in the world frame, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl Velocity {
    pub const ZERO: Self = Self {
        vx: 0.0,
        vy: 0.0,
        vz: 0.0,
    };

    pub fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Self { vx, vy, vz }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.vz.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Step period, seconds (50 Hz control loop by default).
    pub dt: f64,
    /// First-order velocity-tracking time constant; 0 tracks commands
    /// exactly.
    pub tau: f64,
    /// Per-axis speed limit for the horizontal axes, m/s.
    pub v_max_xy: f64,
    /// Speed limit for the vertical axis, m/s.
    pub v_max_z: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            tau: 0.3,
            v_max_xy: 5.0,
            v_max_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: WorldPose,
    pub vel: Velocity,
}

impl VehicleState {
    pub fn at_rest(pose: WorldPose) -> Self {
        Self {
            pose,
            vel: Velocity::ZERO,
        }
    }
}

/// Advance one step: clamp the command per axis, relax the velocity toward
/// it, integrate the pose. Altitude floors at zero.
pub fn step(
    state: &VehicleState,
    cmd: Velocity,
    cfg: &KinematicsConfig,
) -> Result<VehicleState, VehicleError> {
    if !cmd.is_finite() {
        return Err(VehicleError::NonFiniteCommand(cmd.vx, cmd.vy, cmd.vz));
    }
    let clamped = Velocity::new(
        cmd.vx.clamp(-cfg.v_max_xy, cfg.v_max_xy),
        cmd.vy.clamp(-cfg.v_max_xy, cfg.v_max_xy),
        cmd.vz.clamp(-cfg.v_max_z, cfg.v_max_z),
    );
    let vel = if cfg.tau > 0.0 {
        let a = (cfg.dt / cfg.tau).min(1.0);
        Velocity::new(
            state.vel.vx + a * (clamped.vx - state.vel.vx),
            state.vel.vy + a * (clamped.vy - state.vel.vy),
            state.vel.vz + a * (clamped.vz - state.vel.vz),
        )
    } else {
        clamped
    };
    let pose = WorldPose::new(
        state.pose.x + vel.vx * cfg.dt,
        state.pose.y + vel.vy * cfg.dt,
        (state.pose.z + vel.vz * cfg.dt).max(0.0),
    );
    Ok(VehicleState { pose, vel })
}
