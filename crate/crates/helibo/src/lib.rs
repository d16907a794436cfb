//! Closed-loop landing simulation and hyperparameter search for a
//! vision-guided VTOL.
//!
//! The crate wires together a pinhole camera model, a stochastic surrogate
//! for a helipad detector, a SORT tracker, a PID landing controller, and a
//! kinematic vehicle into seeded landing trials. A Gaussian-process
//! optimizer with a UCB acquisition searches the detector's
//! (scale, brightness) augmentation space for the parameters that maximize
//! the landing success rate under different lighting and weather
//! conditions.
//!
//! Everything is deterministic given the top-level seed: every random
//! stream is derived from it with a purpose label (see [`seed`]).

pub mod bayesopt;
pub mod commands;
pub mod config;
pub mod controller;
pub mod detector;
pub mod geometry;
pub mod labels;
pub mod report;
pub mod seed;
pub mod tracker;
pub mod trials;
pub mod vehicle;

pub use config::RunConfig;
pub use detector::{AugParams, EnvCondition};
pub use geometry::BoundingBox;
