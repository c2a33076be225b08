//! Fixed-step simulation of the platform, its arm and the scene objects
//! under the hierarchical controller, with sensing noise and command delay.

mod episode;
mod log;
mod noise;
mod outcome;
mod reference;
mod world;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::DynamicsError;
use crate::planner::PlannerError;

pub use self::log::{EventKind, SimEvent, SimLog, SimRow};
pub use episode::{hover_command, run_episode, run_hover, run_planned, world_from, Episode, HoverSetup};
pub use outcome::{evaluate, Articulation, Outcome, Placement};
pub use noise::{inject_noise_delay, CommandDelay, Measurement, Sensor};
pub use reference::{Reference, ReferencePoint};
pub use world::{GraspSpring, SimObject, SimWorld, WorldInputs, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("planning failed: {0}")]
    Planning(#[from] PlannerError),
    #[error("simulation diverged at t = {t:.3} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Rates, delay, noise and interaction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Physics step, s.
    pub dt: f64,
    /// Outer (wrench) loop rate, Hz.
    pub high_rate: f64,
    /// Inner (gimbal, thrust, arm) loop rate, Hz.
    pub low_rate: f64,
    /// Command delay between the outer loop and the vehicle, s.
    pub delay: f64,
    /// Gaussian std of the measured position, m.
    pub noise_position: f64,
    /// Gaussian std of the measured attitude (rotation vector), rad.
    pub noise_attitude: f64,
    pub seed: u64,
    pub grasp: GraspSpring,
    /// Gripper-to-handle distance below which a grasp closes, m.
    pub attach_distance: f64,
    /// Relative speed below which a grasp closes, m/s.
    pub attach_speed: f64,
    /// Hold time after each step's trajectory, s.
    pub settle_time: f64,
    /// Longest extra hold while waiting for the grasp condition, s.
    pub grasp_wait: f64,
    /// Position error treated as divergence, m.
    pub divergence_limit: f64,
    pub controller: ControllerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            high_rate: 100.0,
            low_rate: 500.0,
            delay: 0.02,
            noise_position: 1e-3,
            noise_attitude: 1e-3,
            seed: 0,
            grasp: GraspSpring::default(),
            attach_distance: 0.02,
            attach_speed: 0.1,
            settle_time: 1.0,
            grasp_wait: 3.0,
            divergence_limit: 0.5,
            controller: ControllerConfig::default(),
        }
    }
}

fn ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() < 1e-9).then_some(n as usize)
}

impl SimConfig {
    /// Physics steps per outer-loop tick.
    pub fn high_every(&self) -> usize {
        ratio(1.0 / self.high_rate, self.dt).expect("validated")
    }

    /// Physics steps per inner-loop tick.
    pub fn low_every(&self) -> usize {
        ratio(1.0 / self.low_rate, self.dt).expect("validated")
    }

    /// Outer-loop ticks of command delay.
    pub fn delay_ticks(&self) -> usize {
        (self.delay * self.high_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.high_rate > 0.0 && self.low_rate > 0.0) {
            return bad("rates must be positive");
        }
        if ratio(1.0 / self.high_rate, self.dt).is_none() || ratio(1.0 / self.low_rate, self.dt).is_none() {
            return bad("controller periods must be whole multiples of dt");
        }
        let d = self.delay * self.high_rate;
        if self.delay < 0.0 || (d - d.round()).abs() > 1e-9 {
            return bad("delay must be a non-negative multiple of the outer-loop period");
        }
        if self.noise_position < 0.0 || self.noise_attitude < 0.0 {
            return bad("noise std must be non-negative");
        }
        if self.attach_distance <= 0.0 || self.attach_speed <= 0.0 || self.divergence_limit <= 0.0 {
            return bad("thresholds must be positive");
        }
        if self.settle_time < 0.0 || self.grasp_wait < 0.0 {
            return bad("hold times must be non-negative");
        }
        self.grasp.validate().map_err(SimError::Config)?;
        self.controller.validate().map_err(SimError::Config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rates() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!((c.high_every(), c.low_every(), c.delay_ticks()), (10, 2, 2));
        let bad = SimConfig {
            delay: 0.015,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
