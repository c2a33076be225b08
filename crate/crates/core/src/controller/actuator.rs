//! Per-generator inner loops: PID on the gimbal angles producing gimbal
//! rates, and a first-order motor lag on thrust.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::dynamics::ThrustCommand;
use crate::math::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorConfig {
    pub gimbal_kp: f64,
    pub gimbal_ki: f64,
    pub gimbal_kd: f64,
    /// rad/s
    pub gimbal_rate_max: f64,
    /// Motor time constant, s.
    pub thrust_tau: f64,
    /// Per-generator thrust ceiling, N.
    pub thrust_max: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            gimbal_kp: 50.0,
            gimbal_ki: 0.0,
            gimbal_kd: 0.0,
            gimbal_rate_max: 30.0,
            thrust_tau: 0.015,
            thrust_max: 4.0 * 2.6,
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let vals = [
            self.gimbal_kp,
            self.gimbal_ki,
            self.gimbal_kd,
            self.gimbal_rate_max,
            self.thrust_tau,
            self.thrust_max,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("actuator settings must be finite and non-negative".into());
        }
        if self.thrust_tau <= 0.0 {
            return Err("thrust_tau must be positive".into());
        }
        Ok(())
    }

    /// Time derivative of the actuator state under held inputs.
    pub fn derivative(&self, input: &ActuatorRates, actual: &ThrustCommand) -> ThrustCommand {
        ThrustCommand {
            t: (input.t_cmd.map(|t| t.clamp(0.0, self.thrust_max)) - actual.t) / self.thrust_tau,
            alpha: input.alpha_rate,
            beta: input.beta_rate,
        }
    }
}

/// Inputs held by the physics between inner-loop ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorRates {
    pub t_cmd: Vector4<f64>,
    pub alpha_rate: Vector4<f64>,
    pub beta_rate: Vector4<f64>,
}

/// Gimbal PID state for all four generators.
#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelController {
    pub config: ActuatorConfig,
    integral: [Vector4<f64>; 2],
    prev_err: Option<[Vector4<f64>; 2]>,
}

impl LowLevelController {
    pub fn new(config: ActuatorConfig) -> Self {
        Self {
            config,
            integral: [Vector4::zeros(); 2],
            prev_err: None,
        }
    }

    /// Gimbal rates and thrust set-point for one inner tick of length `dt`.
    pub fn rates(&mut self, cmd: &ThrustCommand, actual: &ThrustCommand, dt: f64) -> ActuatorRates {
        let c = &self.config;
        let err = [
            (cmd.alpha - actual.alpha).map(wrap_angle),
            (cmd.beta - actual.beta).map(wrap_angle),
        ];
        let mut out = [Vector4::zeros(); 2];
        for k in 0..2 {
            self.integral[k] += err[k] * dt;
            let d = self.prev_err.map_or(Vector4::zeros(), |p| (err[k] - p[k]) / dt);
            let r = err[k] * c.gimbal_kp + self.integral[k] * c.gimbal_ki + d * c.gimbal_kd;
            out[k] = r.map(|x| x.clamp(-c.gimbal_rate_max, c.gimbal_rate_max));
        }
        self.prev_err = Some(err);
        ActuatorRates {
            t_cmd: cmd.t.map(|t| t.clamp(0.0, c.thrust_max)),
            alpha_rate: out[0],
            beta_rate: out[1],
        }
    }

    /// Actuator state after `dt` with the inputs held.
    pub fn step(&mut self, cmd: &ThrustCommand, actual: &ThrustCommand, dt: f64) -> ThrustCommand {
        let r = self.rates(cmd, actual, dt);
        let lag = 1.0 - (-dt / self.config.thrust_tau).exp();
        ThrustCommand {
            t: (actual.t + (r.t_cmd - actual.t) * lag).map(|t| t.clamp(0.0, self.config.thrust_max)),
            alpha: actual.alpha + r.alpha_rate * dt,
            beta: actual.beta + r.beta_rate * dt,
        }
    }
}

/// One inner-loop update from a fresh controller state.
pub fn low_level_actuator(
    config: &ActuatorConfig,
    cmd: &ThrustCommand,
    actual: &ThrustCommand,
    dt: f64,
) -> ThrustCommand {
    LowLevelController::new(*config).step(cmd, actual, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_setpoint_nothing_moves() {
        let c = ActuatorConfig::default();
        let s = ThrustCommand {
            t: Vector4::new(1.0, 2.0, 3.0, 4.0),
            alpha: Vector4::repeat(0.2),
            beta: Vector4::repeat(-0.1),
        };
        assert_eq!(low_level_actuator(&c, &s, &s, 0.002), s);
    }

    #[test]
    fn alpha_step_is_monotone_first_order() {
        let c = ActuatorConfig::default();
        let cmd = ThrustCommand {
            alpha: Vector4::repeat(0.3),
            ..Default::default()
        };
        let mut ll = LowLevelController::new(c);
        let mut x = ThrustCommand::default();
        let dt = 0.002;
        let mut prev = 0.0;
        for _ in 0..(5.0 / c.gimbal_kp / dt) as usize {
            x = ll.step(&cmd, &x, dt);
            assert!(x.alpha[0] >= prev && x.alpha[0] <= 0.3);
            prev = x.alpha[0];
        }
        // five time constants
        assert!((0.3 - x.alpha[0]) < 0.3 * 0.01);
    }

    #[test]
    fn thrust_saturates() {
        let c = ActuatorConfig::default();
        let cmd = ThrustCommand::uniform(50.0);
        let mut x = ThrustCommand::default();
        for _ in 0..500 {
            x = low_level_actuator(&c, &cmd, &x, 0.002);
        }
        assert!((x.t[0] - 10.4).abs() < 1e-9);
    }
}
