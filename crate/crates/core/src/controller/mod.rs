//! Hierarchical tracking control: a feedback-linearising wrench loop for the
//! vehicle, minimum-norm thrust allocation, per-generator actuator loops and
//! computed-torque control of the arm.

mod actuator;
mod allocation;
mod arm;
mod tracking;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub use actuator::{low_level_actuator, ActuatorConfig, ActuatorRates, LowLevelController};
pub use allocation::{allocate, allocate_near, allocation_matrix, Allocation};
pub use arm::{arm_torque, ArmController, ArmReference};
pub use tracking::{
    high_level_wrench, tracking_errors, virtual_inputs, HighLevelController, TrackingErrors, VehicleReference,
    WrenchCommand,
};

/// Diagonal gain triple `(K1, K2, K3)` acting on rate, position and
/// integral errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainTriple<V> {
    pub k1: V,
    pub k2: V,
    pub k3: V,
}

impl GainTriple<Vector3<f64>> {
    pub fn uniform(k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            k1: Vector3::repeat(k1),
            k2: Vector3::repeat(k2),
            k3: Vector3::repeat(k3),
        }
    }
}

impl GainTriple<Vector4<f64>> {
    pub fn uniform(k1: f64, k2: f64, k3: f64) -> Self {
        Self {
            k1: Vector4::repeat(k1),
            k2: Vector4::repeat(k2),
            k3: Vector4::repeat(k3),
        }
    }
}

/// Feedback gains. The defaults place the roots of each error polynomial
/// `s³ + k1 s² + k2 s + k3` at {-2,-3,-4} (translation), {-4,-6,-8}
/// (rotation) and {-8,-10,-12} (arm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gains {
    pub translation: GainTriple<Vector3<f64>>,
    pub rotation: GainTriple<Vector3<f64>>,
    pub arm: GainTriple<Vector4<f64>>,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            translation: GainTriple::<Vector3<f64>>::uniform(9.0, 26.0, 24.0),
            rotation: GainTriple::<Vector3<f64>>::uniform(18.0, 104.0, 192.0),
            arm: GainTriple::<Vector4<f64>>::uniform(30.0, 296.0, 960.0),
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.translation.k1,
            self.translation.k2,
            self.translation.k3,
            self.rotation.k1,
            self.rotation.k2,
            self.rotation.k3,
        ];
        let arm = [self.arm.k1, self.arm.k2, self.arm.k3];
        let ok = all.iter().flat_map(|v| v.iter()).chain(arm.iter().flat_map(|v| v.iter()));
        for k in ok {
            if !(k.is_finite() && *k >= 0.0) {
                return Err(format!("gain {k} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Roots of the closed-loop error polynomial of one axis.
    pub fn characteristic_roots(k1: f64, k2: f64, k3: f64) -> Vec<nalgebra::Complex<f64>> {
        let companion = nalgebra::Matrix3::new(-k1, -k2, -k3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        companion.complex_eigenvalues().iter().copied().collect()
    }
}

/// Gains, integrator clamps and actuator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub gains: Gains,
    /// Symmetric clamp on every error integral.
    pub integral_limit: f64,
    pub actuator: ActuatorConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            integral_limit: 1.0,
            actuator: ActuatorConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.gains.validate()?;
        if !(self.integral_limit.is_finite() && self.integral_limit >= 0.0) {
            return Err("integral_limit must be finite and non-negative".into());
        }
        self.actuator.validate()
    }
}

fn clamp_sym<const N: usize>(v: &nalgebra::SVector<f64, N>, lim: f64) -> nalgebra::SVector<f64, N> {
    v.map(|x| x.clamp(-lim, lim))
}
