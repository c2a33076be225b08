use nalgebra::{Matrix3, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleModel, VehicleState};
use crate::math::vee;

use super::{clamp_sym, Gains};

/// Desired body wrench in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchCommand {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl WrenchCommand {
    pub fn from_vector(u: &Vector6<f64>) -> Self {
        Self {
            force: u.fixed_rows::<3>(0).into_owned(),
            torque: u.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let (f, t) = (self.force, self.torque);
        Vector6::new(f.x, f.y, f.z, t.x, t.y, t.z)
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|x| x.is_finite())
    }
}

/// Reference pose, twist and accelerations. `omega` and `omega_dot` are in
/// the reference body frame; `v` and `v_dot` in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleReference {
    pub state: VehicleState,
    pub v_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

impl VehicleReference {
    /// Stationary reference at `state`'s pose.
    pub fn hold(state: &VehicleState) -> Self {
        Self {
            state: VehicleState {
                v: Vector3::zeros(),
                omega: Vector3::zeros(),
                ..*state
            },
            v_dot: Vector3::zeros(),
            omega_dot: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrors {
    pub e_p: Vector3<f64>,
    pub e_v: Vector3<f64>,
    pub e_theta: Vector3<f64>,
    pub e_omega: Vector3<f64>,
    /// Clamped integrals of `e_p` and `e_theta`.
    pub int_p: Vector3<f64>,
    pub int_theta: Vector3<f64>,
}

/// Position, velocity, attitude and rate errors (integrals left at zero).
pub fn tracking_errors(state: &VehicleState, reference: &VehicleState) -> TrackingErrors {
    let (r, rr) = (state.rotation, reference.rotation);
    let rel: Matrix3<f64> = r.transpose() * rr;
    TrackingErrors {
        e_p: reference.p - state.p,
        e_v: reference.v - state.v,
        e_theta: vee(&(rel - rel.transpose())) * 0.5,
        e_omega: rel * reference.omega - state.omega,
        ..Default::default()
    }
}

/// `u_v = v̇ʳ + K1 e_v + K2 e_p + K3 ∫e_p`, and likewise for rotation.
pub fn virtual_inputs(
    errs: &TrackingErrors,
    v_dot_ref: &Vector3<f64>,
    omega_dot_ref: &Vector3<f64>,
    gains: &Gains,
) -> (Vector3<f64>, Vector3<f64>) {
    let t = &gains.translation;
    let w = &gains.rotation;
    let u_v = v_dot_ref + t.k1.component_mul(&errs.e_v) + t.k2.component_mul(&errs.e_p) + t.k3.component_mul(&errs.int_p);
    let u_w = omega_dot_ref
        + w.k1.component_mul(&errs.e_omega)
        + w.k2.component_mul(&errs.e_theta)
        + w.k3.component_mul(&errs.int_theta);
    (u_v, u_w)
}

/// Wrench that turns the vehicle dynamics into `v̇ = u_v`, `ω̇ = u_ω`.
pub fn high_level_wrench(
    model: &VehicleModel,
    q_arm: &Vector4<f64>,
    state: &VehicleState,
    u_v: &Vector3<f64>,
    u_w: &Vector3<f64>,
) -> WrenchCommand {
    let m = model.mass();
    let force = state.rotation.transpose() * (u_v + Vector3::new(0.0, 0.0, model.g())) * m;
    let j = model.composite_inertia(q_arm);
    let tau_g = model.gravity_torque(q_arm, &state.rotation);
    let torque = j * u_w - (tau_g - state.omega.cross(&(j * state.omega)));
    WrenchCommand { force, torque }
}

/// The outer loop with its integrator state.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelController {
    pub gains: Gains,
    pub integral_limit: f64,
    int_p: Vector3<f64>,
    int_theta: Vector3<f64>,
}

impl HighLevelController {
    pub fn new(gains: Gains, integral_limit: f64) -> Self {
        Self {
            gains,
            integral_limit,
            int_p: Vector3::zeros(),
            int_theta: Vector3::zeros(),
        }
    }

    pub fn reset(&mut self) {
        self.int_p = Vector3::zeros();
        self.int_theta = Vector3::zeros();
    }

    /// One controller tick of length `dt`: integrate errors, then compute the
    /// wrench command.
    pub fn update(
        &mut self,
        model: &VehicleModel,
        q_arm: &Vector4<f64>,
        state: &VehicleState,
        reference: &VehicleReference,
        dt: f64,
    ) -> (WrenchCommand, TrackingErrors) {
        let mut e = tracking_errors(state, &reference.state);
        self.int_p = clamp_sym(&(self.int_p + e.e_p * dt), self.integral_limit);
        self.int_theta = clamp_sym(&(self.int_theta + e.e_theta * dt), self.integral_limit);
        e.int_p = self.int_p;
        e.int_theta = self.int_theta;
        let rel = state.rotation.transpose() * reference.state.rotation;
        let (u_v, u_w) = virtual_inputs(&e, &reference.v_dot, &(rel * reference.omega_dot), &self.gains);
        (high_level_wrench(model, q_arm, state, &u_v, &u_w), e)
    }
}
