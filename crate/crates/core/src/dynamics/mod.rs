//! Platform dynamics: vehicle model with arm-dependent inertia and gravity
//! torque, thrust-generator wrench map, and manipulator dynamics.

mod arm;
mod vehicle;

pub use arm::{mass_matrix, rnea, ArmModel, ArmState, ArmTerms};
pub use vehicle::{
    euler_rates, gimbal_angles, gimbal_rotation, thrust_direction, vehicle_wrench, ThrustCommand, VehicleModel,
    VehicleState, PITCH_GUARD,
};

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4, Vector6};

use crate::error::DynamicsError;
use crate::platform::{PlatformParams, VehicleParams};

pub fn composite_inertia(params: &PlatformParams, arm: &ArmState) -> Matrix3<f64> {
    VehicleModel::new(params.clone()).composite_inertia(&arm.q)
}

pub fn gravity_torque(params: &PlatformParams, arm: &ArmState, rpy: &Vector3<f64>) -> Vector3<f64> {
    VehicleModel::new(params.clone()).gravity_torque(&arm.q, &crate::math::rpy_to_matrix(rpy))
}

pub fn vehicle_accel(
    params: &PlatformParams,
    arm: &ArmState,
    state: &VehicleState,
    u: &Vector6<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    VehicleModel::new(params.clone()).vehicle_accel(&arm.q, state, u)
}

pub fn wrench(params: &VehicleParams, cmd: &ThrustCommand) -> Vector6<f64> {
    vehicle_wrench(params, cmd)
}

pub fn arm_dynamics_terms(params: &PlatformParams, arm: &ArmState) -> ArmTerms {
    ArmModel::new(params).dynamics_terms(arm)
}

pub fn arm_accel(
    params: &PlatformParams,
    arm: &ArmState,
    tau: &Vector4<f64>,
    f_ext: &Vector6<f64>,
    j_ext: &SMatrix<f64, 6, 4>,
) -> Result<Vector4<f64>, DynamicsError> {
    let model = ArmModel::new(params);
    model.accel(arm, tau, f_ext, j_ext, &model.level_gravity())
}
