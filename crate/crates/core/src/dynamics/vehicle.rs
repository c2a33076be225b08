//! Simplified flying-vehicle model: translational and rotational rigid-body
//! equations with a configuration-dependent inertia and the gravity torque of
//! the shifted centre of mass.

use nalgebra::{DVector, Matrix3, Vector3, Vector4, Vector6};

use crate::error::DynamicsError;
use crate::kinematics::ChainState;
use crate::math;
use crate::platform::{parallel_axis, PlatformParams, VehicleParams};

use super::arm::ArmModel;

/// Vehicle pose and twist. Attitude is kept as a rotation matrix (world from
/// body) so flips integrate without Euler singularities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub p: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub v: Vector3<f64>,
    /// Body-frame angular velocity.
    pub omega: Vector3<f64>,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            p: Vector3::zeros(),
            rotation: Matrix3::identity(),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }
}

impl VehicleState {
    pub fn from_rpy(p: Vector3<f64>, rpy: Vector3<f64>, v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self {
            p,
            rotation: math::rpy_to_matrix(&rpy),
            v,
            omega,
        }
    }

    pub fn rpy(&self) -> Vector3<f64> {
        math::matrix_to_rpy(&self.rotation)
    }
}

/// Gimbal-lock guard for the Euler-rate conversion.
pub const PITCH_GUARD: f64 = std::f64::consts::FRAC_PI_2 - 0.01;

/// `θ̇` from body rates for roll-pitch-yaw angles.
pub fn euler_rates(rpy: &Vector3<f64>, omega: &Vector3<f64>) -> Result<Vector3<f64>, DynamicsError> {
    let (phi, theta) = (rpy.x, rpy.y);
    if theta.abs() >= PITCH_GUARD {
        return Err(DynamicsError::GimbalLock(theta));
    }
    let (sp, cp, tt, ct) = (phi.sin(), phi.cos(), theta.tan(), theta.cos());
    let w = Matrix3::new(1.0, sp * tt, cp * tt, 0.0, cp, -sp, 0.0, sp / ct, cp / ct);
    Ok(w * omega)
}

/// Per-generator thrust magnitude `t`, tilt `alpha` and twist `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThrustCommand {
    pub t: Vector4<f64>,
    pub alpha: Vector4<f64>,
    pub beta: Vector4<f64>,
}

impl ThrustCommand {
    pub fn uniform(t: f64) -> Self {
        Self {
            t: Vector4::repeat(t),
            ..Default::default()
        }
    }
}

/// Rotation from generator `i`'s frame to the body frame: tilt `alpha` about
/// the arm tube, then twist `beta` about the (tilted) in-plane perpendicular.
pub fn gimbal_rotation(params: &VehicleParams, i: usize, alpha: f64, beta: f64) -> Matrix3<f64> {
    let rz = math::axis_angle(&Vector3::z(), params.generator_azimuth(i));
    rz * math::axis_angle(&Vector3::x(), alpha) * math::axis_angle(&Vector3::y(), beta)
}

/// Unit thrust direction of generator `i` in the body frame.
pub fn thrust_direction(params: &VehicleParams, i: usize, alpha: f64, beta: f64) -> Vector3<f64> {
    let tube = params.generator_offsets()[i] / params.l_m;
    let perp = Vector3::z().cross(&tube);
    (Vector3::z() * alpha.cos() - perp * alpha.sin()) * beta.cos() + tube * beta.sin()
}

/// Gimbal angles pointing generator `i` along `dir` (principal branch,
/// `beta` in `[-pi/2, pi/2]`).
pub fn gimbal_angles(params: &VehicleParams, i: usize, dir: &Vector3<f64>) -> (f64, f64) {
    let tube = params.generator_offsets()[i] / params.l_m;
    let perp = Vector3::z().cross(&tube);
    let n = dir.norm();
    if n < 1e-15 {
        return (0.0, 0.0);
    }
    let d = dir / n;
    let beta = d.dot(&tube).clamp(-1.0, 1.0).asin();
    let alpha = (-d.dot(&perp)).atan2(d.z);
    (alpha, beta)
}

/// Body wrench `[force; torque]` produced by a thrust command.
pub fn vehicle_wrench(params: &VehicleParams, cmd: &ThrustCommand) -> Vector6<f64> {
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for (i, d) in params.generator_offsets().iter().enumerate() {
        let f = gimbal_rotation(params, i, cmd.alpha[i], cmd.beta[i]) * Vector3::z() * cmd.t[i];
        torque += d.cross(&f);
        force += f;
    }
    Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z)
}

/// Whole-platform inertia (about the body origin, body axes) and the arm
/// links' first mass moment `Σ m_j r_j`.
/// Mass, CoM position, rotation and inertia of one arm link, body frame.
type ArmBody = (f64, Vector3<f64>, Matrix3<f64>, Matrix3<f64>);

#[derive(Debug, Clone)]
pub struct VehicleModel {
    pub params: PlatformParams,
    arm: ArmModel,
}

impl VehicleModel {
    pub fn new(params: PlatformParams) -> Self {
        let arm = ArmModel::new(&params);
        Self { params, arm }
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    pub fn mass(&self) -> f64 {
        self.params.total_mass()
    }

    pub fn g(&self) -> f64 {
        self.params.vehicle.g
    }

    /// Pose of every arm link's centre of mass in the body frame, with its
    /// mass, rotation and inertia.
    fn arm_bodies(&self, q: &Vector4<f64>) -> Vec<ArmBody> {
        let chain = self.arm.chain();
        let poses = chain
            .link_poses(&ChainState(DVector::from_column_slice(q.as_slice())))
            .expect("arm state has four values");
        let mount = self.params.arm_mount();
        chain
            .links()
            .iter()
            .zip(poses)
            .filter(|(l, _)| l.mass > 0.0 || l.inertia != Matrix3::zeros())
            .map(|(l, p)| {
                let pose = mount * p;
                (l.mass, pose.transform_point(&l.com), pose.rotation, l.inertia)
            })
            .collect()
    }

    pub fn composite_inertia(&self, q: &Vector4<f64>) -> Matrix3<f64> {
        let mut j = self.params.vehicle.vehicle_inertia();
        for (m, r, rot, inertia) in self.arm_bodies(q) {
            j += rot * inertia * rot.transpose() + parallel_axis(m, &r);
        }
        j
    }

    /// Platform centre of mass in the body frame.
    pub fn com_offset(&self, q: &Vector4<f64>) -> Vector3<f64> {
        let moment: Vector3<f64> = self.arm_bodies(q).iter().map(|(m, r, _, _)| r * *m).sum();
        moment / self.mass()
    }

    /// `τ_g = r_com × (m R_WBᵀ g_world)` with `g_world = (0, 0, -g)`.
    pub fn gravity_torque(&self, q: &Vector4<f64>, rotation: &Matrix3<f64>) -> Vector3<f64> {
        let g_body = rotation.transpose() * Vector3::new(0.0, 0.0, -self.g());
        self.com_offset(q).cross(&(g_body * self.mass()))
    }

    /// Gravitational potential of the platform, measured at the CoM.
    pub fn potential_energy(&self, p: &Vector3<f64>, rotation: &Matrix3<f64>, q: &Vector4<f64>) -> f64 {
        self.mass() * self.g() * (p.z + (rotation * self.com_offset(q)).z)
    }

    /// `m v̇ = R u_f − m g ẑ`, `J ω̇ = u_τ + τ_g − ω × J ω`.
    pub fn vehicle_accel(
        &self,
        q: &Vector4<f64>,
        state: &VehicleState,
        u: &Vector6<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let m = self.mass();
        let uf = u.fixed_rows::<3>(0).into_owned();
        let ut = u.fixed_rows::<3>(3).into_owned();
        let vdot = state.rotation * uf / m - Vector3::new(0.0, 0.0, self.g());
        let j = self.composite_inertia(q);
        let rhs = ut + self.gravity_torque(q, &state.rotation) - state.omega.cross(&(j * state.omega));
        let wdot = j.cholesky().expect("platform inertia is positive definite").solve(&rhs);
        (vdot, wdot)
    }
}
