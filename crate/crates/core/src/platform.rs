//! Physical description of the aerial manipulator.
//!
//! Masses, inertias, arm length and thrust limit default to the values of the
//! built platform. Arm link geometry, the gripper link mass and collision
//! shapes are not published and use our own desk-scale values.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionPrimitive, Shape};
use crate::error::ConfigError;
use crate::kinematics::{Joint, KinematicChain, Link};
use crate::transform::RigidTransform;

const KG_CM2: f64 = 1e-4;

/// Flying-vehicle parameters, in the units of the published parameter table
/// (inertias in kg·cm²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub m0_kg: f64,
    pub mi_kg: f64,
    pub diag_i0_kg_cm2: [f64; 3],
    pub diag_ii_kg_cm2: [f64; 3],
    pub l_m: f64,
    pub t_max_n: f64,
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m0_kg: 0.168,
            mi_kg: 0.222,
            diag_i0_kg_cm2: [0.30, 0.30, 0.60],
            diag_ii_kg_cm2: [2.23, 2.84, 4.51],
            l_m: 0.21,
            t_max_n: 2.6,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    /// Generator centres in the body frame ("+" layout: +x, +y, -x, -y).
    pub fn generator_offsets(&self) -> [Vector3<f64>; 4] {
        std::array::from_fn(|i| {
            let psi = self.generator_azimuth(i);
            Vector3::new(psi.cos(), psi.sin(), 0.0) * self.l_m
        })
    }

    /// Azimuth of generator `i`'s arm tube about body z.
    pub fn generator_azimuth(&self, i: usize) -> f64 {
        i as f64 * std::f64::consts::FRAC_PI_2
    }

    pub fn frame_inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.diag_i0_kg_cm2)) * KG_CM2
    }

    /// Inertia of generator `i` about its own centre in body axes; its local
    /// x axis runs along the arm tube.
    pub fn generator_inertia(&self, i: usize) -> Matrix3<f64> {
        let rz = crate::math::axis_angle(&Vector3::z(), self.generator_azimuth(i));
        rz * Matrix3::from_diagonal(&Vector3::from(self.diag_ii_kg_cm2)) * KG_CM2 * rz.transpose()
    }

    pub fn vehicle_mass(&self) -> f64 {
        self.m0_kg + 4.0 * self.mi_kg
    }

    /// Per-generator thrust limit (four propellers each).
    pub fn generator_thrust_max(&self) -> f64 {
        4.0 * self.t_max_n
    }

    /// Frame plus generators about the body origin.
    pub fn vehicle_inertia(&self) -> Matrix3<f64> {
        let mut j = self.frame_inertia();
        for (i, d) in self.generator_offsets().iter().enumerate() {
            j += self.generator_inertia(i) + parallel_axis(self.mi_kg, d);
        }
        j
    }
}

/// Point-mass contribution `m (|r|² I - r rᵀ)`.
pub fn parallel_axis(m: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    (Matrix3::identity() * r.norm_squared() - r * r.transpose()) * m
}

/// Manipulator parameters. Link `j` hangs along its local -z axis at
/// `q = 0`, so the zero configuration points the arm straight down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmParams {
    /// Link masses: three arm links then the gripper.
    pub masses_kg: [f64; 4],
    pub diag_inertia_kg_cm2: [[f64; 3]; 4],
    /// Arm base below the body origin (m).
    pub mount_offset_m: f64,
    /// Joint-to-joint lengths of links 1..3, then gripper length to the tool point.
    pub lengths_m: [f64; 4],
    /// Centre of mass of each link along its length, as a fraction.
    pub com_fraction: [f64; 4],
    pub pitch_limit_rad: f64,
    pub roll_limit_rad: f64,
    /// Joint speed (rad/s) and acceleration (rad/s²) limits.
    pub vel_limit: f64,
    pub acc_limit: f64,
    pub link_radius_m: f64,
    /// Reflected rotor inertia of each geared joint servo (kg·m²).
    pub armature_kg_m2: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            masses_kg: [0.044, 0.040, 0.043, 0.027],
            diag_inertia_kg_cm2: [[0.22, 0.21, 0.04], [0.22, 0.19, 0.06], [0.82, 0.80, 0.15], [0.05, 0.05, 0.02]],
            mount_offset_m: 0.04,
            lengths_m: [0.10, 0.10, 0.06, 0.05],
            com_fraction: [0.5, 0.5, 0.5, 0.4],
            pitch_limit_rad: 0.9,
            roll_limit_rad: std::f64::consts::PI,
            vel_limit: 2.0,
            acc_limit: 8.0,
            link_radius_m: 0.015,
            armature_kg_m2: 5e-4,
        }
    }
}

impl ArmParams {
    pub fn total_mass(&self) -> f64 {
        self.masses_kg.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PlatformParams {
    pub vehicle: VehicleParams,
    pub arm: ArmParams,
}

pub const BODY_LINK: &str = "body";
pub const ARM_BASE_LINK: &str = "arm_base";
pub const EE_LINK: &str = "ee";
pub const ARM_LINKS: [&str; 4] = ["link1", "link2", "link3", "gripper"];
pub const ARM_JOINTS: [&str; 4] = ["q1", "q2", "q3", "q4"];

impl PlatformParams {
    pub fn total_mass(&self) -> f64 {
        self.vehicle.vehicle_mass() + self.arm.total_mass()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: p.display().to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    /// Arm chain rooted at the arm base (fixed to the body), ending at the
    /// tool point `ee`. Joints q1..q3 pitch about local y, q4 rolls about the
    /// tool axis.
    pub fn arm_chain(&self) -> KinematicChain {
        let (links, joints) = self.arm_parts();
        let mut all = vec![Link::massless(ARM_BASE_LINK)];
        all.extend(links);
        KinematicChain::new(all, joints).expect("arm parameters produce a valid chain")
    }

    fn arm_parts(&self) -> (Vec<Link>, Vec<Joint>) {
        let a = &self.arm;
        let mut links = Vec::new();
        let mut joints = Vec::new();
        let mut prev_len = 0.0;
        for i in 0..4 {
            let axis = if i < 3 { Vector3::y() } else { Vector3::z() };
            let lim = if i < 3 { a.pitch_limit_rad } else { a.roll_limit_rad };
            joints.push(
                Joint::revolute(
                    ARM_JOINTS[i],
                    RigidTransform::from_translation(Vector3::new(0.0, 0.0, -prev_len)),
                    axis,
                    [-lim, lim],
                )
                .with_rate_limits(a.vel_limit, a.acc_limit),
            );
            let len = a.lengths_m[i];
            let mut geoms = Vec::new();
            if i < 2 {
                geoms.push(CollisionPrimitive::new(
                    &format!("{}_capsule", ARM_LINKS[i]),
                    Shape::Capsule {
                        radius: a.link_radius_m,
                        half_length: 0.5 * len,
                    },
                    ARM_LINKS[i],
                    RigidTransform::from_translation(Vector3::new(0.0, 0.0, -0.5 * len)),
                ));
            }
            links.push(Link {
                name: ARM_LINKS[i].to_string(),
                mass: a.masses_kg[i],
                com: Vector3::new(0.0, 0.0, -a.com_fraction[i] * len),
                inertia: Matrix3::from_diagonal(&Vector3::from(a.diag_inertia_kg_cm2[i])) * KG_CM2,
                collision_geoms: geoms,
            });
            prev_len = len;
        }
        joints.push(Joint::fixed(
            "tool",
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, -prev_len)),
        ));
        links.push(Link::massless(EE_LINK));
        (links, joints)
    }

    /// Body link (frame plus generators lumped) with the arm attached below.
    pub fn robot_chain(&self) -> KinematicChain {
        let v = &self.vehicle;
        let mut geoms = vec![CollisionPrimitive::new(
            "frame",
            Shape::Sphere { radius: 0.05 },
            BODY_LINK,
            RigidTransform::identity(),
        )];
        for (i, d) in v.generator_offsets().iter().enumerate() {
            geoms.push(CollisionPrimitive::new(
                &format!("generator{}", i + 1),
                Shape::Sphere { radius: 0.06 },
                BODY_LINK,
                RigidTransform::from_translation(*d),
            ));
        }
        let body = Link {
            name: BODY_LINK.to_string(),
            mass: v.vehicle_mass(),
            com: Vector3::zeros(),
            inertia: v.vehicle_inertia(),
            collision_geoms: geoms,
        };
        let (arm_links, arm_joints) = self.arm_parts();
        let mut links = vec![body, Link::massless(ARM_BASE_LINK)];
        links.extend(arm_links);
        let mut joints = vec![Joint::fixed(
            "arm_mount",
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, -self.arm.mount_offset_m)),
        )];
        joints.extend(arm_joints);
        KinematicChain::new(links, joints).expect("platform parameters produce a valid chain")
    }

    /// Arm base pose in the body frame.
    pub fn arm_mount(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, -self.arm.mount_offset_m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_sum_to_platform_mass() {
        let p = PlatformParams::default();
        assert_relative_eq!(p.total_mass(), 1.21, epsilon = 1e-12);
        assert_relative_eq!(p.vehicle.generator_thrust_max(), 10.4, epsilon = 1e-12);
        for d in p.vehicle.generator_offsets() {
            assert_relative_eq!(d.norm(), 0.21, epsilon = 1e-12);
        }
    }

    #[test]
    fn robot_chain_has_four_dof() {
        let p = PlatformParams::default();
        assert_eq!(p.robot_chain().dof(), 4);
        assert_eq!(p.arm_chain().dof(), 4);
        assert_eq!(p.robot_chain().tip_link(), EE_LINK);
    }
}
