use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionPrimitive;
use crate::error::KinematicsError;
use crate::math;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

/// A joint between consecutive links.
///
/// The child frame is `origin * motion(q) * child_offset`. Chains loaded
/// from description files always have an identity `child_offset`; inversion
/// moves the original origin there so link frames are preserved exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    #[serde(default = "z_axis")]
    pub axis: Vector3<f64>,
    #[serde(default)]
    pub origin: RigidTransform,
    #[serde(default, skip_serializing_if = "is_identity")]
    pub child_offset: RigidTransform,
    #[serde(default = "open_limits")]
    pub limits: [f64; 2],
    #[serde(default = "unbounded")]
    pub vel_limit: f64,
    #[serde(default = "unbounded")]
    pub acc_limit: f64,
    /// Set on joints whose parent/child roles were swapped by inversion.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reversed: bool,
}

fn z_axis() -> Vector3<f64> {
    Vector3::z()
}
fn open_limits() -> [f64; 2] {
    [-1e9, 1e9]
}
fn unbounded() -> f64 {
    1e9
}
fn is_identity(t: &RigidTransform) -> bool {
    *t == RigidTransform::identity()
}

impl Joint {
    pub fn fixed(name: &str, origin: RigidTransform) -> Self {
        Self {
            name: name.to_string(),
            kind: JointKind::Fixed,
            axis: Vector3::z(),
            origin,
            child_offset: RigidTransform::identity(),
            limits: [0.0, 0.0],
            vel_limit: 0.0,
            acc_limit: 0.0,
            reversed: false,
        }
    }

    pub fn revolute(name: &str, origin: RigidTransform, axis: Vector3<f64>, limits: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Revolute,
            axis,
            limits,
            vel_limit: unbounded(),
            acc_limit: unbounded(),
            ..Self::fixed(name, origin)
        }
    }

    pub fn prismatic(name: &str, origin: RigidTransform, axis: Vector3<f64>, limits: [f64; 2]) -> Self {
        Self {
            kind: JointKind::Prismatic,
            ..Self::revolute(name, origin, axis, limits)
        }
    }

    pub fn with_rate_limits(mut self, vel: f64, acc: f64) -> Self {
        self.vel_limit = vel;
        self.acc_limit = acc;
        self
    }

    pub fn is_moving(&self) -> bool {
        self.kind != JointKind::Fixed
    }

    /// Motion of the joint frame for joint value `q`.
    pub fn motion(&self, q: f64) -> RigidTransform {
        match self.kind {
            JointKind::Fixed => RigidTransform::identity(),
            JointKind::Revolute => RigidTransform::from_rotation(math::axis_angle(&self.axis, q)),
            JointKind::Prismatic => RigidTransform::from_translation(self.axis * q),
        }
    }

    /// Parent link frame to child link frame.
    pub fn transform(&self, q: f64) -> RigidTransform {
        self.origin * self.motion(q) * self.child_offset
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |reason: &str| KinematicsError::InvalidJoint {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.is_moving() && (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(bad("axis is not unit length"));
        }
        if self.limits[0] > self.limits[1] {
            return Err(bad("limits are not ordered"));
        }
        if self.vel_limit < 0.0 || self.acc_limit < 0.0 {
            return Err(bad("negative rate limit"));
        }
        for t in [&self.origin, &self.child_offset] {
            if t.orthonormality_error() > 1e-9 {
                return Err(bad("transform rotation is not in SO(3)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    #[serde(default)]
    pub mass: f64,
    #[serde(default)]
    pub com: Vector3<f64>,
    #[serde(default)]
    pub inertia: Matrix3<f64>,
    #[serde(default)]
    pub collision_geoms: Vec<CollisionPrimitive>,
}

impl Link {
    pub fn massless(name: &str) -> Self {
        Self {
            name: name.to_string(),
            mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
            collision_geoms: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |reason: &str| KinematicsError::InvalidLink {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.mass < 0.0 {
            return Err(bad("negative mass"));
        }
        if (self.inertia - self.inertia.transpose()).abs().max() > 1e-12 {
            return Err(bad("inertia is not symmetric"));
        }
        let eig = self.inertia.symmetric_eigenvalues();
        let tol = 1e-12 * (1.0 + eig.abs().max());
        if eig.iter().any(|e| *e < -tol) {
            return Err(bad("inertia is not positive semi-definite"));
        }
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        if a + b < c - tol || a + c < b - tol || b + c < a - tol {
            return Err(bad("principal moments violate the triangle inequality"));
        }
        for g in &self.collision_geoms {
            if !g.shape.is_valid() {
                return Err(bad("collision primitive has non-positive dimensions"));
            }
        }
        Ok(())
    }
}

/// Joint values of a chain, one per moving joint in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState(pub DVector<f64>);

impl ChainState {
    pub fn zeros(dof: usize) -> Self {
        Self(DVector::zeros(dof))
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self(DVector::from_column_slice(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Records where a virtual joint joins a robot chain and an object chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    /// Index of the virtual joint in `joints`.
    pub joint_index: usize,
    pub robot_root: String,
}

/// Strictly serial chain: `links[i]` is the parent of `joints[i]`, whose
/// child is `links[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    links: Vec<Link>,
    joints: Vec<Joint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attachment: Option<Attachment>,
}

impl KinematicChain {
    pub fn new(links: Vec<Link>, joints: Vec<Joint>) -> Result<Self, KinematicsError> {
        Self::with_attachment(links, joints, None)
    }

    pub(crate) fn with_attachment(
        links: Vec<Link>,
        joints: Vec<Joint>,
        attachment: Option<Attachment>,
    ) -> Result<Self, KinematicsError> {
        if links.is_empty() {
            return Err(KinematicsError::NotSerial("chain has no links".into()));
        }
        if joints.len() + 1 != links.len() {
            return Err(KinematicsError::NotSerial(format!(
                "{} links need {} joints, got {}",
                links.len(),
                links.len() - 1,
                joints.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in links.iter().map(|l| &l.name).chain(joints.iter().map(|j| &j.name)) {
            if !seen.insert(name.as_str()) {
                return Err(KinematicsError::DuplicateName(name.clone()));
            }
        }
        for l in &links {
            l.validate()?;
        }
        for j in &joints {
            j.validate()?;
        }
        Ok(Self {
            links,
            joints,
            attachment,
        })
    }

    pub fn single_link(link: Link) -> Self {
        Self::new(vec![link], vec![]).expect("a single link is a valid chain")
    }

    pub fn root_link(&self) -> &str {
        &self.links[0].name
    }

    pub fn tip_link(&self) -> &str {
        &self.links[self.links.len() - 1].name
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Adds a collision primitive to `link` (e.g. an object carried on it).
    pub fn add_collision_geom(&mut self, link: &str, geom: CollisionPrimitive) -> Result<(), KinematicsError> {
        let i = self.link_index(link)?;
        self.links[i].collision_geoms.push(geom);
        Ok(())
    }

    pub fn attachment(&self) -> Option<&Attachment> {
        self.attachment.as_ref()
    }

    pub fn dof(&self) -> usize {
        self.joints.iter().filter(|j| j.is_moving()).count()
    }

    pub fn link_index(&self, name: &str) -> Result<usize, KinematicsError> {
        self.links
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| KinematicsError::UnknownLink(name.to_string()))
    }

    pub fn link(&self, name: &str) -> Result<&Link, KinematicsError> {
        Ok(&self.links[self.link_index(name)?])
    }

    pub fn has_link(&self, name: &str) -> bool {
        self.links.iter().any(|l| l.name == name)
    }

    /// Moving joints in state order.
    pub fn moving_joints(&self) -> impl Iterator<Item = &Joint> {
        self.joints.iter().filter(|j| j.is_moving())
    }

    /// State index of every joint (`None` for fixed joints).
    pub fn dof_indices(&self) -> Vec<Option<usize>> {
        let mut k = 0;
        self.joints
            .iter()
            .map(|j| {
                if j.is_moving() {
                    k += 1;
                    Some(k - 1)
                } else {
                    None
                }
            })
            .collect()
    }

    /// State index of a moving joint by name.
    pub fn dof_index(&self, joint: &str) -> Option<usize> {
        let idx = self.dof_indices();
        self.joints
            .iter()
            .position(|j| j.name == joint)
            .and_then(|i| idx[i])
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.moving_joints().map(|j| j.limits[0]))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.moving_joints().map(|j| j.limits[1]))
    }

    pub fn check_state(&self, state: &ChainState) -> Result<(), KinematicsError> {
        if state.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: state.len(),
            });
        }
        Ok(())
    }

    /// Pose of every link in the root frame.
    pub fn link_poses(&self, state: &ChainState) -> Result<Vec<RigidTransform>, KinematicsError> {
        self.check_state(state)?;
        let mut poses = Vec::with_capacity(self.links.len());
        let mut pose = RigidTransform::identity();
        poses.push(pose);
        let mut k = 0;
        for j in &self.joints {
            let q = if j.is_moving() {
                k += 1;
                state.0[k - 1]
            } else {
                0.0
            };
            pose = pose * j.transform(q);
            poses.push(pose);
        }
        Ok(poses)
    }

    /// Pose of `target_link` in the root frame.
    pub fn forward_kinematics(
        &self,
        state: &ChainState,
        target_link: &str,
    ) -> Result<RigidTransform, KinematicsError> {
        let idx = self.link_index(target_link)?;
        self.check_state(state)?;
        let mut pose = RigidTransform::identity();
        let mut k = 0;
        for j in &self.joints[..idx] {
            let q = if j.is_moving() {
                k += 1;
                state.0[k - 1]
            } else {
                0.0
            };
            pose = pose * j.transform(q);
        }
        Ok(pose)
    }

    /// Geometric Jacobian (linear rows, then angular rows) of the origin of
    /// `target_link`, in the root frame.
    pub fn jacobian(&self, state: &ChainState, target_link: &str) -> Result<DMatrix<f64>, KinematicsError> {
        let target = self.link_index(target_link)?;
        self.check_state(state)?;
        self.point_jacobian(state, target, &Vector3::zeros())
    }

    /// Jacobian of a point fixed in link `link_idx` (given in that link's frame).
    pub fn point_jacobian(
        &self,
        state: &ChainState,
        link_idx: usize,
        local_point: &Vector3<f64>,
    ) -> Result<DMatrix<f64>, KinematicsError> {
        self.check_state(state)?;
        let mut jac = DMatrix::zeros(6, self.dof());
        let mut pose = RigidTransform::identity();
        let mut frames = Vec::new();
        let mut k = 0;
        for (i, j) in self.joints.iter().enumerate() {
            let q = if j.is_moving() { state.0[k] } else { 0.0 };
            let joint_frame = pose * j.origin;
            if j.is_moving() {
                if i < link_idx {
                    frames.push((k, j.kind, joint_frame.rotation * j.axis, joint_frame.translation));
                }
                k += 1;
            }
            pose = joint_frame * j.motion(q) * j.child_offset;
            if i + 1 == link_idx {
                break;
            }
        }
        let point = if link_idx == 0 {
            *local_point
        } else {
            pose.transform_point(local_point)
        };
        for (col, kind, axis, origin) in frames {
            match kind {
                JointKind::Revolute => {
                    let lin = axis.cross(&(point - origin));
                    jac.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
                    jac.fixed_view_mut::<3, 1>(3, col).copy_from(&axis);
                }
                JointKind::Prismatic => {
                    jac.fixed_view_mut::<3, 1>(0, col).copy_from(&axis);
                }
                JointKind::Fixed => {}
            }
        }
        Ok(jac)
    }

    /// Links separated by at most one moving joint are adjacent.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = (a.min(b), a.max(b));
        self.joints[lo..hi].iter().filter(|j| j.is_moving()).count() <= 1
    }
}
