//! Virtual-kinematic-chain construction: inversion, virtual joints and the
//! virtual floating base.

use nalgebra::Vector3;

use super::chain::{Attachment, ChainState, Joint, KinematicChain, Link};
use crate::error::KinematicsError;
use crate::transform::RigidTransform;

/// Re-roots `chain` at `new_root`.
///
/// The joint between two reversed links keeps its kind and axis; its value
/// is negated, so limits become `[-max, -min]`, and the origin and child
/// offset swap places as their inverses. Link frames are untouched.
pub fn invert_chain(chain: &KinematicChain, new_root: &str) -> Result<KinematicChain, KinematicsError> {
    let k = chain.link_index(new_root)?;
    if k == 0 {
        return Ok(chain.clone());
    }
    if chain.attachment().is_some() {
        return Err(KinematicsError::AlreadyAttached);
    }
    if k + 1 != chain.links().len() {
        return Err(KinematicsError::NotSerial(format!(
            "re-rooting at interior link `{new_root}` would branch"
        )));
    }
    let links: Vec<Link> = chain.links().iter().rev().cloned().collect();
    let joints: Vec<Joint> = chain.joints().iter().rev().map(reverse_joint).collect();
    KinematicChain::new(links, joints)
}

fn reverse_joint(j: &Joint) -> Joint {
    Joint {
        origin: j.child_offset.inverse(),
        child_offset: j.origin.inverse(),
        limits: [-j.limits[1], -j.limits[0]],
        reversed: !j.reversed,
        ..j.clone()
    }
}

/// Name given to the fixed joint inserted by [`attach_virtual_joint`].
pub fn virtual_joint_name(ee_link: &str, object_root: &str) -> String {
    format!("{ee_link}__{object_root}__virtual")
}

/// Joins `object` (already rooted at its attachable link) to the robot's
/// end-effector with a fixed virtual joint.
pub fn attach_virtual_joint(
    robot: &KinematicChain,
    ee_link: &str,
    object: &KinematicChain,
    grasp_offset: &RigidTransform,
) -> Result<KinematicChain, KinematicsError> {
    robot.link_index(ee_link)?;
    if robot.attachment().is_some() || object.attachment().is_some() {
        return Err(KinematicsError::AlreadyAttached);
    }
    if robot.tip_link() != ee_link {
        return Err(KinematicsError::NotSerial(format!(
            "end-effector `{ee_link}` is not the tip of the robot chain"
        )));
    }
    let mut links = robot.links().to_vec();
    links.extend(object.links().iter().cloned());
    let mut joints = robot.joints().to_vec();
    let joint_index = joints.len();
    joints.push(Joint::fixed(
        &virtual_joint_name(ee_link, object.root_link()),
        *grasp_offset,
    ));
    joints.extend(object.joints().iter().cloned());
    KinematicChain::with_attachment(
        links,
        joints,
        Some(Attachment {
            joint_index,
            robot_root: robot.root_link().to_string(),
        }),
    )
}

/// Splits a VKC back into `(robot, object)`.
pub fn detach_virtual_joint(vkc: &KinematicChain) -> Result<(KinematicChain, KinematicChain), KinematicsError> {
    let at = vkc.attachment().ok_or(KinematicsError::NoVirtualJoint)?;
    let ji = at.joint_index;
    let robot = KinematicChain::new(vkc.links()[..=ji].to_vec(), vkc.joints()[..ji].to_vec())?;
    let object = KinematicChain::new(vkc.links()[ji + 1..].to_vec(), vkc.joints()[ji + 1..].to_vec())?;
    Ok((robot, object))
}

/// Grasp transform stored on the virtual joint of an attached chain.
pub fn grasp_offset(vkc: &KinematicChain) -> Result<RigidTransform, KinematicsError> {
    let at = vkc.attachment().ok_or(KinematicsError::NoVirtualJoint)?;
    Ok(vkc.joints()[at.joint_index].origin)
}

/// Bounds for the six virtual-base joints.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VirtualBaseLimits {
    pub position: [[f64; 2]; 3],
    pub attitude: [[f64; 2]; 3],
    pub linear_vel: f64,
    pub linear_acc: f64,
    pub angular_vel: f64,
    pub angular_acc: f64,
}

impl Default for VirtualBaseLimits {
    fn default() -> Self {
        let tau = std::f64::consts::TAU;
        Self {
            position: [[-10.0, 10.0], [-10.0, 10.0], [0.0, 10.0]],
            attitude: [[-tau, tau], [-tau, tau], [-tau, tau]],
            linear_vel: 1e9,
            linear_acc: 1e9,
            angular_vel: 1e9,
            angular_acc: 1e9,
        }
    }
}

pub const VIRTUAL_BASE_JOINTS: [&str; 6] = ["vb_x", "vb_y", "vb_z", "vb_roll", "vb_pitch", "vb_yaw"];
pub const WORLD_LINK: &str = "world";

/// Prepends the six-joint floating base (x, y, z prismatic, then roll,
/// pitch, yaw revolute about the moving body axes, all centred on the body
/// frame origin).
pub fn build_virtual_base(robot_body: &KinematicChain) -> Result<KinematicChain, KinematicsError> {
    build_virtual_base_with(robot_body, &VirtualBaseLimits::default())
}

pub fn build_virtual_base_with(
    robot_body: &KinematicChain,
    limits: &VirtualBaseLimits,
) -> Result<KinematicChain, KinematicsError> {
    if robot_body.attachment().is_some() {
        return Err(KinematicsError::AlreadyAttached);
    }
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut links = vec![Link::massless(WORLD_LINK)];
    for name in &VIRTUAL_BASE_JOINTS[..5] {
        links.push(Link::massless(&format!("{name}_link")));
    }
    links.extend(robot_body.links().iter().cloned());
    let mut joints = Vec::with_capacity(6 + robot_body.joints().len());
    for i in 0..3 {
        joints.push(
            Joint::prismatic(VIRTUAL_BASE_JOINTS[i], RigidTransform::identity(), axes[i], limits.position[i])
                .with_rate_limits(limits.linear_vel, limits.linear_acc),
        );
    }
    for i in 0..3 {
        joints.push(
            Joint::revolute(VIRTUAL_BASE_JOINTS[3 + i], RigidTransform::identity(), axes[i], limits.attitude[i])
                .with_rate_limits(limits.angular_vel, limits.angular_acc),
        );
    }
    joints.extend(robot_body.joints().iter().cloned());
    KinematicChain::new(links, joints)
}

/// Pose of `to` relative to `from`, composed only from the joints between
/// them (both must lie on the chain, `from` before `to`).
pub fn relative_pose(
    chain: &KinematicChain,
    state: &ChainState,
    from: &str,
    to: &str,
) -> Result<RigidTransform, KinematicsError> {
    let a = chain.link_index(from)?;
    let b = chain.link_index(to)?;
    chain.check_state(state)?;
    let idx = chain.dof_indices();
    let mut pose = RigidTransform::identity();
    let (lo, hi, flip) = if a <= b { (a, b, false) } else { (b, a, true) };
    for (j, k) in chain.joints()[lo..hi].iter().zip(&idx[lo..hi]) {
        let q = k.map(|k| state.0[k]).unwrap_or(0.0);
        pose = pose * j.transform(q);
    }
    Ok(if flip { pose.inverse() } else { pose })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn cabinet() -> KinematicChain {
        let links = vec![Link::massless("base"), Link::massless("door"), Link::massless("handle")];
        let joints = vec![
            Joint::revolute(
                "hinge",
                RigidTransform::from_translation(Vector3::new(0.1, 0.2, 0.3)),
                Vector3::z(),
                [0.0, 1.5],
            ),
            Joint::fixed("handle_mount", RigidTransform::from_translation(Vector3::new(0.0, -0.3, 0.0))),
        ];
        KinematicChain::new(links, joints).unwrap()
    }

    #[test]
    fn single_link_inversion_is_identity() {
        let c = KinematicChain::single_link(Link::massless("toy"));
        assert_eq!(invert_chain(&c, "toy").unwrap(), c);
    }

    #[test]
    fn cabinet_inverted_at_handle() {
        let c = cabinet();
        let inv = invert_chain(&c, "handle").unwrap();
        let names: Vec<_> = inv.links().iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["handle", "door", "base"]);
        assert_eq!(inv.joints()[1].limits, [-1.5, 0.0]);
        assert!(inv.joints()[1].reversed);
        let q = 0.7;
        let fwd = c.forward_kinematics(&ChainState::from_slice(&[q]), "handle").unwrap();
        let back = inv.forward_kinematics(&ChainState::from_slice(&[-q]), "base").unwrap();
        let id = fwd * back;
        assert_relative_eq!(id.rotation, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(id.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn interior_root_rejected() {
        assert!(matches!(invert_chain(&cabinet(), "door"), Err(KinematicsError::NotSerial(_))));
        assert!(matches!(invert_chain(&cabinet(), "nope"), Err(KinematicsError::UnknownLink(_))));
    }

    #[test]
    fn virtual_base_pose() {
        let body = KinematicChain::single_link(Link::massless("body"));
        let vkc = build_virtual_base(&body).unwrap();
        assert_eq!(vkc.dof(), 6);
        let zero = vkc.forward_kinematics(&ChainState::zeros(6), "body").unwrap();
        assert_eq!(zero, RigidTransform::identity());
        let s = ChainState::from_slice(&[1.0, 2.0, 3.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let p = vkc.forward_kinematics(&s, "body").unwrap();
        assert_relative_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0), epsilon = 1e-12);
        assert_relative_eq!(
            p.rotation,
            Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn detach_twice_fails() {
        let robot = KinematicChain::new(
            vec![Link::massless("a"), Link::massless("ee")],
            vec![Joint::revolute("j", RigidTransform::identity(), Vector3::x(), [-1.0, 1.0])],
        )
        .unwrap();
        let obj = KinematicChain::single_link(Link::massless("toy"));
        let vkc = attach_virtual_joint(&robot, "ee", &obj, &RigidTransform::identity()).unwrap();
        assert_eq!(vkc.dof(), 1);
        let (r, o) = detach_virtual_joint(&vkc).unwrap();
        assert_eq!(r, robot);
        assert_eq!(o, obj);
        assert_eq!(detach_virtual_joint(&r), Err(KinematicsError::NoVirtualJoint));
    }
}
