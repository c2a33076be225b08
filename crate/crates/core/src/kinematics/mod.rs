//! Serial kinematic chains and virtual-kinematic-chain operations.

mod chain;
pub mod loader;
mod vkc;

pub use chain::{Attachment, ChainState, Joint, JointKind, KinematicChain, Link};
pub use loader::{load_chain, parse_chain, ChainDesc};
pub use vkc::{
    attach_virtual_joint, build_virtual_base, build_virtual_base_with, detach_virtual_joint, grasp_offset,
    invert_chain, relative_pose, virtual_joint_name, VirtualBaseLimits, VIRTUAL_BASE_JOINTS, WORLD_LINK,
};

use crate::error::KinematicsError;
use crate::transform::RigidTransform;

/// Free-function form of [`KinematicChain::forward_kinematics`].
pub fn forward_kinematics(
    chain: &KinematicChain,
    state: &ChainState,
    target_link: &str,
) -> Result<RigidTransform, KinematicsError> {
    chain.forward_kinematics(state, target_link)
}

/// Free-function form of [`KinematicChain::jacobian`].
pub fn jacobian(
    chain: &KinematicChain,
    state: &ChainState,
    target_link: &str,
) -> Result<nalgebra::DMatrix<f64>, KinematicsError> {
    chain.jacobian(state, target_link)
}
