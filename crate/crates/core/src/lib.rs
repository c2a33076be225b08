//! Sequential aerial-manipulation planning and control.
//!
//! An over-actuated multirotor with a 4-DoF arm is modelled as a single
//! virtual kinematic chain (floating base + arm + grasped object). Multi-step
//! manipulation tasks are planned by constrained trajectory optimisation on
//! that chain and tracked in a fixed-step simulator by a feedback-linearising
//! wrench controller, a thrust allocator and a computed-torque arm loop.

pub mod collision;
pub mod controller;
pub mod dynamics;
pub mod io;
pub mod error;
pub mod kinematics;
pub mod math;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod platform;
pub mod transform;

pub use error::{CollisionError, ConfigError, DynamicsError, KinematicsError};
pub use transform::RigidTransform;
