//! Objective and constraint evaluators. All functions are pure; the solver
//! and the verifier both build on them.

use nalgebra::{DMatrix, DVector};

use crate::collision::{signed_distance, PlacedShape, Shape};
use crate::error::{CollisionError, KinematicsError};
use crate::kinematics::{ChainState, KinematicChain};
use crate::transform::RigidTransform;

use super::problem::{Anchor, CollisionWorld, GoalKind, GoalSpec, Limits};

/// `Σ_t ‖W_v δx_t‖² + Σ_t ‖W_a δẋ_t‖²` over the rows of `states`.
pub fn objective(states: &DMatrix<f64>, w_v: &DVector<f64>, w_a: &DVector<f64>) -> f64 {
    let t = states.nrows();
    let mut f = 0.0;
    for k in 0..t.saturating_sub(1) {
        let d = states.row(k + 1) - states.row(k);
        f += d.iter().zip(w_v.iter()).map(|(d, w)| (w * d).powi(2)).sum::<f64>();
    }
    for k in 1..t.saturating_sub(1) {
        let d = states.row(k + 1) - states.row(k) * 2.0 + states.row(k - 1);
        f += d.iter().zip(w_a.iter()).map(|(d, w)| (w * d).powi(2)).sum::<f64>();
    }
    f
}

/// Stacked 6-D pose errors of every anchored link against its target.
pub fn chain_constraint(
    vkc: &KinematicChain,
    x: &ChainState,
    anchors: &[Anchor],
) -> Result<DVector<f64>, KinematicsError> {
    let mut r = DVector::zeros(6 * anchors.len());
    if anchors.is_empty() {
        return Ok(r);
    }
    let poses = vkc.link_poses(x)?;
    for (i, a) in anchors.iter().enumerate() {
        let idx = vkc.link_index(&a.link)?;
        r.fixed_rows_mut::<6>(6 * i).copy_from(&poses[idx].pose_error(&a.pose));
    }
    Ok(r)
}

/// Name of the robot's end-effector link in a (possibly attached) chain.
pub fn ee_link(vkc: &KinematicChain) -> &str {
    match vkc.attachment() {
        Some(a) => &vkc.links()[a.joint_index].name,
        None => vkc.tip_link(),
    }
}

/// Goal error vector `f_task(x) − G_goal`.
pub fn goal_error(vkc: &KinematicChain, x: &ChainState, goal: &GoalSpec) -> Result<DVector<f64>, KinematicsError> {
    let pose_err = |link: &str, target: &RigidTransform| -> Result<DVector<f64>, KinematicsError> {
        let p = vkc.forward_kinematics(x, link)?;
        Ok(DVector::from_column_slice(p.pose_error(target).as_slice()))
    };
    match &goal.kind {
        GoalKind::EePose { target } => pose_err(ee_link(vkc), target),
        GoalKind::LinkPose { link, target } => pose_err(link, target),
        GoalKind::JointTarget { target, mask } => {
            if target.len() != x.len() || mask.len() != x.len() {
                return Err(KinematicsError::DimensionMismatch {
                    expected: x.len(),
                    got: target.len(),
                });
            }
            Ok(DVector::from_iterator(
                x.len(),
                (0..x.len()).map(|i| if mask[i] { x.0[i] - target[i] } else { 0.0 }),
            ))
        }
    }
}

/// `‖f_task(x_T) − G_goal‖² − ξ_goal`; feasible iff `≤ 0`.
pub fn goal_constraint(vkc: &KinematicChain, x_t: &ChainState, goal: &GoalSpec) -> Result<f64, KinematicsError> {
    Ok(goal_error(vkc, x_t, goal)?.norm_squared() - goal.xi_goal)
}

/// Hinge residuals of the position bounds and the rate limits.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitResiduals {
    /// `T × dof`.
    pub position: DMatrix<f64>,
    /// `(T−1) × dof`, in units per second.
    pub velocity: DMatrix<f64>,
    /// `(T−2) × dof`, in units per second squared.
    pub acceleration: DMatrix<f64>,
}

impl LimitResiduals {
    pub fn max(&self) -> f64 {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .chain(self.acceleration.iter())
            .fold(0.0, |m, v| m.max(*v))
    }

    /// Largest residual touching time step `t`.
    pub fn max_at(&self, t: usize) -> f64 {
        let mut m = self.position.row(t).max();
        for k in [t.wrapping_sub(1), t] {
            if k < self.velocity.nrows() {
                m = m.max(self.velocity.row(k).max());
            }
        }
        for k in [t.wrapping_sub(1), t, t + 1] {
            if k >= 1 && k - 1 < self.acceleration.nrows() {
                m = m.max(self.acceleration.row(k - 1).max());
            }
        }
        m
    }
}

/// Bounds `x_min ≤ x_t ≤ x_max`, `|δx_t| / dt ≤ ẋ_max`, `|δẋ_t| / dt² ≤ ẍ_max`,
/// elementwise, as `max(0, violation)`.
pub fn limit_constraints(states: &DMatrix<f64>, limits: &Limits, dt: f64) -> LimitResiduals {
    let (t, n) = states.shape();
    let position = DMatrix::from_fn(t, n, |k, i| {
        let x = states[(k, i)];
        (limits.lower[i] - x).max(x - limits.upper[i]).max(0.0)
    });
    let velocity = DMatrix::from_fn(t.saturating_sub(1), n, |k, i| {
        let v = (states[(k + 1, i)] - states[(k, i)]) / dt;
        (v.abs() - limits.vel[i]).max(0.0)
    });
    let acceleration = DMatrix::from_fn(t.saturating_sub(2), n, |k, i| {
        let a = (states[(k + 2, i)] - 2.0 * states[(k + 1, i)] + states[(k, i)]) / (dt * dt);
        (a.abs() - limits.acc[i]).max(0.0)
    });
    LimitResiduals {
        position,
        velocity,
        acceleration,
    }
}

/// A collision geometry carried by a chain link.
#[derive(Debug, Clone)]
pub struct LinkGeom {
    pub link: usize,
    pub name: String,
    pub shape: Shape,
    pub offset: RigidTransform,
}

/// Which geometry pairs are checked for a chain in a world.
///
/// Only the robot's own links are checked: against the world (environment
/// term), against each other and against links of a grasped object (self
/// term). Adjacent links, the end-effector and its parent link versus the
/// grasped object, and box-box pairs are skipped.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    pub geoms: Vec<LinkGeom>,
    pub obstacles: Vec<PlacedShape>,
    /// (geom index, obstacle index)
    pub env_pairs: Vec<(usize, usize)>,
    /// (geom index, geom index)
    pub self_pairs: Vec<(usize, usize)>,
}

impl CollisionModel {
    pub fn new(vkc: &KinematicChain, world: &CollisionWorld) -> Self {
        let robot_end = vkc.attachment().map(|a| a.joint_index).unwrap_or(vkc.links().len() - 1);
        let mut geoms = Vec::new();
        for (i, l) in vkc.links().iter().enumerate() {
            for g in &l.collision_geoms {
                geoms.push(LinkGeom {
                    link: i,
                    name: g.name.clone(),
                    shape: g.shape,
                    offset: g.offset,
                });
            }
        }
        let obstacles: Vec<PlacedShape> = world
            .obstacles
            .iter()
            .map(|o| PlacedShape::new(o.shape, o.offset))
            .collect();
        let is_box = |s: &Shape| matches!(s, Shape::Box { .. });
        let mut env_pairs = Vec::new();
        let mut self_pairs = Vec::new();
        for (gi, g) in geoms.iter().enumerate() {
            if g.link > robot_end {
                continue;
            }
            for (oi, o) in obstacles.iter().enumerate() {
                if !(is_box(&g.shape) && is_box(&o.shape)) {
                    env_pairs.push((gi, oi));
                }
            }
            for (hi, h) in geoms.iter().enumerate().skip(gi + 1) {
                if g.link == h.link || vkc.adjacent(g.link, h.link) || (is_box(&g.shape) && is_box(&h.shape)) {
                    continue;
                }
                if h.link > robot_end && g.link + 1 >= robot_end {
                    continue;
                }
                self_pairs.push((gi, hi));
            }
        }
        Self {
            geoms,
            obstacles,
            env_pairs,
            self_pairs,
        }
    }

    pub fn place(&self, link_poses: &[RigidTransform]) -> Vec<PlacedShape> {
        self.geoms
            .iter()
            .map(|g| PlacedShape::new(g.shape, link_poses[g.link] * g.offset))
            .collect()
    }

    pub fn env_distance(&self, placed: &[PlacedShape], pair: (usize, usize)) -> Result<f64, CollisionError> {
        signed_distance(&placed[pair.0], &self.obstacles[pair.1])
    }

    pub fn self_distance(&self, placed: &[PlacedShape], pair: (usize, usize)) -> Result<f64, CollisionError> {
        signed_distance(&placed[pair.0], &placed[pair.1])
    }

    /// Signed distances of every environment pair, then every self pair.
    pub fn distances(&self, link_poses: &[RigidTransform]) -> Result<(Vec<f64>, Vec<f64>), CollisionError> {
        let placed = self.place(link_poses);
        let env = self
            .env_pairs
            .iter()
            .map(|p| self.env_distance(&placed, *p))
            .collect::<Result<_, _>>()?;
        let slf = self
            .self_pairs
            .iter()
            .map(|p| self.self_distance(&placed, *p))
            .collect::<Result<_, _>>()?;
        Ok((env, slf))
    }
}

/// Error from the collision evaluator.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

/// `(Σ |d_safe − d(L_i, O_j)|⁺, Σ |d_safe − d(L_i, L_k)|⁺)`; each feasible iff `≤ ξ_dist`.
pub fn collision_constraints(
    vkc: &KinematicChain,
    x: &ChainState,
    world: &CollisionWorld,
    dist_safe: f64,
) -> Result<(f64, f64), EvalError> {
    let model = CollisionModel::new(vkc, world);
    collision_residuals(&model, vkc, x, dist_safe)
}

/// As [`collision_constraints`] with a prebuilt pair model.
pub fn collision_residuals(
    model: &CollisionModel,
    vkc: &KinematicChain,
    x: &ChainState,
    dist_safe: f64,
) -> Result<(f64, f64), EvalError> {
    let poses = vkc.link_poses(x)?;
    let (env, slf) = model.distances(&poses)?;
    let hinge = |d: &Vec<f64>| d.iter().map(|d| (dist_safe - d).max(0.0)).sum::<f64>();
    Ok((hinge(&env), hinge(&slf)))
}
