// `!(a > b)` forms below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionPrimitive;
use crate::kinematics::{ChainState, KinematicChain};
use crate::transform::RigidTransform;

use super::PlannerError;

pub const DEFAULT_STEPS: usize = 30;
pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_XI_GOAL: f64 = 1e-4;
pub const DEFAULT_DIST_SAFE: f64 = 0.05;
pub const DEFAULT_XI_DIST: f64 = 1e-6;
/// Equality residuals below this count as satisfied.
pub const CHAIN_TOL: f64 = 1e-4;
/// Allowed positive goal-constraint value on a returned trajectory.
pub const GOAL_TOL: f64 = 1e-6;

/// What the final state must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalKind {
    /// Pose of the robot's end-effector (the tip of the robot part of the chain).
    EePose { target: RigidTransform },
    LinkPose { link: String, target: RigidTransform },
    /// Per-DoF targets; `mask[i] == false` leaves DoF `i` free.
    JointTarget { target: Vec<f64>, mask: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    #[serde(flatten)]
    pub kind: GoalKind,
    /// Tolerance on the squared goal error.
    #[serde(default = "default_xi_goal")]
    pub xi_goal: f64,
}

fn default_xi_goal() -> f64 {
    DEFAULT_XI_GOAL
}

impl GoalSpec {
    pub fn ee_pose(target: RigidTransform) -> Self {
        Self {
            kind: GoalKind::EePose { target },
            xi_goal: DEFAULT_XI_GOAL,
        }
    }

    pub fn link_pose(link: &str, target: RigidTransform) -> Self {
        Self {
            kind: GoalKind::LinkPose {
                link: link.to_string(),
                target,
            },
            xi_goal: DEFAULT_XI_GOAL,
        }
    }

    pub fn joints(target: &[f64]) -> Self {
        Self {
            kind: GoalKind::JointTarget {
                target: target.to_vec(),
                mask: vec![true; target.len()],
            },
            xi_goal: DEFAULT_XI_GOAL,
        }
    }

    pub fn masked_joints(target: &[f64], mask: &[bool]) -> Self {
        Self {
            kind: GoalKind::JointTarget {
                target: target.to_vec(),
                mask: mask.to_vec(),
            },
            xi_goal: DEFAULT_XI_GOAL,
        }
    }

    pub fn with_tolerance(mut self, xi_goal: f64) -> Self {
        self.xi_goal = xi_goal;
        self
    }
}

/// Per-DoF position bounds and rate limits. Rates are per second; the
/// planner scales them by the step duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Limits {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub vel: DVector<f64>,
    pub acc: DVector<f64>,
}

impl Limits {
    pub fn from_chain(chain: &KinematicChain) -> Self {
        let (vel, acc): (Vec<f64>, Vec<f64>) = chain.moving_joints().map(|j| (j.vel_limit, j.acc_limit)).unzip();
        Self {
            lower: chain.lower_limits(),
            upper: chain.upper_limits(),
            vel: DVector::from_vec(vel),
            acc: DVector::from_vec(acc),
        }
    }

    pub fn dof(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.dof();
        if self.upper.len() != n || self.vel.len() != n || self.acc.len() != n {
            return Err("limit vectors differ in length".into());
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(format!("DoF {i}: lower bound above upper bound"));
            }
            if !(self.vel[i] > 0.0 && self.acc[i] > 0.0) {
                return Err(format!("DoF {i}: rate limits must be positive"));
            }
        }
        Ok(())
    }
}

/// Pins a link of the chain to a world pose (loop closure through a grasped
/// articulated object).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub link: String,
    pub pose: RigidTransform,
}

/// Static obstacles, each placed by its `offset` in the world frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionWorld {
    pub obstacles: Vec<CollisionPrimitive>,
}

impl CollisionWorld {
    pub fn new(obstacles: Vec<CollisionPrimitive>) -> Self {
        Self { obstacles }
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub vkc: KinematicChain,
    pub x_start: ChainState,
    pub steps: usize,
    pub dt: f64,
    pub w_v: DVector<f64>,
    pub w_a: DVector<f64>,
    pub goal: GoalSpec,
    pub limits: Limits,
    pub anchors: Vec<Anchor>,
    pub world: CollisionWorld,
    pub dist_safe: f64,
    pub xi_dist: f64,
}

impl PlanningProblem {
    /// Problem with default horizon, unit weights, chain limits and no
    /// obstacles or anchors.
    pub fn new(vkc: KinematicChain, x_start: ChainState, goal: GoalSpec) -> Self {
        let n = vkc.dof();
        let limits = Limits::from_chain(&vkc);
        Self {
            vkc,
            x_start,
            steps: DEFAULT_STEPS,
            dt: DEFAULT_DT,
            w_v: DVector::from_element(n, 1.0),
            w_a: DVector::from_element(n, 1.0),
            goal,
            limits,
            anchors: Vec::new(),
            world: CollisionWorld::default(),
            dist_safe: DEFAULT_DIST_SAFE,
            xi_dist: DEFAULT_XI_DIST,
        }
    }

    pub fn dof(&self) -> usize {
        self.vkc.dof()
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let n = self.dof();
        let bad = |m: String| Err(PlannerError::InvalidProblem(m));
        if self.steps < 2 {
            return bad(format!("horizon must have at least 2 steps, got {}", self.steps));
        }
        if !(self.dt > 0.0) {
            return bad("step duration must be positive".into());
        }
        if self.x_start.len() != n {
            return bad(format!("start state has {} values, chain has {n} DoF", self.x_start.len()));
        }
        if self.w_v.len() != n || self.w_a.len() != n {
            return bad("weight vectors must match the chain DoF".into());
        }
        if self.w_v.iter().chain(self.w_a.iter()).any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative".into());
        }
        if self.limits.dof() != n {
            return bad("limits must match the chain DoF".into());
        }
        self.limits.validate().map_err(PlannerError::InvalidProblem)?;
        if !(self.goal.xi_goal > 0.0) {
            return bad("goal tolerance must be positive".into());
        }
        match &self.goal.kind {
            GoalKind::JointTarget { target, mask } if target.len() != n || mask.len() != n => {
                return bad("joint target must match the chain DoF".into());
            }
            GoalKind::LinkPose { link, .. } if !self.vkc.has_link(link) => {
                return bad(format!("goal link `{link}` is not in the chain"));
            }
            _ => {}
        }
        for a in &self.anchors {
            if !self.vkc.has_link(&a.link) {
                return bad(format!("anchor link `{}` is not in the chain", a.link));
            }
        }
        if self.dist_safe < 0.0 || self.xi_dist < 0.0 {
            return bad("collision tolerances must be non-negative".into());
        }
        for (i, x) in self.x_start.0.iter().enumerate() {
            if !x.is_finite() || *x < self.limits.lower[i] - 1e-9 || *x > self.limits.upper[i] + 1e-9 {
                return bad(format!("start state DoF {i} = {x} is outside its bounds"));
            }
        }
        Ok(())
    }
}

/// Residuals of one time step of a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepResiduals {
    /// Norm of the stacked anchor pose errors.
    pub chain: f64,
    /// Largest limit hinge at this step (position, rate or acceleration).
    pub limit: f64,
    pub env: f64,
    pub self_collision: f64,
}

/// Solver bookkeeping attached to a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub objective: f64,
    pub goal: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Wall time; not serialised so written outputs are byte-stable.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `T × dof`, one row per time step.
    pub states: DMatrix<f64>,
    pub dt: f64,
    pub dof_names: Vec<String>,
    pub residuals: Vec<StepResiduals>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn from_states(states: DMatrix<f64>, dt: f64, dof_names: Vec<String>) -> Self {
        let t = states.nrows();
        Self {
            states,
            dt,
            dof_names,
            residuals: vec![StepResiduals::default(); t],
            stats: SolverStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dof(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, t: usize) -> ChainState {
        ChainState(self.states.row(t).transpose())
    }

    pub fn last(&self) -> ChainState {
        self.state(self.len() - 1)
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|v| v.is_finite())
    }
}

/// Grasp change applied before a step is planned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreAction {
    #[default]
    None,
    Attach {
        object: String,
        #[serde(default)]
        grasp_offset: RigidTransform,
    },
    Detach,
}
