//! Trajectory optimisation on a virtual kinematic chain.

mod constraints;
mod ik;
mod problem;
mod sequence;
mod solver;
mod verify;

pub use constraints::{
    chain_constraint, collision_constraints, collision_residuals, ee_link, goal_constraint, goal_error,
    limit_constraints, objective, CollisionModel, EvalError, LimitResiduals, LinkGeom,
};
pub use ik::{goal_seed, initial_guess, solve_ik};
pub use problem::{
    Anchor, CollisionWorld, GoalKind, GoalSpec, Limits, PlanningProblem, PreAction, SolverStats, StepResiduals,
    Trajectory, CHAIN_TOL, DEFAULT_DIST_SAFE, DEFAULT_DT, DEFAULT_STEPS, DEFAULT_XI_DIST, DEFAULT_XI_GOAL, GOAL_TOL,
};
pub use sequence::{
    execute_sequence, Container, ObjectModel, ObjectState, Parent, PlannedStep, Scene, StepGoal, StepSettings, TaskStep,
};
pub use solver::{solve, solve_from, solve_with, SolverOptions};
pub use verify::{verify, InfeasibilityReport, Verification};

use crate::error::{CollisionError, KinematicsError};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid planning problem: {0}")]
    InvalidProblem(String),
    #[error("no feasible trajectory ({}); worst residuals: {report}", failures.join(", "))]
    Infeasible {
        report: InfeasibilityReport,
        failures: Vec<String>,
        trajectory: Box<Trajectory>,
    },
    #[error("step {index} (`{name}`) failed: {source}")]
    Step {
        index: usize,
        name: String,
        #[source]
        source: Box<PlannerError>,
    },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

impl From<EvalError> for PlannerError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Kinematics(k) => PlannerError::Kinematics(k),
            EvalError::Collision(c) => PlannerError::Collision(c),
        }
    }
}

impl PlannerError {
    /// Worst residuals when the failure was an infeasible solve.
    pub fn report(&self) -> Option<&InfeasibilityReport> {
        match self {
            PlannerError::Infeasible { report, .. } => Some(report),
            PlannerError::Step { source, .. } => source.report(),
            _ => None,
        }
    }
}
