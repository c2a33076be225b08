use std::fmt;

use serde::{Deserialize, Serialize};

use super::constraints::{
    chain_constraint, collision_residuals, goal_constraint, limit_constraints, CollisionModel, EvalError,
};
use super::problem::{PlanningProblem, StepResiduals, Trajectory, CHAIN_TOL, GOAL_TOL};

/// Worst residual of each constraint family over a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// Largest deviation of `x_1` from the start state.
    pub start: f64,
    pub chain: f64,
    pub goal: f64,
    pub limit: f64,
    pub env: f64,
    pub self_collision: f64,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "start {:.3e}, chain {:.3e}, goal {:.3e}, limits {:.3e}, env collision {:.3e}, self collision {:.3e}",
            self.start, self.chain, self.goal, self.limit, self.env, self.self_collision
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub worst: InfeasibilityReport,
    pub steps: Vec<StepResiduals>,
    pub passed: bool,
    /// Families that failed, by name.
    pub failures: Vec<&'static str>,
}

/// Re-evaluates every constraint of `problem` on `traj`.
pub fn verify(problem: &PlanningProblem, traj: &Trajectory) -> Result<Verification, EvalError> {
    let s = &traj.states;
    let t_len = s.nrows();
    let mut failures = Vec::new();
    if t_len != problem.steps || s.ncols() != problem.dof() || !traj.is_finite() {
        return Ok(Verification {
            worst: InfeasibilityReport {
                start: f64::INFINITY,
                ..Default::default()
            },
            steps: Vec::new(),
            passed: false,
            failures: vec!["shape"],
        });
    }
    let start = (s.row(0).transpose() - &problem.x_start.0).amax();
    let limits = limit_constraints(s, &problem.limits, traj.dt);
    let model = CollisionModel::new(&problem.vkc, &problem.world);
    let mut steps = Vec::with_capacity(t_len);
    let mut worst = InfeasibilityReport {
        start,
        limit: limits.max(),
        ..Default::default()
    };
    for t in 0..t_len {
        let x = traj.state(t);
        let chain = chain_constraint(&problem.vkc, &x, &problem.anchors)?.norm();
        let (env, slf) = collision_residuals(&model, &problem.vkc, &x, problem.dist_safe)?;
        worst.chain = worst.chain.max(chain);
        worst.env = worst.env.max(env);
        worst.self_collision = worst.self_collision.max(slf);
        steps.push(StepResiduals {
            chain,
            limit: limits.max_at(t),
            env,
            self_collision: slf,
        });
    }
    worst.goal = goal_constraint(&problem.vkc, &traj.state(t_len - 1), &problem.goal)?;
    if start > 1e-12 {
        failures.push("start");
    }
    if worst.chain > CHAIN_TOL {
        failures.push("chain");
    }
    if worst.goal > GOAL_TOL {
        failures.push("goal");
    }
    if worst.limit > 0.0 {
        failures.push("limits");
    }
    if worst.env > problem.xi_dist {
        failures.push("env_collision");
    }
    if worst.self_collision > problem.xi_dist {
        failures.push("self_collision");
    }
    Ok(Verification {
        worst,
        steps,
        passed: failures.is_empty(),
        failures,
    })
}
