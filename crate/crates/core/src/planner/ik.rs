//! Damped-least-squares IK used to seed the trajectory optimiser.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kinematics::{ChainState, KinematicChain};

use super::constraints::{chain_constraint, collision_residuals, goal_error, CollisionModel, EvalError};
use super::problem::{Anchor, GoalSpec, Limits, PlanningProblem};

const MAX_ITERS: usize = 300;
const MAX_STEP: f64 = 0.2;

/// Stacked task error: goal (if any), then anchors.
fn task_error(
    vkc: &KinematicChain,
    x: &ChainState,
    goal: Option<&GoalSpec>,
    anchors: &[Anchor],
) -> Result<DVector<f64>, EvalError> {
    let g = match goal {
        Some(g) => goal_error(vkc, x, g)?,
        None => DVector::zeros(0),
    };
    let a = chain_constraint(vkc, x, anchors)?;
    let mut e = DVector::zeros(g.len() + a.len());
    e.rows_mut(0, g.len()).copy_from(&g);
    e.rows_mut(g.len(), a.len()).copy_from(&a);
    Ok(e)
}

fn clamp(x: &mut DVector<f64>, limits: &Limits) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(limits.lower[i], limits.upper[i]);
    }
}

/// Drives the task error to zero from `start`, staying inside the position
/// bounds. Returns the final state and its task-error norm.
pub fn solve_ik(
    vkc: &KinematicChain,
    start: &ChainState,
    goal: Option<&GoalSpec>,
    anchors: &[Anchor],
    limits: &Limits,
) -> Result<(ChainState, f64), EvalError> {
    let n = start.len();
    let mut x = start.0.clone();
    clamp(&mut x, limits);
    let mut e = task_error(vkc, &ChainState(x.clone()), goal, anchors)?;
    if e.is_empty() {
        return Ok((ChainState(x), 0.0));
    }
    let mut damping = 1e-2;
    let h = 1e-6;
    for _ in 0..MAX_ITERS {
        let err = e.norm();
        if err < 1e-11 {
            break;
        }
        let mut jac = DMatrix::zeros(e.len(), n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let ep = task_error(vkc, &ChainState(xp), goal, anchors)?;
            let em = task_error(vkc, &ChainState(xm), goal, anchors)?;
            jac.set_column(i, &((ep - em) / (2.0 * h)));
        }
        let mut improved = false;
        for _ in 0..12 {
            let a = &jac * jac.transpose() + DMatrix::identity(e.len(), e.len()) * damping * damping;
            let Some(chol) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let mut dx = -(jac.transpose() * chol.solve(&e));
            let big = dx.amax();
            if big > MAX_STEP {
                dx *= MAX_STEP / big;
            }
            let mut xn = &x + dx;
            clamp(&mut xn, limits);
            let en = task_error(vkc, &ChainState(xn.clone()), goal, anchors)?;
            if en.norm() < err {
                x = xn;
                e = en;
                damping = (damping * 0.3).max(1e-6);
                improved = true;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let err = e.norm();
    Ok((ChainState(x), err))
}

/// Candidate start states: the given start, the base rolled by ±π (when the
/// chain has a floating base) and a few deterministic perturbations.
fn ik_starts(problem: &PlanningProblem) -> Vec<DVector<f64>> {
    let x0 = problem.x_start.0.clone();
    let mut starts = vec![x0.clone()];
    if let Some(roll) = problem.vkc.dof_index("vb_roll") {
        for s in [std::f64::consts::PI, -std::f64::consts::PI] {
            let mut x = x0.clone();
            x[roll] += s;
            starts.push(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4 {
        let mut x = x0.clone();
        for i in 0..x.len() {
            let span = (problem.limits.upper[i] - problem.limits.lower[i]).min(2.0);
            x[i] += rng.random_range(-0.25..0.25) * span;
        }
        starts.push(x);
    }
    starts
}

/// Goal-consistent final state for the initial guess.
///
/// Among the converged candidates, collision-free ones win, then the
/// smallest `W_v`-weighted displacement from the start.
pub fn goal_seed(problem: &PlanningProblem) -> Result<ChainState, EvalError> {
    let model = CollisionModel::new(&problem.vkc, &problem.world);
    let mut best: Option<(bool, f64, f64, ChainState)> = None;
    for s in ik_starts(problem) {
        let (x, err) = solve_ik(
            &problem.vkc,
            &ChainState(s),
            Some(&problem.goal),
            &problem.anchors,
            &problem.limits,
        )?;
        let (env, slf) = collision_residuals(&model, &problem.vkc, &x, problem.dist_safe)?;
        let clear = env + slf <= problem.xi_dist;
        let disp = (&x.0 - &problem.x_start.0).component_mul(&problem.w_v).norm();
        let cand = (clear, err, disp, x);
        let better = match &best {
            None => true,
            Some((bc, be, bd, _)) => {
                let conv = cand.1 < 1e-6;
                let bconv = *be < 1e-6;
                match (conv, bconv) {
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => cand.1 < *be,
                    (true, true) => (cand.0 && !bc) || (cand.0 == *bc && cand.2 < *bd),
                }
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one start").3)
}

/// Linear interpolation from the start to `end`, with interior states
/// projected back onto the anchor constraints.
pub fn initial_guess(problem: &PlanningProblem, end: &ChainState) -> Result<DMatrix<f64>, EvalError> {
    let t_len = problem.steps;
    let n = problem.dof();
    let mut s = DMatrix::zeros(t_len, n);
    for t in 0..t_len {
        let a = t as f64 / (t_len - 1) as f64;
        let x = &problem.x_start.0 * (1.0 - a) + &end.0 * a;
        s.set_row(t, &x.transpose());
    }
    if !problem.anchors.is_empty() {
        for t in 1..t_len - 1 {
            let x = ChainState(s.row(t).transpose());
            let (x, _) = solve_ik(&problem.vkc, &x, None, &problem.anchors, &problem.limits)?;
            s.set_row(t, &x.0.transpose());
        }
    }
    Ok(s)
}
