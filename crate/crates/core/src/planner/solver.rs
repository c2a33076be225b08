//! Augmented-Lagrangian trajectory optimiser.
//!
//! Decision variables are `x_2..x_T` (`x_1` is pinned to the start). Position
//! bounds are enforced by projection; every other constraint enters through
//! an augmented-Lagrangian penalty. Each outer iteration minimises the
//! penalised sum of squares by damped Gauss-Newton with a backtracking line
//! search, then updates multipliers and multiplies the penalty weight.
//!
//! Every constraint is written as `z ∈ C` with `C` a closed ball (radius 0
//! for equalities) or a half-line, so the penalty `μ/2 dist(c(x) + λ/μ, C)²`
//! stays a sum of squares and Gauss-Newton applies unchanged.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::kinematics::ChainState;

use super::constraints::{chain_constraint, goal_error, objective, CollisionModel, EvalError};
use super::ik::{goal_seed, initial_guess};
use super::problem::{PlanningProblem, SolverStats, Trajectory};
use super::verify::verify;
use super::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    pub mu0: f64,
    pub mu_factor: f64,
    /// Relative shrink of rate limits inside the solver.
    pub rate_margin: f64,
    /// Extra clearance demanded inside the solver (m).
    pub collision_margin: f64,
    /// Outer loop stops once the internal violation drops below this.
    pub tolerance: f64,
    pub fd_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer: 8,
            max_inner: 100,
            mu0: 100.0,
            mu_factor: 10.0,
            rate_margin: 1e-3,
            collision_margin: 1e-3,
            tolerance: 1e-9,
            fd_step: 1e-6,
        }
    }
}

/// Rate limits at or above this are treated as absent.
const UNLIMITED: f64 = 1e8;

#[derive(Debug, Clone)]
struct Multipliers {
    chain: Vec<DVector<f64>>,
    goal: DVector<f64>,
    vel: [DMatrix<f64>; 2],
    acc: [DMatrix<f64>; 2],
    env: Vec<Vec<f64>>,
    slf: Vec<Vec<f64>>,
}

struct Ctx<'a> {
    p: &'a PlanningProblem,
    opts: SolverOptions,
    model: CollisionModel,
    n: usize,
    t_len: usize,
    /// Per-step rate bounds with the internal margin.
    vmax: Vec<Option<f64>>,
    amax: Vec<Option<f64>>,
    goal_radius: f64,
}

/// Sum-of-squares accumulator for `Φ = ‖r‖²`, `H = JᵀJ`, `b = Jᵀr`.
struct Acc {
    phi: f64,
    jac: bool,
    n: usize,
    h: DMatrix<f64>,
    b: DVector<f64>,
}

impl Acc {
    fn new(nv: usize, n: usize, jac: bool) -> Self {
        let dim = if jac { nv } else { 0 };
        Self {
            phi: 0.0,
            jac,
            n,
            h: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    /// One scalar residual with sparse gradient entries `(t, dof, coeff)`.
    fn scalar(&mut self, entries: &[(usize, usize, f64)], r: f64) {
        self.phi += r * r;
        if !self.jac {
            return;
        }
        for &(ta, ia, ca) in entries {
            if ta == 0 {
                continue;
            }
            let a = (ta - 1) * self.n + ia;
            self.b[a] += ca * r;
            for &(tb, ib, cb) in entries {
                if tb == 0 {
                    continue;
                }
                self.h[(a, (tb - 1) * self.n + ib)] += ca * cb;
            }
        }
    }

    /// A residual block depending only on `x_t`.
    fn block(&mut self, t: usize, jl: Option<&DMatrix<f64>>, r: &DVector<f64>) {
        self.phi += r.norm_squared();
        if !self.jac || t == 0 {
            return;
        }
        let jl = jl.expect("jacobian requested");
        let off = (t - 1) * self.n;
        let mut hv = self.h.view_mut((off, off), (self.n, self.n));
        hv += jl.transpose() * jl;
        let mut bv = self.b.rows_mut(off, self.n);
        bv += jl.transpose() * r;
    }
}

/// Central finite-difference Jacobian of a vector function of one state.
fn fd_jacobian<F>(x: &DVector<f64>, m: usize, h: f64, f: F) -> Result<DMatrix<f64>, EvalError>
where
    F: Fn(&ChainState) -> Result<DVector<f64>, EvalError>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (f(&ChainState(xp))? - f(&ChainState(xm))?) / (2.0 * h);
        j.set_column(i, &d);
    }
    Ok(j)
}

impl<'a> Ctx<'a> {
    fn new(p: &'a PlanningProblem, opts: SolverOptions) -> Self {
        let scale = |v: f64, dt: f64| if v >= UNLIMITED { None } else { Some(v * dt * (1.0 - opts.rate_margin)) };
        Self {
            p,
            opts,
            model: CollisionModel::new(&p.vkc, &p.world),
            n: p.dof(),
            t_len: p.steps,
            vmax: p.limits.vel.iter().map(|v| scale(*v, p.dt)).collect(),
            amax: p.limits.acc.iter().map(|a| scale(*a, p.dt * p.dt)).collect(),
            goal_radius: p.goal.xi_goal.sqrt(),
        }
    }

    fn multipliers(&self) -> Multipliers {
        let (t, n) = (self.t_len, self.n);
        Multipliers {
            chain: vec![DVector::zeros(6 * self.p.anchors.len()); t],
            goal: DVector::zeros(match &self.p.goal.kind {
                super::problem::GoalKind::JointTarget { .. } => n,
                _ => 6,
            }),
            vel: [DMatrix::zeros(t - 1, n), DMatrix::zeros(t - 1, n)],
            acc: [DMatrix::zeros(t.saturating_sub(2), n), DMatrix::zeros(t.saturating_sub(2), n)],
            env: vec![vec![0.0; self.model.env_pairs.len()]; t],
            slf: vec![vec![0.0; self.model.self_pairs.len()]; t],
        }
    }

    fn row(s: &DMatrix<f64>, t: usize) -> DVector<f64> {
        s.row(t).transpose()
    }

    fn project(&self, s: &mut DMatrix<f64>) {
        let l = &self.p.limits;
        for t in 1..self.t_len {
            for i in 0..self.n {
                s[(t, i)] = s[(t, i)].clamp(l.lower[i], l.upper[i]);
            }
        }
    }

    fn objective_rows(&self, s: &DMatrix<f64>, acc: &mut Acc) {
        let (w_v, w_a) = (&self.p.w_v, &self.p.w_a);
        for t in 0..self.t_len - 1 {
            for i in 0..self.n {
                let w = w_v[i];
                if w != 0.0 {
                    acc.scalar(&[(t, i, -w), (t + 1, i, w)], w * (s[(t + 1, i)] - s[(t, i)]));
                }
            }
        }
        for t in 1..self.t_len - 1 {
            for i in 0..self.n {
                let w = w_a[i];
                if w != 0.0 {
                    let d = s[(t + 1, i)] - 2.0 * s[(t, i)] + s[(t - 1, i)];
                    acc.scalar(&[(t - 1, i, w), (t, i, -2.0 * w), (t + 1, i, w)], w * d);
                }
            }
        }
    }

    fn rate_rows(&self, s: &DMatrix<f64>, lam: &Multipliers, mu: f64, acc: &mut Acc) {
        let k = (0.5 * mu).sqrt();
        for t in 0..self.t_len - 1 {
            for i in 0..self.n {
                let Some(v) = self.vmax[i] else { continue };
                let d = s[(t + 1, i)] - s[(t, i)];
                for (side, sign) in [(0, 1.0), (1, -1.0)] {
                    let z = sign * d - v + lam.vel[side][(t, i)] / mu;
                    if z > 0.0 {
                        acc.scalar(&[(t, i, -sign * k), (t + 1, i, sign * k)], k * z);
                    }
                }
            }
        }
        for t in 1..self.t_len - 1 {
            for i in 0..self.n {
                let Some(a) = self.amax[i] else { continue };
                let d = s[(t + 1, i)] - 2.0 * s[(t, i)] + s[(t - 1, i)];
                for (side, sign) in [(0, 1.0), (1, -1.0)] {
                    let z = sign * d - a + lam.acc[side][(t - 1, i)] / mu;
                    if z > 0.0 {
                        acc.scalar(
                            &[(t - 1, i, sign * k), (t, i, -2.0 * sign * k), (t + 1, i, sign * k)],
                            k * z,
                        );
                    }
                }
            }
        }
    }

    fn chain_rows(&self, s: &DMatrix<f64>, lam: &Multipliers, mu: f64, acc: &mut Acc) -> Result<(), EvalError> {
        if self.p.anchors.is_empty() {
            return Ok(());
        }
        let k = (0.5 * mu).sqrt();
        let f = |x: &ChainState| -> Result<DVector<f64>, EvalError> {
            Ok(chain_constraint(&self.p.vkc, x, &self.p.anchors)?)
        };
        for t in 1..self.t_len {
            let x = Self::row(s, t);
            let h = f(&ChainState(x.clone()))?;
            let r = (&h + &lam.chain[t] / mu) * k;
            if acc.jac {
                let j = fd_jacobian(&x, h.len(), self.opts.fd_step, f)? * k;
                acc.block(t, Some(&j), &r);
            } else {
                acc.block(t, None, &r);
            }
        }
        Ok(())
    }

    fn goal_rows(&self, s: &DMatrix<f64>, lam: &Multipliers, mu: f64, acc: &mut Acc) -> Result<(), EvalError> {
        let t = self.t_len - 1;
        let k = (0.5 * mu).sqrt();
        let f = |x: &ChainState| -> Result<DVector<f64>, EvalError> { Ok(goal_error(&self.p.vkc, x, &self.p.goal)?) };
        let x = Self::row(s, t);
        let e = f(&ChainState(x.clone()))?;
        let z = &e + &lam.goal / mu;
        let nz = z.norm();
        let c = self.goal_radius;
        if nz <= c {
            return Ok(());
        }
        let zh = &z / nz;
        let r = (&z - &zh * c) * k;
        if acc.jac {
            let je = fd_jacobian(&x, e.len(), self.opts.fd_step, f)?;
            let m = e.len();
            let proj = DMatrix::identity(m, m) * (1.0 - c / nz) + &zh * zh.transpose() * (c / nz);
            acc.block(t, Some(&(proj * je * k)), &r);
        } else {
            acc.block(t, None, &r);
        }
        Ok(())
    }

    fn collision_rows(&self, s: &DMatrix<f64>, lam: &Multipliers, mu: f64, acc: &mut Acc) -> Result<(), EvalError> {
        let m = &self.model;
        if m.env_pairs.is_empty() && m.self_pairs.is_empty() {
            return Ok(());
        }
        let k = (0.5 * mu).sqrt();
        let bound = self.p.dist_safe + self.opts.collision_margin;
        let vkc = &self.p.vkc;
        for t in 1..self.t_len {
            let x = Self::row(s, t);
            let placed = m.place(&vkc.link_poses(&ChainState(x.clone()))?);
            // (is_env, pair index, z)
            let mut active = Vec::new();
            for (j, pair) in m.env_pairs.iter().enumerate() {
                let z = bound - m.env_distance(&placed, *pair)? + lam.env[t][j] / mu;
                if z > 0.0 {
                    active.push((true, j, z));
                }
            }
            for (j, pair) in m.self_pairs.iter().enumerate() {
                let z = bound - m.self_distance(&placed, *pair)? + lam.slf[t][j] / mu;
                if z > 0.0 {
                    active.push((false, j, z));
                }
            }
            if active.is_empty() {
                continue;
            }
            let r = DVector::from_iterator(active.len(), active.iter().map(|a| k * a.2));
            if !acc.jac {
                acc.block(t, None, &r);
                continue;
            }
            let dist = |placed: &[crate::collision::PlacedShape], a: &(bool, usize, f64)| {
                if a.0 {
                    m.env_distance(placed, m.env_pairs[a.1])
                } else {
                    m.self_distance(placed, m.self_pairs[a.1])
                }
            };
            let h = self.opts.fd_step;
            let mut j = DMatrix::zeros(active.len(), self.n);
            for i in 0..self.n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let pp = m.place(&vkc.link_poses(&ChainState(xp))?);
                let pm = m.place(&vkc.link_poses(&ChainState(xm))?);
                for (row, a) in active.iter().enumerate() {
                    // residual is bound - d, so its derivative is -dd/dx
                    j[(row, i)] = -k * (dist(&pp, a)? - dist(&pm, a)?) / (2.0 * h);
                }
            }
            acc.block(t, Some(&j), &r);
        }
        Ok(())
    }

    fn evaluate(&self, s: &DMatrix<f64>, lam: &Multipliers, mu: f64, jac: bool) -> Result<Acc, EvalError> {
        let mut acc = Acc::new((self.t_len - 1) * self.n, self.n, jac);
        self.objective_rows(s, &mut acc);
        self.rate_rows(s, lam, mu, &mut acc);
        self.chain_rows(s, lam, mu, &mut acc)?;
        self.goal_rows(s, lam, mu, &mut acc)?;
        self.collision_rows(s, lam, mu, &mut acc)?;
        Ok(acc)
    }

    /// Projected damped Gauss-Newton on the augmented Lagrangian.
    fn inner(&self, s: &mut DMatrix<f64>, lam: &Multipliers, mu: f64) -> Result<usize, EvalError> {
        let nv = (self.t_len - 1) * self.n;
        let l = &self.p.limits;
        let mut damping = 1e-9;
        for it in 0..self.opts.max_inner {
            let ev = self.evaluate(s, lam, mu, true)?;
            let phi0 = ev.phi;
            // variables pinned at a bound with the descent direction pointing out
            let free: Vec<usize> = (0..nv)
                .filter(|&v| {
                    let (t, i) = (v / self.n + 1, v % self.n);
                    let x = s[(t, i)];
                    let at_lo = x <= l.lower[i] + 1e-12 && ev.b[v] > 0.0;
                    let at_hi = x >= l.upper[i] - 1e-12 && ev.b[v] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();
            if free.is_empty() {
                return Ok(it);
            }
            let nf = free.len();
            let hf = DMatrix::from_fn(nf, nf, |a, b| ev.h[(free[a], free[b])]);
            let bf = DVector::from_iterator(nf, free.iter().map(|&v| ev.b[v]));
            if bf.amax() < 1e-14 {
                return Ok(it);
            }
            let diag_max = hf.diagonal().amax().max(1.0);
            let mut step = None;
            for _ in 0..12 {
                let mut a = hf.clone();
                for d in 0..nf {
                    a[(d, d)] += damping * diag_max + 1e-12;
                }
                if let Some(ch) = a.cholesky() {
                    step = Some(-ch.solve(&bf));
                    break;
                }
                damping *= 100.0;
            }
            let Some(df) = step else { return Ok(it) };
            let slope = 2.0 * bf.dot(&df);
            if slope >= 0.0 {
                return Ok(it);
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = s.clone();
                for (a, &v) in free.iter().enumerate() {
                    trial[(v / self.n + 1, v % self.n)] += alpha * df[a];
                }
                self.project(&mut trial);
                let phi = self.evaluate(&trial, lam, mu, false)?.phi;
                if phi <= phi0 + 1e-4 * alpha * slope {
                    accepted = Some((trial, phi));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, phi)) = accepted else { return Ok(it + 1) };
            let moved = (&trial - &*s).amax();
            *s = trial;
            if phi0 - phi <= 1e-15 + 1e-13 * phi0 || moved < 1e-13 {
                return Ok(it + 1);
            }
        }
        Ok(self.opts.max_inner)
    }

    /// Updates multipliers in place and returns the largest internal violation.
    fn update(&self, s: &DMatrix<f64>, lam: &mut Multipliers, mu: f64) -> Result<f64, EvalError> {
        let mut viol: f64 = 0.0;
        for t in 0..self.t_len - 1 {
            for i in 0..self.n {
                let Some(v) = self.vmax[i] else { continue };
                let d = s[(t + 1, i)] - s[(t, i)];
                for (side, sign) in [(0, 1.0), (1, -1.0)] {
                    let g = sign * d - v;
                    viol = viol.max(g);
                    let l = &mut lam.vel[side][(t, i)];
                    *l = (*l + mu * g).max(0.0);
                }
            }
        }
        for t in 1..self.t_len - 1 {
            for i in 0..self.n {
                let Some(a) = self.amax[i] else { continue };
                let d = s[(t + 1, i)] - 2.0 * s[(t, i)] + s[(t - 1, i)];
                for (side, sign) in [(0, 1.0), (1, -1.0)] {
                    let g = sign * d - a;
                    viol = viol.max(g);
                    let l = &mut lam.acc[side][(t - 1, i)];
                    *l = (*l + mu * g).max(0.0);
                }
            }
        }
        let vkc = &self.p.vkc;
        for t in 1..self.t_len {
            let x = ChainState(Self::row(s, t));
            if !self.p.anchors.is_empty() {
                let h = chain_constraint(vkc, &x, &self.p.anchors)?;
                viol = viol.max(h.amax());
                lam.chain[t] += h * mu;
            }
            let m = &self.model;
            if m.env_pairs.is_empty() && m.self_pairs.is_empty() {
                continue;
            }
            let bound = self.p.dist_safe + self.opts.collision_margin;
            let placed = m.place(&vkc.link_poses(&x)?);
            for (j, pair) in m.env_pairs.iter().enumerate() {
                let g = bound - m.env_distance(&placed, *pair)?;
                viol = viol.max(g);
                lam.env[t][j] = (lam.env[t][j] + mu * g).max(0.0);
            }
            for (j, pair) in m.self_pairs.iter().enumerate() {
                let g = bound - m.self_distance(&placed, *pair)?;
                viol = viol.max(g);
                lam.slf[t][j] = (lam.slf[t][j] + mu * g).max(0.0);
            }
        }
        let e = goal_error(vkc, &ChainState(Self::row(s, self.t_len - 1)), &self.p.goal)?;
        viol = viol.max(e.norm() - self.goal_radius);
        let z = &e + &lam.goal / mu;
        let nz = z.norm();
        lam.goal = if nz > self.goal_radius {
            (&z - &z * (self.goal_radius / nz)) * mu
        } else {
            DVector::zeros(z.len())
        };
        Ok(viol)
    }
}

/// Solves with default options.
pub fn solve(problem: &PlanningProblem) -> Result<Trajectory, PlannerError> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &PlanningProblem, opts: &SolverOptions) -> Result<Trajectory, PlannerError> {
    problem.validate()?;
    let seed = goal_seed(problem)?;
    let init = initial_guess(problem, &seed)?;
    solve_from(problem, init, opts)
}

/// Solves from a given `T × dof` initial guess (its first row is replaced by
/// the start state).
pub fn solve_from(
    problem: &PlanningProblem,
    mut s: DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<Trajectory, PlannerError> {
    problem.validate()?;
    let clock = Instant::now();
    if s.shape() != (problem.steps, problem.dof()) {
        return Err(PlannerError::InvalidProblem(format!(
            "initial guess is {}x{}, expected {}x{}",
            s.nrows(),
            s.ncols(),
            problem.steps,
            problem.dof()
        )));
    }
    s.set_row(0, &problem.x_start.0.transpose());
    let ctx = Ctx::new(problem, *opts);
    ctx.project(&mut s);
    let mut lam = ctx.multipliers();
    let mut mu = opts.mu0;
    let mut stats = SolverStats::default();
    for outer in 0..opts.max_outer {
        stats.inner_iterations += ctx.inner(&mut s, &lam, mu)?;
        stats.outer_iterations = outer + 1;
        let viol = ctx.update(&s, &mut lam, mu)?;
        log::debug!("outer {outer}: mu {mu:.1e}, violation {viol:.3e}");
        if viol <= opts.tolerance {
            break;
        }
        mu *= opts.mu_factor;
    }
    let names = problem.vkc.moving_joints().map(|j| j.name.clone()).collect();
    let mut traj = Trajectory::from_states(s, problem.dt, names);
    let check = verify(problem, &traj)?;
    stats.objective = objective(&traj.states, &problem.w_v, &problem.w_a);
    stats.goal = check.worst.goal;
    stats.seconds = clock.elapsed().as_secs_f64();
    traj.residuals = check.steps;
    traj.stats = stats;
    if check.passed {
        Ok(traj)
    } else {
        Err(PlannerError::Infeasible {
            report: check.worst,
            failures: check.failures.iter().map(|s| s.to_string()).collect(),
            trajectory: Box::new(traj),
        })
    }
}
