use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uam_vkc::collision::{signed_distance, CollisionPrimitive, PlacedShape, Shape};
use uam_vkc::kinematics::{ChainState, Joint, JointKind, KinematicChain, Link};
use uam_vkc::math::exp_so3;
use uam_vkc::planner::{
    chain_constraint, collision_constraints, ee_link, execute_sequence, goal_constraint, limit_constraints,
    objective, solve, verify, CollisionWorld, GoalSpec, Limits, PlanningProblem, PreAction, GOAL_TOL,
};
use uam_vkc::scenario::{self, Scenario};
use uam_vkc::RigidTransform;

fn homogeneous(t: &RigidTransform) -> Matrix4<f64> {
    t.to_homogeneous()
}

/// Link pose as a product of 4×4 matrices, independent of the chain's own
/// forward kinematics.
fn fk_oracle(chain: &KinematicChain, x: &ChainState, link: usize) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    let mut k = 0;
    for j in &chain.joints()[..link] {
        let mut motion = Matrix4::identity();
        match j.kind {
            JointKind::Revolute => {
                let r = Rotation3::from_axis_angle(&Unit::new_normalize(j.axis), x.0[k]);
                motion.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
                k += 1;
            }
            JointKind::Prismatic => {
                motion.fixed_view_mut::<3, 1>(0, 3).copy_from(&(j.axis * x.0[k]));
                k += 1;
            }
            JointKind::Fixed => {}
        }
        m = m * homogeneous(&j.origin) * motion * homogeneous(&j.child_offset);
    }
    m
}

/// `[Δp; R_target · axis-angle(R_targetᵀ R)]`
fn pose_error_oracle(m: &Matrix4<f64>, target: &RigidTransform) -> [f64; 6] {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
    let dp = m.fixed_view::<3, 1>(0, 3) - target.translation;
    let rel = Rotation3::from_matrix_unchecked(target.rotation.transpose() * r);
    let dr = target.rotation * rel.scaled_axis();
    [dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]
}

fn slider(n: usize) -> KinematicChain {
    let mut links = vec![Link::massless("base")];
    let mut joints = Vec::new();
    for i in 0..n {
        links.push(Link::massless(&format!("l{i}")));
        joints.push(Joint::prismatic(&format!("j{i}"), RigidTransform::identity(), Vector3::x(), [-5.0, 5.0]));
    }
    KinematicChain::new(links, joints).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn objective_matches_difference_operator_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (t, n) = (rng.random_range(3..15), rng.random_range(1..6));
        let s = random_matrix(&mut rng, t, n);
        let w_v = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        let w_a = DVector::from_fn(n, |_, _| rng.random_range(0.0..2.0));
        let d1 = DMatrix::from_fn(t - 1, t, |i, j| [(i, -1.0), (i + 1, 1.0)].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1));
        let d2 = DMatrix::from_fn(t - 2, t, |i, j| {
            [(i, 1.0), (i + 1, -2.0), (i + 2, 1.0)].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
        });
        let expected = (&d1 * &s * DMatrix::from_diagonal(&w_v)).norm_squared()
            + (&d2 * &s * DMatrix::from_diagonal(&w_a)).norm_squared();
        assert!((objective(&s, &w_v, &w_a) - expected).abs() < 1e-12 * (1.0 + expected));
    }
}

#[test]
fn objective_of_constant_and_linear_paths() {
    let (t, n) = (30, 4);
    let w = DVector::from_element(n, 1.0);
    let a = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0]);
    let b = DVector::from_vec(vec![0.01, 0.02, -0.03, 0.5]);
    let constant = DMatrix::from_fn(t, n, |_, i| a[i]);
    assert_eq!(objective(&constant, &w, &w), 0.0);
    let linear = DMatrix::from_fn(t, n, |k, i| a[i] + b[i] * k as f64);
    let expected = (t - 1) as f64 * b.norm_squared();
    assert!((objective(&linear, &w, &w) - expected).abs() < 1e-12);
}

#[test]
fn limit_residuals_report_exact_violations() {
    let limits = Limits {
        lower: DVector::from_vec(vec![-1.0, 0.0]),
        upper: DVector::from_vec(vec![1.0, 2.0]),
        vel: DVector::from_vec(vec![1.0, 1.0]),
        acc: DVector::from_vec(vec![10.0, 10.0]),
    };
    let dt = 0.1;
    // DoF 0 overshoots its upper bound at t = 2; DoF 1 jumps at t = 3
    let s = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.05, 1.0, 1.3, 1.0, 1.3, 1.5]);
    let r = limit_constraints(&s, &limits, dt);
    assert!((r.position[(2, 0)] - 0.3).abs() < 1e-12);
    assert_eq!(r.position.iter().filter(|v| **v > 0.0).count(), 2);
    assert!((r.position[(3, 0)] - 0.3).abs() < 1e-12);
    // |1.25 / 0.1| − 1 and |0.5 / 0.1| − 1
    assert!((r.velocity[(1, 0)] - 11.5).abs() < 1e-9);
    assert!((r.velocity[(2, 1)] - 4.0).abs() < 1e-9);
    assert_eq!(r.velocity[(0, 0)], 0.0);
    // (1.3 − 2·0.05 + 0) / 0.01 − 10
    assert!((r.acceleration[(0, 0)] - 110.0).abs() < 1e-9);
    // (1.3 − 2·1.3 + 0.05) / 0.01 → |−125| − 10
    assert!((r.acceleration[(1, 0)] - 115.0).abs() < 1e-9);
    assert!((r.max() - 115.0).abs() < 1e-9);
}

fn random_pose(rng: &mut ChaCha8Rng, spread: f64) -> RigidTransform {
    let w = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
    let p = Vector3::from_fn(|_, _| rng.random_range(-spread..spread));
    RigidTransform::new(exp_so3(&w), p)
}

/// Point-sampled sphere-box distance: the box surface on an `n × n` grid per face.
fn sphere_box_oracle(c: &Vector3<f64>, r: f64, pose: &RigidTransform, half: &[f64; 3], n: usize) -> f64 {
    let local = pose.inverse().transform_point(c);
    let inside = (0..3).all(|i| local[i].abs() < half[i]);
    let mut best = f64::INFINITY;
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [-1.0, 1.0] {
            for a in 0..n {
                for b in 0..n {
                    let mut p = Vector3::zeros();
                    p[axis] = side * half[axis];
                    p[u] = half[u] * (2.0 * a as f64 / (n - 1) as f64 - 1.0);
                    p[v] = half[v] * (2.0 * b as f64 / (n - 1) as f64 - 1.0);
                    best = best.min((p - local).norm());
                }
            }
        }
    }
    if inside {
        -best - r
    } else {
        best - r
    }
}

#[test]
fn sphere_box_distance_matches_point_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 201;
    for _ in 0..60 {
        let half = [rng.random_range(0.05..0.3), rng.random_range(0.05..0.3), rng.random_range(0.05..0.3)];
        let pose = random_pose(&mut rng, 0.5);
        let c = Vector3::from_fn(|_, _| rng.random_range(-0.8..0.8));
        let r = rng.random_range(0.01..0.1);
        let analytic = signed_distance(
            &PlacedShape::new(Shape::Sphere { radius: r }, RigidTransform::from_translation(c)),
            &PlacedShape::new(Shape::Box { half_extents: half }, pose),
        )
        .unwrap();
        let sampled = sphere_box_oracle(&c, r, &pose, &half, n);
        // grid spacing bounds the sampling error; sampling can only overestimate |d|
        let spacing = 2.0 * half.iter().cloned().fold(0.0, f64::max) / (n - 1) as f64;
        assert!((analytic - sampled).abs() <= spacing, "{analytic} vs {sampled}");
        assert!(analytic.abs() <= sampled.abs() + 1e-12);
    }
}

#[test]
fn capsule_distances_match_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let m = 1001;
    for _ in 0..10 {
        let (pa, pb) = (random_pose(&mut rng, 0.4), random_pose(&mut rng, 0.4));
        let (ra, rb) = (rng.random_range(0.01..0.1), rng.random_range(0.01..0.1));
        let (ha, hb) = (rng.random_range(0.0..0.3), rng.random_range(0.0..0.3));
        let a = PlacedShape::new(Shape::Capsule { radius: ra, half_length: ha }, pa);
        let b = PlacedShape::new(Shape::Capsule { radius: rb, half_length: hb }, pb);
        let point = |p: &RigidTransform, h: f64, s: f64| p.transform_point(&Vector3::new(0.0, 0.0, h * (2.0 * s - 1.0)));
        let mut best = f64::INFINITY;
        for i in 0..m {
            let x = point(&pa, ha, i as f64 / (m - 1) as f64);
            for j in 0..m {
                best = best.min((x - point(&pb, hb, j as f64 / (m - 1) as f64)).norm());
            }
        }
        let sampled = best - ra - rb;
        let d = signed_distance(&a, &b).unwrap();
        assert!(d <= sampled + 1e-12 && sampled - d < 2.0 * (ha + hb) / (m - 1) as f64, "{d} vs {sampled}");
    }
}

#[test]
fn box_box_pairs_are_rejected() {
    let b = PlacedShape::new(Shape::Box { half_extents: [0.1; 3] }, RigidTransform::identity());
    assert!(signed_distance(&b, &b).is_err());
}

#[test]
fn environment_term_sums_pairwise_hinges() {
    let scenario = Scenario::builtin("task1").unwrap();
    let chain = scenario.robot_chain().unwrap();
    let mut x = scenario.start_state();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let d_safe = 0.05;
    for _ in 0..30 {
        for i in 6..10 {
            x.0[i] = rng.random_range(-1.5..1.5);
        }
        let poses = chain.link_poses(&x).unwrap();
        let tip = chain.forward_kinematics(&x, chain.tip_link()).unwrap();
        // a sphere obstacle near the end-effector, a capsule near the body
        let obstacles = vec![
            CollisionPrimitive::new(
                "ball",
                Shape::Sphere { radius: 0.05 },
                "world",
                RigidTransform::from_translation(tip.translation + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1))),
            ),
            CollisionPrimitive::new(
                "pole",
                Shape::Capsule { radius: 0.02, half_length: 0.5 },
                "world",
                RigidTransform::from_translation(x.0.fixed_rows::<3>(0) + Vector3::new(0.25, 0.0, 0.0)),
            ),
        ];
        let mut expected = 0.0;
        for (l, pose) in chain.links().iter().zip(&poses) {
            for g in &l.collision_geoms {
                let placed = PlacedShape::new(g.shape, *pose * g.offset);
                for o in &obstacles {
                    if matches!(g.shape, Shape::Box { .. }) && matches!(o.shape, Shape::Box { .. }) {
                        continue;
                    }
                    let d = signed_distance(&placed, &PlacedShape::new(o.shape, o.offset)).unwrap();
                    expected += (d_safe - d).max(0.0);
                }
            }
        }
        let (env, _) = collision_constraints(&chain, &x, &CollisionWorld::new(obstacles), d_safe).unwrap();
        assert!((env - expected).abs() < 1e-12, "{env} vs {expected}");
    }
}

#[test]
fn drawer_loop_closure_residual_matches_pose_error() {
    let mut scene = scenario::drawer().scene().unwrap();
    scene
        .apply(&PreAction::Attach {
            object: "drawer".into(),
            grasp_offset: RigidTransform::identity(),
        })
        .unwrap();
    let (vkc, x0, anchors) = scene.current_chain().unwrap();
    assert_eq!(anchors.len(), 1);
    assert_eq!(vkc.dof(), 11);
    // the realised grasp closes the loop exactly at the start state
    assert!(chain_constraint(&vkc, &x0, &anchors).unwrap().amax() < 1e-12);
    let idx = vkc.link_index(&anchors[0].link).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let x = ChainState(DVector::from_fn(vkc.dof(), |i, _| x0.0[i] + rng.random_range(-0.5..0.5)));
        let r = chain_constraint(&vkc, &x, &anchors).unwrap();
        let e = pose_error_oracle(&fk_oracle(&vkc, &x, idx), &anchors[0].pose);
        for k in 0..6 {
            assert!((r[k] - e[k]).abs() < 1e-10, "component {k}: {} vs {}", r[k], e[k]);
        }
    }
}

#[test]
fn ee_goal_constraint_matches_forward_kinematics() {
    let scenario = Scenario::builtin("task1").unwrap();
    let chain = scenario.robot_chain().unwrap();
    let idx = chain.link_index(ee_link(&chain)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..100 {
        let x = ChainState(DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0)));
        let goal = GoalSpec::ee_pose(random_pose(&mut rng, 1.0)).with_tolerance(1e-3);
        let e = pose_error_oracle(&fk_oracle(&chain, &x, idx), match &goal.kind {
            uam_vkc::planner::GoalKind::EePose { target } => target,
            _ => unreachable!(),
        });
        let expected = e.iter().map(|v| v * v).sum::<f64>() - 1e-3;
        let got = goal_constraint(&chain, &x, &goal).unwrap();
        // two independent rotation logarithms; relative agreement
        assert!((got - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{got} vs {expected}");
    }
}

#[test]
fn one_dof_velocity_objective_reaches_analytic_optimum() {
    let mut p = PlanningProblem::new(slider(1), ChainState::from_slice(&[-0.5]), GoalSpec::joints(&[1.5]));
    p.steps = 11;
    p.w_a[0] = 0.0;
    let traj = solve(&p).unwrap();
    // straight line to the near edge of the goal ball
    let end = 1.5 - p.goal.xi_goal.sqrt();
    let best = (end + 0.5).powi(2) / 10.0;
    assert!((traj.stats.objective - best).abs() < 1e-8, "{} vs {best}", traj.stats.objective);
}

#[test]
fn start_at_goal_gives_constant_trajectory() {
    let start = [0.2, -0.4, 1.0];
    let p = PlanningProblem::new(slider(3), ChainState::from_slice(&start), GoalSpec::joints(&start));
    let traj = solve(&p).unwrap();
    for t in 0..traj.len() {
        for (i, s) in start.iter().enumerate() {
            assert!((traj.states[(t, i)] - s).abs() < 1e-9);
        }
    }
    assert!(traj.stats.objective < 1e-15);
}

#[test]
fn cabinet_plan_hands_off_continuously() {
    let s = scenario::drawer();
    let mut scene = s.scene().unwrap();
    let planned = execute_sequence(&mut scene, &s.steps).unwrap();
    assert_eq!(planned.len(), 6);
    for p in &planned {
        let v = verify(&p.problem, &p.trajectory).unwrap();
        assert!(v.passed, "step {} failed: {:?}", p.name, v.failures);
        assert!(v.worst.goal <= GOAL_TOL);
    }
    for w in planned.windows(2) {
        let (a, b) = (&w[0].trajectory, &w[1].trajectory);
        let end = a.last();
        let start = b.state(0);
        for i in 0..10 {
            assert!((end.0[i] - start.0[i]).abs() < 1e-9, "{} → {}: DoF {i}", w[0].name, w[1].name);
        }
    }
    // the drawer stays where the open step left it until it is grasped again
    let open = planned.iter().find(|p| p.name == "open").unwrap();
    let close = planned.iter().find(|p| p.name == "close").unwrap();
    assert_eq!(open.attached.as_deref(), Some("drawer"));
    assert!((open.trajectory.last().0[10] - close.trajectory.state(0).0[10]).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_is_invariant_under_time_reversal(vals in proptest::collection::vec(-2.0f64..2.0, 8 * 3)) {
        let s = DMatrix::from_row_slice(8, 3, &vals);
        let rev = DMatrix::from_fn(8, 3, |k, i| s[(7 - k, i)]);
        let w = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let (a, b) = (objective(&s, &w, &w), objective(&rev, &w, &w));
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a));
    }

    #[test]
    fn limit_residuals_vanish_inside_the_box(vals in proptest::collection::vec(-0.99f64..0.99, 10 * 2)) {
        // small steps from a point inside the bounds
        let s = DMatrix::from_fn(10, 2, |k, i| 0.5 * vals[2 * k + i] * 0.01 + 0.1 * i as f64);
        let limits = Limits {
            lower: DVector::from_element(2, -1.0),
            upper: DVector::from_element(2, 1.0),
            vel: DVector::from_element(2, 1.0),
            acc: DVector::from_element(2, 100.0),
        };
        prop_assert_eq!(limit_constraints(&s, &limits, 0.1).max(), 0.0);
    }
}
