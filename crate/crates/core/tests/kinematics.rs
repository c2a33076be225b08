use std::time::Instant;

use nalgebra::{DVector, Matrix4, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uam_vkc::kinematics::{
    attach_virtual_joint, detach_virtual_joint, grasp_offset, invert_chain, ChainState, JointKind, KinematicChain,
};
use uam_vkc::math::log_so3;
use uam_vkc::scenario::{self, Scenario};
use uam_vkc::RigidTransform;

fn robot() -> KinematicChain {
    Scenario::builtin("task1").unwrap().robot_chain().unwrap()
}

fn random_state(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> ChainState {
    let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
    ChainState(DVector::from_fn(chain.dof(), |i, _| {
        rng.random_range(lo[i].max(-3.0)..=hi[i].min(3.0))
    }))
}

fn homogeneous(t: &RigidTransform) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.translation);
    m
}

/// Independent forward kinematics: product of 4×4 matrices, joint motion
/// from nalgebra's axis-angle rotation.
fn fk_oracle(chain: &KinematicChain, x: &ChainState, upto: usize) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    let mut k = 0;
    for j in &chain.joints()[..upto] {
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

#[test]
fn forward_kinematics_matches_matrix_product() {
    let chain = robot();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = random_state(&chain, &mut rng);
        for (i, l) in chain.links().iter().enumerate() {
            let fk = chain.forward_kinematics(&x, &l.name).unwrap();
            let err = (homogeneous(&fk) - fk_oracle(&chain, &x, i)).amax();
            assert!(err < 1e-12, "link {} error {err:e}", l.name);
        }
    }
}

#[test]
fn jacobian_matches_finite_differences_on_ten_dof_chain() {
    let chain = robot();
    assert_eq!(chain.dof(), 10);
    let tip = chain.tip_link().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let started = Instant::now();
    for _ in 0..100 {
        let x = random_state(&chain, &mut rng);
        let jac = chain.jacobian(&x, &tip).unwrap();
        let mut fd = jac.clone() * 0.0;
        for c in 0..chain.dof() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.0[c] += h;
            xm.0[c] -= h;
            let tp = chain.forward_kinematics(&xp, &tip).unwrap();
            let tm = chain.forward_kinematics(&xm, &tip).unwrap();
            let lin = (tp.translation - tm.translation) / (2.0 * h);
            // world-frame angular velocity from R⁺ R⁻ᵀ
            let ang = log_so3(&(tp.rotation * tm.rotation.transpose())) / (2.0 * h);
            fd.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
            fd.fixed_view_mut::<3, 1>(3, c).copy_from(&ang);
        }
        let rel = (&jac - &fd).norm() / jac.norm().max(1e-12);
        assert!(rel < 1e-5, "relative error {rel:e}");
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn inversion_round_trips_forward_kinematics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for chain in [scenario::drawer().objects[0].chain().unwrap(), scenario::task2().objects[0].chain().unwrap(), robot()] {
        let root = chain.root_link().to_string();
        let tip = chain.tip_link().to_string();
        let inv = invert_chain(&chain, &tip).unwrap();
        for _ in 0..100 {
            let x = random_state(&chain, &mut rng);
            let xi = ChainState(DVector::from_iterator(x.len(), x.0.iter().rev().map(|v| -v)));
            let fwd = chain.forward_kinematics(&x, &tip).unwrap();
            let back = inv.forward_kinematics(&xi, &root).unwrap();
            let err = (homogeneous(&(fwd * back)) - Matrix4::identity()).amax();
            assert!(err < 1e-10, "round trip error {err:e}");
        }
        // inverting twice restores the chain's kinematics
        let twice = invert_chain(&inv, &root).unwrap();
        let x = random_state(&chain, &mut rng);
        let a = chain.forward_kinematics(&x, &tip).unwrap();
        let b = twice.forward_kinematics(&x, &tip).unwrap();
        assert!((homogeneous(&a) - homogeneous(&b)).amax() < 1e-12);
    }
}

#[test]
fn virtual_joint_attach_detach_restores_both_chains() {
    let robot = robot();
    let ee = robot.tip_link().to_string();
    let object = scenario::task2().objects[0].chain().unwrap();
    let inverted = invert_chain(&object, object.tip_link()).unwrap();
    let offset = RigidTransform::from_xyz_rpy([0.01, -0.02, 0.03], [0.1, 0.2, -0.3]);
    let vkc = attach_virtual_joint(&robot, &ee, &inverted, &offset).unwrap();
    assert_eq!(vkc.dof(), robot.dof() + object.dof());
    let g = grasp_offset(&vkc).unwrap();
    assert!((homogeneous(&g) - homogeneous(&offset)).amax() < 1e-15);
    let (r, o) = detach_virtual_joint(&vkc).unwrap();
    assert_eq!(r, robot);
    assert_eq!(o, inverted);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn link_rotations_stay_orthonormal(vals in proptest::collection::vec(-3.0f64..3.0, 10)) {
        let chain = robot();
        let x = ChainState(DVector::from_vec(vals));
        for pose in chain.link_poses(&x).unwrap() {
            prop_assert!(pose.orthonormality_error() < 1e-12);
        }
    }

    #[test]
    fn base_translation_moves_every_link_rigidly(
        vals in proptest::collection::vec(-3.0f64..3.0, 10),
        d in proptest::array::uniform3(-1.0f64..1.0),
    ) {
        let chain = robot();
        let x = ChainState(DVector::from_vec(vals));
        let mut y = x.clone();
        for (i, di) in d.iter().enumerate() {
            y.0[i] += di;
        }
        let a = chain.link_poses(&x).unwrap();
        let b = chain.link_poses(&y).unwrap();
        // links from the third prismatic joint on carry the full shift
        for (pa, pb) in a.iter().zip(&b).skip(3) {
            prop_assert!((pb.translation - pa.translation - Vector3::from(d)).amax() < 1e-12);
            prop_assert!((pb.rotation - pa.rotation).amax() < 1e-12);
        }
    }
}
