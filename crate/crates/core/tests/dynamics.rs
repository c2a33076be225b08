use nalgebra::{Matrix4, Vector3, Vector4, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uam_vkc::controller::{allocate, allocate_near, high_level_wrench, WrenchCommand};
use uam_vkc::dynamics::{vehicle_wrench, ArmModel, ArmState, VehicleModel, VehicleState};
use uam_vkc::math::exp_so3;
use uam_vkc::platform::PlatformParams;

fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-s..s))
}

fn v4(rng: &mut ChaCha8Rng, s: f64) -> Vector4<f64> {
    Vector4::from_fn(|_, _| rng.random_range(-s..s))
}

#[test]
fn feedback_linearisation_yields_commanded_accelerations() {
    let model = VehicleModel::new(PlatformParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let state = VehicleState {
            p: v3(&mut rng, 2.0),
            rotation: exp_so3(&v3(&mut rng, 3.0)),
            v: v3(&mut rng, 1.0),
            omega: v3(&mut rng, 2.0),
        };
        let q = v4(&mut rng, 1.5);
        let (u_v, u_w) = (v3(&mut rng, 3.0), v3(&mut rng, 5.0));
        let w = high_level_wrench(&model, &q, &state, &u_v, &u_w);
        let (vdot, wdot) = model.vehicle_accel(&q, &state, &w.to_vector());
        assert!((vdot - u_v).amax() < 1e-10, "{:e}", (vdot - u_v).amax());
        assert!((wdot - u_w).amax() < 1e-10, "{:e}", (wdot - u_w).amax());
    }
}

fn rk4_arm(model: &ArmModel, s: &ArmState, g: &Vector3<f64>, dt: f64) -> ArmState {
    // gravity compensation: τ = G(q), re-evaluated at every stage
    let f = |a: &ArmState| {
        let tau = model.terms(a, g).gravity;
        let qdd = model
            .accel(a, &tau, &Vector6::zeros(), &nalgebra::SMatrix::zeros(), g)
            .unwrap();
        (a.qd, qdd)
    };
    let at = |k: (Vector4<f64>, Vector4<f64>), h: f64| ArmState::new(s.q + k.0 * h, s.qd + k.1 * h);
    let k1 = f(s);
    let k2 = f(&at(k1, 0.5 * dt));
    let k3 = f(&at(k2, 0.5 * dt));
    let k4 = f(&at(k3, dt));
    ArmState::new(
        s.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0),
        s.qd + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0),
    )
}

#[test]
fn gravity_compensated_arm_conserves_kinetic_energy() {
    let model = ArmModel::new(&PlatformParams::default());
    let g = model.level_gravity();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = ArmState::new(v4(&mut rng, 1.0), v4(&mut rng, 2.0));
    let e0 = model.kinetic_energy(&s);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        s = rk4_arm(&model, &s, &g, 1e-4);
        worst = worst.max((model.kinetic_energy(&s) - e0).abs());
    }
    assert!(e0 > 1e-4, "test needs a moving arm");
    assert!(worst < 1e-5, "energy drift {worst:e} J");
}

#[test]
fn mass_matrix_derivative_minus_twice_coriolis_is_skew() {
    let model = ArmModel::new(&PlatformParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for _ in 0..50 {
        let s = ArmState::new(v4(&mut rng, 2.0), v4(&mut rng, 2.0));
        let m = |q: Vector4<f64>| model.dynamics_terms(&ArmState::at_rest(q)).mass_matrix;
        let mdot: Matrix4<f64> = (m(s.q + s.qd * h) - m(s.q - s.qd * h)) / (2.0 * h);
        let c = model.coriolis_matrix(&s);
        let n = mdot - c * 2.0;
        assert!((n + n.transpose()).amax() < 1e-8, "{:e}", (n + n.transpose()).amax());
        // C(q, q̇) q̇ is the velocity-product term of the recursive dynamics
        let cv = model.dynamics_terms(&s).coriolis;
        assert!((c * s.qd - cv).amax() < 1e-8);
    }
}

#[test]
fn allocation_round_trips_unsaturated_wrenches() {
    let p = PlatformParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let u = WrenchCommand {
            force: Vector3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(4.0..16.0)),
            torque: v3(&mut rng, 0.5),
        };
        let a = allocate(&p.vehicle, &u);
        if a.saturated {
            continue;
        }
        checked += 1;
        worst = worst.max((vehicle_wrench(&p.vehicle, &a.cmd) - u.to_vector()).amax());
    }
    assert!(worst < 1e-9, "worst round-trip error {worst:e}");
}

#[test]
fn hover_allocation_splits_weight_evenly() {
    let p = PlatformParams::default();
    let m = p.total_mass();
    assert!((m - 1.21).abs() < 1e-12);
    let u = WrenchCommand {
        force: Vector3::new(0.0, 0.0, m * p.vehicle.g),
        torque: Vector3::zeros(),
    };
    let a = allocate(&p.vehicle, &u);
    for t in a.cmd.t.iter() {
        assert!((t - m * 9.81 / 4.0).abs() < 1e-6);
        assert!((t - 2.968).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The branch chosen to stay near the previous command produces the
    /// same wrench as the plain allocation.
    #[test]
    fn near_allocation_preserves_the_wrench(
        f in proptest::array::uniform3(-3.0f64..3.0),
        t in proptest::array::uniform3(-0.3f64..0.3),
        a in proptest::array::uniform4(-6.0f64..6.0),
        b in proptest::array::uniform4(-1.5f64..1.5),
    ) {
        let p = PlatformParams::default();
        let u = WrenchCommand { force: Vector3::from(f) + Vector3::new(0.0, 0.0, 11.0), torque: Vector3::from(t) };
        let mut prev = allocate(&p.vehicle, &u).cmd;
        prev.alpha = Vector4::from(a);
        prev.beta = Vector4::from(b);
        let near = allocate_near(&p.vehicle, &u, &prev);
        let plain = allocate(&p.vehicle, &u);
        let wn = vehicle_wrench(&p.vehicle, &near.cmd);
        let wp = vehicle_wrench(&p.vehicle, &plain.cmd);
        prop_assert!((wn - wp).amax() < 1e-9);
    }

    /// Mass matrix stays symmetric positive definite over the workspace.
    #[test]
    fn arm_inertia_is_positive_definite(q in proptest::array::uniform4(-3.0f64..3.0)) {
        let model = ArmModel::new(&PlatformParams::default());
        let m = model.dynamics_terms(&ArmState::at_rest(Vector4::from(q))).mass_matrix;
        prop_assert!((m - m.transpose()).amax() < 1e-15);
        prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
    }
}
