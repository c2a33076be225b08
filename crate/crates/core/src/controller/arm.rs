//! Computed-torque control of the arm with an integral term.

use nalgebra::{Vector3, Vector4};

use crate::dynamics::{ArmModel, ArmState};

use super::{clamp_sym, GainTriple};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmReference {
    pub q: Vector4<f64>,
    pub qd: Vector4<f64>,
    pub qdd: Vector4<f64>,
}

impl ArmReference {
    pub fn hold(q: Vector4<f64>) -> Self {
        Self {
            q,
            ..Default::default()
        }
    }
}

/// `τ = M q̈ᵈ + C + G`, `q̈ᵈ = q̈ʳ + K1 ė + K2 e + K3 ∫e`, `e = qʳ − q`.
pub fn arm_torque(
    model: &ArmModel,
    state: &ArmState,
    reference: &ArmReference,
    gains: &GainTriple<Vector4<f64>>,
    integral: &Vector4<f64>,
    g_base: &Vector3<f64>,
) -> Vector4<f64> {
    let e = reference.q - state.q;
    let ed = reference.qd - state.qd;
    let qdd = reference.qdd + gains.k1.component_mul(&ed) + gains.k2.component_mul(&e) + gains.k3.component_mul(integral);
    let t = model.terms(state, g_base);
    t.mass_matrix * qdd + t.coriolis + t.gravity
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmController {
    pub gains: GainTriple<Vector4<f64>>,
    pub integral_limit: f64,
    integral: Vector4<f64>,
}

impl ArmController {
    pub fn new(gains: GainTriple<Vector4<f64>>, integral_limit: f64) -> Self {
        Self {
            gains,
            integral_limit,
            integral: Vector4::zeros(),
        }
    }

    pub fn integral(&self) -> &Vector4<f64> {
        &self.integral
    }

    pub fn update(
        &mut self,
        model: &ArmModel,
        state: &ArmState,
        reference: &ArmReference,
        g_base: &Vector3<f64>,
        dt: f64,
    ) -> Vector4<f64> {
        self.integral = clamp_sym(&(self.integral + (reference.q - state.q) * dt), self.integral_limit);
        arm_torque(model, state, reference, &self.gains, &self.integral, g_base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Gains;
    use crate::platform::PlatformParams;
    use approx::assert_relative_eq;
    use nalgebra::{SMatrix, Vector6};

    #[test]
    fn holds_against_gravity_at_reference() {
        let model = ArmModel::new(&PlatformParams::default());
        let q = Vector4::new(0.1, -0.7, 0.4, 0.2);
        let g = model.level_gravity();
        let tau = arm_torque(
            &model,
            &ArmState::at_rest(q),
            &ArmReference::hold(q),
            &Gains::default().arm,
            &Vector4::zeros(),
            &g,
        );
        assert_relative_eq!(tau, model.terms(&ArmState::at_rest(q), &g).gravity, epsilon = 1e-12);
    }

    #[test]
    fn zero_gains_cancel_bias_terms() {
        let model = ArmModel::new(&PlatformParams::default());
        let s = ArmState::new(Vector4::new(0.3, -0.2, 0.5, 0.0), Vector4::new(1.0, -0.5, 0.3, 2.0));
        let g = model.level_gravity();
        let zero = GainTriple::<Vector4<f64>>::uniform(0.0, 0.0, 0.0);
        let tau = arm_torque(&model, &s, &ArmReference::hold(Vector4::zeros()), &zero, &Vector4::zeros(), &g);
        let t = model.terms(&s, &g);
        assert_relative_eq!(tau, t.coriolis + t.gravity, epsilon = 1e-12);
    }

    #[test]
    fn closed_loop_converges_from_offset() {
        let model = ArmModel::new(&PlatformParams::default());
        let g = model.level_gravity();
        let target = Vector4::new(0.0, -0.6, 0.3, 0.0);
        let reference = ArmReference::hold(target);
        let mut s = ArmState::at_rest(target + Vector4::repeat(0.2));
        let mut ctl = ArmController::new(Gains::default().arm, 1.0);
        let (dt, ctl_every) = (1e-3, 2);
        let mut tau = Vector4::zeros();
        let none = (Vector6::zeros(), SMatrix::<f64, 6, 4>::zeros());
        for k in 0..2000 {
            if k % ctl_every == 0 {
                tau = ctl.update(&model, &s, &reference, &g, dt * ctl_every as f64);
            }
            let f = |st: &ArmState| model.accel(st, &tau, &none.0, &none.1, &g).unwrap();
            // RK4 on (q, qd)
            let k1 = (s.qd, f(&s));
            let s2 = ArmState::new(s.q + k1.0 * dt / 2.0, s.qd + k1.1 * dt / 2.0);
            let k2 = (s2.qd, f(&s2));
            let s3 = ArmState::new(s.q + k2.0 * dt / 2.0, s.qd + k2.1 * dt / 2.0);
            let k3 = (s3.qd, f(&s3));
            let s4 = ArmState::new(s.q + k3.0 * dt, s.qd + k3.1 * dt);
            let k4 = (s4.qd, f(&s4));
            s.q += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * dt / 6.0;
            s.qd += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * dt / 6.0;
        }
        assert!((target - s.q).amax() < 1e-3, "{}", (target - s.q).amax());
    }
}
