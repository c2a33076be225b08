//! Minimum-norm allocation of a body wrench onto the four steerable thrust
//! generators. Each generator is treated as a free 3-D force at its centre;
//! magnitudes and gimbal angles follow from the force directions.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::dynamics::{gimbal_angles, ThrustCommand};
use crate::math::{hat, wrap_angle};
use crate::platform::VehicleParams;

use super::WrenchCommand;

/// Below this magnitude a generator keeps its previous gimbal angles.
const IDLE_THRUST: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub cmd: ThrustCommand,
    /// Factor applied to the requested wrench (1 when unsaturated).
    pub scale: f64,
    pub saturated: bool,
}

impl Allocation {
    /// Wrench the command actually asks for.
    pub fn achieved(&self, requested: &WrenchCommand) -> WrenchCommand {
        WrenchCommand {
            force: requested.force * self.scale,
            torque: requested.torque * self.scale,
        }
    }
}

/// `[Σ f_i; Σ d_i × f_i] = A f` for stacked per-generator forces.
pub fn allocation_matrix(params: &VehicleParams) -> SMatrix<f64, 6, 12> {
    let mut a = SMatrix::<f64, 6, 12>::zeros();
    for (i, d) in params.generator_offsets().iter().enumerate() {
        a.fixed_view_mut::<3, 3>(0, 3 * i).copy_from(&nalgebra::Matrix3::identity());
        a.fixed_view_mut::<3, 3>(3, 3 * i).copy_from(&hat(d));
    }
    a
}

fn forces(params: &VehicleParams, u: &WrenchCommand) -> SVector<f64, 12> {
    let a = allocation_matrix(params);
    let aat = a * a.transpose();
    let y = aat.cholesky().expect("generators span all six wrench directions").solve(&u.to_vector());
    a.transpose() * y
}

/// Allocation from scratch (principal gimbal branch).
pub fn allocate(params: &VehicleParams, u: &WrenchCommand) -> Allocation {
    allocate_with(params, u, None)
}

/// Allocation choosing, per generator, the gimbal branch closest to `prev`.
pub fn allocate_near(params: &VehicleParams, u: &WrenchCommand, prev: &ThrustCommand) -> Allocation {
    allocate_with(params, u, Some(prev))
}

fn allocate_with(params: &VehicleParams, u: &WrenchCommand, prev: Option<&ThrustCommand>) -> Allocation {
    let f = forces(params, u);
    let fi: Vec<Vector3<f64>> = (0..4).map(|i| f.fixed_rows::<3>(3 * i).into_owned()).collect();
    let t_max = params.generator_thrust_max();
    let peak = fi.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale = if peak > t_max { t_max / peak } else { 1.0 };
    let mut cmd = ThrustCommand::default();
    for (i, f) in fi.iter().enumerate() {
        let t = f.norm() * scale;
        cmd.t[i] = t.min(t_max);
        let (a, b) = match prev {
            Some(p) if t <= IDLE_THRUST => (p.alpha[i], p.beta[i]),
            Some(p) => {
                let (a, b) = gimbal_angles(params, i, f);
                let alt = (a + std::f64::consts::PI, std::f64::consts::PI - b);
                let dist = |(x, y): (f64, f64)| wrap_angle(x - p.alpha[i]).powi(2) + wrap_angle(y - p.beta[i]).powi(2);
                let (a, b) = if dist(alt) < dist((a, b)) { alt } else { (a, b) };
                // keep angles continuous with the previous command
                (p.alpha[i] + wrap_angle(a - p.alpha[i]), p.beta[i] + wrap_angle(b - p.beta[i]))
            }
            None if t <= IDLE_THRUST => (0.0, 0.0),
            None => gimbal_angles(params, i, f),
        };
        cmd.alpha[i] = a;
        cmd.beta[i] = b;
    }
    Allocation {
        cmd,
        scale,
        saturated: scale < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::vehicle_wrench;
    use approx::assert_relative_eq;

    #[test]
    fn hover_splits_evenly() {
        let p = VehicleParams::default();
        let u = WrenchCommand {
            force: Vector3::new(0.0, 0.0, 11.87),
            torque: Vector3::zeros(),
        };
        let a = allocate(&p, &u);
        assert!(!a.saturated);
        for i in 0..4 {
            assert_relative_eq!(a.cmd.t[i], 11.87 / 4.0, epsilon = 1e-12);
            assert_relative_eq!(a.cmd.alpha[i], 0.0, epsilon = 1e-12);
            assert_relative_eq!(a.cmd.beta[i], 0.0, epsilon = 1e-12);
        }
        assert_eq!(allocate(&p, &WrenchCommand::default()).cmd.t, nalgebra::Vector4::zeros());
    }

    #[test]
    fn branch_choice_preserves_the_wrench() {
        let p = VehicleParams::default();
        let u = WrenchCommand {
            force: Vector3::new(0.5, -1.0, -9.0),
            torque: Vector3::new(0.1, 0.2, -0.05),
        };
        let prev = ThrustCommand {
            t: nalgebra::Vector4::repeat(2.0),
            alpha: nalgebra::Vector4::repeat(3.0),
            beta: nalgebra::Vector4::zeros(),
        };
        let a = allocate_near(&p, &u, &prev);
        assert_relative_eq!(vehicle_wrench(&p, &a.cmd), u.to_vector(), epsilon = 1e-9);
        assert!((a.cmd.alpha - prev.alpha).amax() < 1.0);
    }

    #[test]
    fn saturation_scales_the_wrench() {
        let p = VehicleParams::default();
        let u = WrenchCommand {
            force: Vector3::new(0.0, 0.0, 60.0),
            torque: Vector3::new(0.5, 0.0, 0.0),
        };
        let a = allocate(&p, &u);
        assert!(a.saturated && a.scale < 1.0);
        assert!(a.cmd.t.max() <= p.generator_thrust_max() + 1e-12);
        assert_relative_eq!(vehicle_wrench(&p, &a.cmd), a.achieved(&u).to_vector(), epsilon = 1e-9);
    }
}
