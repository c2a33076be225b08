//! Continuous references from planned knot states: cubic Hermite segments
//! with central-difference tangents and zero end velocities.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};

use crate::controller::{ArmReference, VehicleReference};
use crate::dynamics::VehicleState;
use crate::math::{xyz_body_rates, xyz_to_matrix};

/// Reference at one instant. `x` holds the chain values in planner order
/// (base position, base angles, arm, then any object DoF).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub x: DVector<f64>,
    pub vehicle: VehicleReference,
    pub arm: ArmReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    knots: DMatrix<f64>,
    tangents: DMatrix<f64>,
    dt: f64,
}

impl Reference {
    /// `knots` is T×n with the first ten columns the robot DoF.
    pub fn new(knots: DMatrix<f64>, dt: f64) -> Self {
        assert!(knots.ncols() >= 10 && knots.nrows() >= 1 && dt > 0.0);
        let t = knots.nrows();
        let mut tangents = DMatrix::zeros(t, knots.ncols());
        for k in 1..t.saturating_sub(1) {
            let m = (knots.row(k + 1) - knots.row(k - 1)) / (2.0 * dt);
            tangents.set_row(k, &m);
        }
        Self { knots, tangents, dt }
    }

    /// Constant reference.
    pub fn hold(x: &DVector<f64>) -> Self {
        Self::new(DMatrix::from_row_slice(1, x.len(), x.as_slice()), 1.0)
    }

    pub fn duration(&self) -> f64 {
        (self.knots.nrows() - 1) as f64 * self.dt
    }

    pub fn dof(&self) -> usize {
        self.knots.ncols()
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.knots.row(self.knots.nrows() - 1).transpose()
    }

    /// Value, rate and acceleration of every column at time `t` (clamped).
    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.knots.ncols();
        let last = self.knots.nrows() - 1;
        if last == 0 || t >= self.duration() {
            return (self.final_state(), DVector::zeros(n), DVector::zeros(n));
        }
        let t = t.max(0.0);
        let k = ((t / self.dt).floor() as usize).min(last - 1);
        let s = (t - k as f64 * self.dt) / self.dt;
        let h = self.dt;
        let (s2, s3) = (s * s, s * s * s);
        let b = [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2];
        let db = [6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s];
        let ddb = [12.0 * s - 6.0, 6.0 * s - 4.0, -12.0 * s + 6.0, 6.0 * s - 2.0];
        let p0 = self.knots.row(k).transpose();
        let p1 = self.knots.row(k + 1).transpose();
        let m0 = self.tangents.row(k).transpose() * h;
        let m1 = self.tangents.row(k + 1).transpose() * h;
        let mix = |c: &[f64; 4]| &p0 * c[0] + &m0 * c[1] + &p1 * c[2] + &m1 * c[3];
        (mix(&b), mix(&db) / h, mix(&ddb) / (h * h))
    }

    pub fn at(&self, t: f64) -> ReferencePoint {
        let (x, xd, xdd) = self.sample(t);
        let v3 = |v: &DVector<f64>, i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
        let v4 = |v: &DVector<f64>| Vector4::new(v[6], v[7], v[8], v[9]);
        let angles = v3(&x, 3);
        let omega = xyz_body_rates(&angles, &v3(&xd, 3));
        // body angular acceleration by a central difference of the rates
        let h = 1e-5;
        let w_at = |tt: f64| {
            let (a, ad, _) = self.sample(tt);
            xyz_body_rates(&v3(&a, 3), &v3(&ad, 3))
        };
        let omega_dot = (w_at(t + h) - w_at(t - h)) / (2.0 * h);
        ReferencePoint {
            vehicle: VehicleReference {
                state: VehicleState {
                    p: v3(&x, 0),
                    rotation: xyz_to_matrix(&angles),
                    v: v3(&xd, 0),
                    omega,
                },
                v_dot: v3(&xdd, 0),
                omega_dot,
            },
            arm: ArmReference {
                q: v4(&x),
                qd: v4(&xd),
                qdd: v4(&xdd),
            },
            x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn passes_through_knots_with_consistent_rates() {
        let mut k = DMatrix::zeros(5, 10);
        for t in 0..5 {
            for j in 0..10 {
                k[(t, j)] = ((t * (j + 1)) as f64 * 0.1).sin();
            }
        }
        let r = Reference::new(k.clone(), 0.1);
        for t in 0..5 {
            assert_relative_eq!(r.sample(t as f64 * 0.1).0, k.row(t).transpose(), epsilon = 1e-12);
        }
        let (_, v, a) = r.sample(0.0);
        assert!(v.amax() < 1e-12);
        let h = 1e-6;
        let t = 0.137;
        let fd = (r.sample(t + h).0 - r.sample(t - h).0) / (2.0 * h);
        assert_relative_eq!(fd, r.sample(t).1, epsilon = 1e-6);
        let fd2 = (r.sample(t + h).1 - r.sample(t - h).1) / (2.0 * h);
        assert_relative_eq!(fd2, r.sample(t).2, epsilon = 1e-4);
        assert!(a.iter().all(|x| x.is_finite()));
        let end = r.at(10.0);
        assert_eq!(end.vehicle.state.v, Vector3::zeros());
    }
}
