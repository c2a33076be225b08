//! Small SO(3) helpers shared by kinematics, dynamics and control.

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] on the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Roll-pitch-yaw to rotation, `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rpy_to_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    *Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).matrix()
}

/// Inverse of [`rpy_to_matrix`]; pitch is returned in `[-pi/2, pi/2]`.
pub fn matrix_to_rpy(r: &Matrix3<f64>) -> Vector3<f64> {
    let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(*r).euler_angles();
    Vector3::new(roll, pitch, yaw)
}

/// Rotation of the floating-base joints, `R = Rx(a) Ry(b) Rz(c)`.
pub fn xyz_to_matrix(a: &Vector3<f64>) -> Matrix3<f64> {
    axis_angle(&Vector3::x(), a.x) * axis_angle(&Vector3::y(), a.y) * axis_angle(&Vector3::z(), a.z)
}

/// Inverse of [`xyz_to_matrix`] on the branch closest to `near`, with each
/// angle unwrapped to within `pi` of its counterpart in `near`.
pub fn matrix_to_xyz_near(r: &Matrix3<f64>, near: &Vector3<f64>) -> Vector3<f64> {
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    let (a, c) = if b.cos().abs() < 1e-9 {
        // singular: only a ± c is defined; keep `a` where it was
        let a = near.x;
        let rest = xyz_to_matrix(&Vector3::new(a, b, 0.0)).transpose() * r;
        (a, rest[(1, 0)].atan2(rest[(0, 0)]))
    } else {
        ((-r[(1, 2)]).atan2(r[(2, 2)]), (-r[(0, 1)]).atan2(r[(0, 0)]))
    };
    let pi = std::f64::consts::PI;
    let unwrap = |x: f64, n: f64| n + wrap_angle(x - n);
    let cands = [Vector3::new(a, b, c), Vector3::new(a + pi, pi - b, c + pi)];
    cands
        .iter()
        .map(|v| Vector3::new(unwrap(v.x, near.x), unwrap(v.y, near.y), unwrap(v.z, near.z)))
        .min_by(|u, v| (u - near).norm().total_cmp(&(v - near).norm()))
        .expect("two candidates")
}

/// Body angular velocity of [`xyz_to_matrix`] for angle rates `rates`.
pub fn xyz_body_rates(a: &Vector3<f64>, rates: &Vector3<f64>) -> Vector3<f64> {
    let ry = axis_angle(&Vector3::y(), a.y);
    let rz = axis_angle(&Vector3::z(), a.z);
    rz.transpose() * (ry.transpose() * Vector3::x() * rates.x + Vector3::y() * rates.y) + Vector3::z() * rates.z
}

/// Rotation of `angle` about a unit `axis`.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = hat(axis);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// SO(3) exponential of a rotation vector.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        return Matrix3::identity() + hat(w);
    }
    axis_angle(&(w / theta), theta)
}

/// SO(3) logarithm as a rotation vector with angle in `[0, pi]`.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    if theta < 1e-8 {
        return vee(r);
    }
    if std::f64::consts::PI - theta < 1e-3 {
        // near pi the skew part vanishes; recover the axis from the symmetric
        // part, which equals ((1 - cos) / 2) a aᵀ once the identity share is removed
        let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
        let (i, _) = (0..3)
            .map(|i| (i, b[(i, i)]))
            .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        let mut axis = Vector3::new(b[(0, i)], b[(1, i)], b[(2, i)]);
        axis /= axis.norm();
        // keep the sign consistent with the (small) skew part
        let s = vee(r);
        if s.dot(&axis) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee(r) * (theta / theta.sin())
}

/// Re-orthonormalise a rotation matrix drifting from SO(3).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut m = u * vt;
    if m.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        m = u2 * vt;
    }
    m
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn xyz_angles_round_trip_and_rates() {
        let a = Vector3::new(2.9, 0.4, -1.2);
        let r = xyz_to_matrix(&a);
        assert_relative_eq!(matrix_to_xyz_near(&r, &a), a, epsilon = 1e-12);
        let far = matrix_to_xyz_near(&r, &Vector3::zeros());
        assert_relative_eq!(xyz_to_matrix(&far), r, epsilon = 1e-12);
        // rates against a finite difference of the rotation
        let rates = Vector3::new(0.3, -0.7, 1.1);
        let h = 1e-6;
        let r2 = xyz_to_matrix(&(a + rates * h));
        let w = vee(&(r.transpose() * (r2 - r))) / h;
        assert_relative_eq!(xyz_body_rates(&a, &rates), w, epsilon = 1e-5);
    }

    #[test]
    fn log_exp_round_trip() {
        for w in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(0.0, 0.0, 3.1),
            // just short of π
            Vector3::new(std::f64::consts::PI - 1e-5, 0.0, 0.0),
            Vector3::new(1e-10, 0.0, 0.0),
        ] {
            let r = exp_so3(&w);
            assert_relative_eq!(exp_so3(&log_so3(&r)), r, epsilon = 1e-9);
        }
    }

    #[test]
    fn rpy_matches_elementary_yaw() {
        let r = rpy_to_matrix(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let expect = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(r, expect, epsilon = 1e-12);
        let rpy = Vector3::new(0.3, -0.4, 1.2);
        assert_relative_eq!(matrix_to_rpy(&rpy_to_matrix(&rpy)), rpy, epsilon = 1e-12);
    }

    #[test]
    fn wrap() {
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-0.5), -0.5);
    }
}
