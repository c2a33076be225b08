//! Manipulator rigid-body dynamics by recursive Newton-Euler.

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, Vector3, Vector4, Vector6};

use crate::error::DynamicsError;
use crate::kinematics::{ChainState, JointKind, KinematicChain};
use crate::platform::{PlatformParams, EE_LINK};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmState {
    pub q: Vector4<f64>,
    pub qd: Vector4<f64>,
}

impl ArmState {
    pub fn new(q: Vector4<f64>, qd: Vector4<f64>) -> Self {
        Self { q, qd }
    }

    pub fn at_rest(q: Vector4<f64>) -> Self {
        Self::new(q, Vector4::zeros())
    }
}

/// `(M, C, G)`: inertia matrix, Coriolis/centrifugal vector, gravity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmTerms {
    pub mass_matrix: Matrix4<f64>,
    pub coriolis: Vector4<f64>,
    pub gravity: Vector4<f64>,
}

/// Arm chain plus gravity magnitude; gravity direction is supplied per call
/// in the arm-base frame.
#[derive(Debug, Clone)]
pub struct ArmModel {
    chain: KinematicChain,
    g: f64,
    armature: f64,
}

impl ArmModel {
    pub fn new(params: &PlatformParams) -> Self {
        Self {
            chain: params.arm_chain(),
            g: params.vehicle.g,
            armature: params.arm.armature_kg_m2,
        }
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    /// Gravity in the arm-base frame when the body is level.
    pub fn level_gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.g)
    }

    /// Joint forces for motion `(q, qd, qdd)` with gravity `g_base`.
    pub fn inverse_dynamics(
        &self,
        q: &[f64],
        qd: &[f64],
        qdd: &[f64],
        g_base: &Vector3<f64>,
    ) -> DVector<f64> {
        let mut tau = rnea(&self.chain, q, qd, qdd, g_base);
        for (t, a) in tau.iter_mut().zip(qdd) {
            *t += self.armature * a;
        }
        tau
    }

    pub fn terms(&self, arm: &ArmState, g_base: &Vector3<f64>) -> ArmTerms {
        let q = arm.q.as_slice();
        let zero = [0.0; 4];
        let mut m = Matrix4::zeros();
        for i in 0..4 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            let col = rnea(&self.chain, q, &zero, &e, &Vector3::zeros());
            m.set_column(i, &Vector4::from_iterator(col.iter().copied()));
        }
        // exact symmetry; RNEA columns agree to rounding
        let m = (m + m.transpose()) * 0.5 + Matrix4::identity() * self.armature;
        let c = rnea(&self.chain, q, arm.qd.as_slice(), &zero, &Vector3::zeros());
        let g = rnea(&self.chain, q, &zero, &zero, g_base);
        ArmTerms {
            mass_matrix: m,
            coriolis: Vector4::from_iterator(c.iter().copied()),
            gravity: Vector4::from_iterator(g.iter().copied()),
        }
    }

    /// Terms with the body level.
    pub fn dynamics_terms(&self, arm: &ArmState) -> ArmTerms {
        self.terms(arm, &self.level_gravity())
    }

    /// Geometric Jacobian of the tool point in the arm-base frame.
    pub fn tool_jacobian(&self, q: &Vector4<f64>) -> SMatrix<f64, 6, 4> {
        let j = self
            .chain
            .jacobian(&ChainState(DVector::from_column_slice(q.as_slice())), EE_LINK)
            .expect("arm chain has a tool link");
        SMatrix::<f64, 6, 4>::from_iterator(j.iter().copied())
    }

    /// `q̈ = M⁻¹ (τ + J_extᵀ F_ext − C − G)`.
    pub fn accel(
        &self,
        arm: &ArmState,
        tau: &Vector4<f64>,
        f_ext: &Vector6<f64>,
        j_ext: &SMatrix<f64, 6, 4>,
        g_base: &Vector3<f64>,
    ) -> Result<Vector4<f64>, DynamicsError> {
        let t = self.terms(arm, g_base);
        let rhs = tau + j_ext.transpose() * f_ext - t.coriolis - t.gravity;
        let chol = t.mass_matrix.cholesky().ok_or(DynamicsError::SingularInertia)?;
        Ok(chol.solve(&rhs))
    }

    /// Potential energy `Σ -m_i gᵀ r_i` of the links.
    pub fn potential_energy(&self, q: &Vector4<f64>, g_base: &Vector3<f64>) -> f64 {
        let poses = self
            .chain
            .link_poses(&ChainState(DVector::from_column_slice(q.as_slice())))
            .expect("arm state has four values");
        self.chain
            .links()
            .iter()
            .zip(&poses)
            .map(|(l, p)| -l.mass * g_base.dot(&p.transform_point(&l.com)))
            .sum()
    }

    pub fn kinetic_energy(&self, arm: &ArmState) -> f64 {
        let m = self.dynamics_terms(arm).mass_matrix;
        0.5 * arm.qd.dot(&(m * arm.qd))
    }

    /// Coriolis matrix from Christoffel symbols of a finite-differenced `M`.
    pub fn coriolis_matrix(&self, arm: &ArmState) -> Matrix4<f64> {
        let h = 1e-6;
        let dm: Vec<Matrix4<f64>> = (0..4)
            .map(|k| {
                let mut qp = arm.q;
                let mut qm = arm.q;
                qp[k] += h;
                qm[k] -= h;
                (self.dynamics_terms(&ArmState::at_rest(qp)).mass_matrix
                    - self.dynamics_terms(&ArmState::at_rest(qm)).mass_matrix)
                    / (2.0 * h)
            })
            .collect();
        Matrix4::from_fn(|i, j| {
            (0..4)
                .map(|k| 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * arm.qd[k])
                .sum()
        })
    }
}

/// Recursive Newton-Euler over a serial chain with identity child offsets.
///
/// Link frames sit at joint frames; gravity enters as a fictitious base
/// acceleration `-g_base`.
pub fn rnea(
    chain: &KinematicChain,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
    g_base: &Vector3<f64>,
) -> DVector<f64> {
    let n = chain.joints().len();
    let dof = chain.dof();
    let idx = chain.dof_indices();
    let links = chain.links();

    let mut w = vec![Vector3::zeros(); n + 1];
    let mut wd = vec![Vector3::zeros(); n + 1];
    let mut a = vec![Vector3::zeros(); n + 1];
    a[0] = -g_base;
    let mut rot = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    let mut f = vec![Vector3::zeros(); n + 1];
    let mut nm = vec![Vector3::zeros(); n + 1];

    for (i, j) in chain.joints().iter().enumerate() {
        debug_assert!(j.child_offset == crate::transform::RigidTransform::identity());
        let (qi, qdi, qddi) = idx[i].map(|k| (q[k], qd[k], qdd[k])).unwrap_or((0.0, 0.0, 0.0));
        let t = j.transform(qi);
        let rt = t.rotation.transpose();
        let p = t.translation;
        let axis = j.axis;
        let wp = rt * w[i];
        let wdp = rt * wd[i];
        let ap = rt * (a[i] + wd[i].cross(&p) + w[i].cross(&w[i].cross(&p)));
        match j.kind {
            JointKind::Revolute => {
                w[i + 1] = wp + axis * qdi;
                wd[i + 1] = wdp + axis * qddi + wp.cross(&(axis * qdi));
                a[i + 1] = ap;
            }
            JointKind::Prismatic => {
                w[i + 1] = wp;
                wd[i + 1] = wdp;
                a[i + 1] = ap + 2.0 * wp.cross(&(axis * qdi)) + axis * qddi;
            }
            JointKind::Fixed => {
                w[i + 1] = wp;
                wd[i + 1] = wdp;
                a[i + 1] = ap;
            }
        }
        rot.push(t.rotation);
        pos.push(p);
    }
    for (i, l) in links.iter().enumerate() {
        let c = l.com;
        let ac = a[i] + wd[i].cross(&c) + w[i].cross(&w[i].cross(&c));
        f[i] = ac * l.mass;
        nm[i] = l.inertia * wd[i] + w[i].cross(&(l.inertia * w[i])) + c.cross(&f[i]);
    }
    let mut tau = DVector::zeros(dof);
    for i in (1..=n).rev() {
        let joint = &chain.joints()[i - 1];
        if let Some(k) = idx[i - 1] {
            tau[k] = match joint.kind {
                JointKind::Revolute => joint.axis.dot(&nm[i]),
                JointKind::Prismatic => joint.axis.dot(&f[i]),
                JointKind::Fixed => 0.0,
            };
        }
        let fr = rot[i - 1] * f[i];
        let nr = rot[i - 1] * nm[i] + pos[i - 1].cross(&fr);
        f[i - 1] += fr;
        nm[i - 1] += nr;
    }
    tau
}

/// Dense `M(q)` for any chain, used by tests on generic chains.
pub fn mass_matrix(chain: &KinematicChain, q: &[f64]) -> DMatrix<f64> {
    let dof = chain.dof();
    let zero = vec![0.0; dof];
    let mut m = DMatrix::zeros(dof, dof);
    for i in 0..dof {
        let mut e = vec![0.0; dof];
        e[i] = 1.0;
        m.set_column(i, &rnea(chain, q, &zero, &e, &Vector3::zeros()));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> ArmModel {
        ArmModel::new(&PlatformParams::default())
    }

    #[test]
    fn coriolis_vanishes_at_rest() {
        let m = model();
        let t = m.dynamics_terms(&ArmState::at_rest(Vector4::new(0.3, -0.2, 0.5, 1.0)));
        assert_eq!(t.coriolis, Vector4::zeros());
    }

    #[test]
    fn single_pendulum_gravity() {
        // link1 alone horizontal: torque = m g l_c
        let m = model();
        let q = Vector4::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0);
        let t = m.dynamics_terms(&ArmState::at_rest(q));
        let p = PlatformParams::default();
        let masses = p.arm.masses_kg;
        let l = p.arm.lengths_m;
        // lever of each link's com from the q1 axis with the arm straight and horizontal
        let lever = [0.05, l[0] + 0.05, l[0] + l[1] + 0.03, l[0] + l[1] + l[2] + 0.02];
        let expect: f64 = (0..4).map(|i| masses[i] * 9.81 * lever[i]).sum();
        // G = dU/dq with U = -sum m g L cos(q1): holding torque is +m g L at q1 = pi/2
        assert_relative_eq!(t.gravity[0], expect, epsilon = 1e-12);
    }

    #[test]
    fn accel_rejects_singular_inertia() {
        let mut p = PlatformParams::default();
        p.arm.masses_kg = [0.0; 4];
        p.arm.diag_inertia_kg_cm2 = [[0.0; 3]; 4];
        p.arm.armature_kg_m2 = 0.0;
        let m = ArmModel::new(&p);
        let r = m.accel(
            &ArmState::default(),
            &Vector4::zeros(),
            &Vector6::zeros(),
            &SMatrix::zeros(),
            &m.level_gravity(),
        );
        assert_eq!(r, Err(DynamicsError::SingularInertia));
    }
}
