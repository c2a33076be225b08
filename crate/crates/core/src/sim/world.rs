use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::controller::{ActuatorConfig, ActuatorRates};
use crate::dynamics::{vehicle_wrench, ArmState, ThrustCommand, VehicleModel, VehicleState};
use crate::kinematics::ChainState;
use crate::math::{hat, log_so3, orthonormalize};
use crate::planner::{ObjectModel, Parent};
use crate::platform::EE_LINK;
use crate::transform::RigidTransform;

use super::SimError;

/// Joint-limit stop stiffness and damping (SI joint units).
const STOP_STIFFNESS: f64 = 200.0;
const STOP_DAMPING: f64 = 2.0;
/// Velocity scale of the smoothed dry friction.
const FRICTION_VEL: f64 = 0.01;
/// Added joint inertia keeping light object joints well conditioned.
const ARMATURE: f64 = 1e-4;

/// 6-D spring-damper between the gripper and a held handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspSpring {
    /// N/m
    pub k_lin: f64,
    /// N·s/m
    pub d_lin: f64,
    /// N·m/rad
    pub k_rot: f64,
    /// N·m·s/rad
    pub d_rot: f64,
}

impl Default for GraspSpring {
    fn default() -> Self {
        Self {
            k_lin: 500.0,
            d_lin: 20.0,
            k_rot: 5.0,
            d_rot: 0.5,
        }
    }
}

impl GraspSpring {
    pub fn validate(&self) -> Result<(), String> {
        if [self.k_lin, self.d_lin, self.k_rot, self.d_rot]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err("grasp spring coefficients must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// A scene object with its joint damping and friction.
#[derive(Debug, Clone)]
pub struct SimObject {
    pub model: ObjectModel,
    pub damping: f64,
    pub friction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSimState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    /// World pose of the root link when neither held rigidly nor stowed.
    pub base_pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub vehicle: VehicleState,
    pub arm: ArmState,
    pub actuators: ThrustCommand,
    pub objects: Vec<ObjectSimState>,
}

/// Inputs held constant over one physics step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldInputs {
    pub actuator: ActuatorRates,
    pub arm_torque: Vector4<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Hold {
    /// Articulated object held through the grasp spring.
    Spring { object: usize, offset: RigidTransform },
    /// Free object carried rigidly by the gripper.
    Rigid { object: usize, offset: RigidTransform },
}

/// External wrench on the robot, applied at `point` (world frame), plus the
/// generalised force on a held object's joints.
#[derive(Debug, Clone, PartialEq)]
struct Interaction {
    force: Vector3<f64>,
    torque: Vector3<f64>,
    point: Vector3<f64>,
    object: Option<(usize, DVector<f64>)>,
}

struct Deriv {
    p: Vector3<f64>,
    rotation: Matrix3<f64>,
    v: Vector3<f64>,
    omega: Vector3<f64>,
    q: Vector4<f64>,
    qd: Vector4<f64>,
    actuators: ThrustCommand,
    objects: Vec<(DVector<f64>, DVector<f64>)>,
}

/// Platform, objects and the current grasp.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub model: VehicleModel,
    pub objects: Vec<SimObject>,
    pub spring: GraspSpring,
    pub actuator: ActuatorConfig,
    hold: Option<Hold>,
    parents: Vec<Option<Parent>>,
}

impl SimWorld {
    pub fn new(model: VehicleModel, objects: Vec<SimObject>, spring: GraspSpring, actuator: ActuatorConfig) -> Self {
        let parents = vec![None; objects.len()];
        Self {
            model,
            objects,
            spring,
            actuator,
            hold: None,
            parents,
        }
    }

    pub fn held(&self) -> Option<usize> {
        self.hold.map(|h| match h {
            Hold::Spring { object, .. } | Hold::Rigid { object, .. } => object,
        })
    }

    pub fn parent(&self, i: usize) -> Option<&Parent> {
        self.parents[i].as_ref()
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.model.name == name)
    }

    pub fn ee_pose(&self, s: &WorldState) -> RigidTransform {
        let arm = self.model.arm().chain();
        let tool = arm
            .forward_kinematics(&ChainState(DVector::from_column_slice(s.arm.q.as_slice())), EE_LINK)
            .expect("arm has a tool link");
        RigidTransform::new(s.vehicle.rotation, s.vehicle.p) * self.model.params.arm_mount() * tool
    }

    /// Linear velocity of the tool point and angular velocity, world frame.
    pub fn ee_twist(&self, s: &WorldState) -> (Vector3<f64>, Vector3<f64>) {
        let r = s.vehicle.rotation;
        let ee = self.ee_pose(s);
        let r_b = r.transpose() * (ee.translation - s.vehicle.p);
        let j = self.model.arm().tool_jacobian(&s.arm.q);
        let tw = j * s.arm.qd;
        let lin = tw.fixed_rows::<3>(0).into_owned();
        let ang = tw.fixed_rows::<3>(3).into_owned();
        let v = s.vehicle.v + r * (s.vehicle.omega.cross(&r_b) + lin);
        let w = r * (s.vehicle.omega + ang);
        (v, w)
    }

    pub fn object_base_pose(&self, s: &WorldState, i: usize) -> RigidTransform {
        match &self.parents[i] {
            Some(p) => self.object_link_pose(s, p.object, &p.link) * p.offset,
            None => s.objects[i].base_pose,
        }
    }

    pub fn object_link_pose(&self, s: &WorldState, i: usize, link: &str) -> RigidTransform {
        let chain = &self.objects[i].model.chain;
        let local = chain
            .forward_kinematics(&ChainState(s.objects[i].q.clone()), link)
            .expect("object link exists");
        self.object_base_pose(s, i) * local
    }

    pub fn handle_pose(&self, s: &WorldState, i: usize) -> RigidTransform {
        self.object_link_pose(s, i, &self.objects[i].model.grasp_link)
    }

    /// World twist of a point fixed in object link `link` (only joint motion;
    /// bases are static or kinematic).
    fn object_point_twist(
        &self,
        s: &WorldState,
        i: usize,
        link: &str,
        local: &Vector3<f64>,
    ) -> (DMatrix<f64>, Vector3<f64>, Vector3<f64>) {
        let o = &self.objects[i];
        let idx = o.model.chain.link_index(link).expect("object link exists");
        let j = o
            .model
            .chain
            .point_jacobian(&ChainState(s.objects[i].q.clone()), idx, local)
            .expect("object state matches its chain");
        let rb = self.object_base_pose(s, i).rotation;
        let mut jw = j.clone();
        for c in 0..j.ncols() {
            let lin = rb * Vector3::new(j[(0, c)], j[(1, c)], j[(2, c)]);
            let ang = rb * Vector3::new(j[(3, c)], j[(4, c)], j[(5, c)]);
            jw.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
            jw.fixed_view_mut::<3, 1>(3, c).copy_from(&ang);
        }
        let tw = &jw * &s.objects[i].qd;
        let v = Vector3::new(tw[0], tw[1], tw[2]);
        let w = Vector3::new(tw[3], tw[4], tw[5]);
        (jw, v, w)
    }

    /// Gripper-to-handle distance and relative speed.
    pub fn grasp_gap(&self, s: &WorldState, i: usize) -> (f64, f64) {
        let ee = self.ee_pose(s);
        let h = self.handle_pose(s, i);
        let (v_ee, _) = self.ee_twist(s);
        let v_h = if self.objects[i].model.chain.dof() > 0 {
            self.object_point_twist(s, i, &self.objects[i].model.grasp_link, &Vector3::zeros()).1
        } else {
            Vector3::zeros()
        };
        ((ee.translation - h.translation).norm(), (v_ee - v_h).norm())
    }

    /// Closes the gripper on object `i` at the current relative pose.
    pub fn attach(&mut self, s: &mut WorldState, i: usize) -> RigidTransform {
        let ee = self.ee_pose(s);
        let offset = ee.inverse() * self.handle_pose(s, i);
        if self.objects[i].model.fixed_base {
            self.hold = Some(Hold::Spring { object: i, offset });
        } else {
            s.objects[i].base_pose = self.object_base_pose(s, i);
            self.parents[i] = None;
            self.hold = Some(Hold::Rigid { object: i, offset });
        }
        offset
    }

    /// Opens the gripper; a released free object is stowed in a container
    /// holding its centre. Returns the container object, if any.
    pub fn detach(&mut self, s: &WorldState) -> Option<usize> {
        let hold = self.hold.take()?;
        let Hold::Rigid { object: i, .. } = hold else {
            return None;
        };
        let base = self.object_base_pose(s, i);
        let centre = base.transform_point(&self.objects[i].model.centre);
        for j in 0..self.objects.len() {
            if j == i {
                continue;
            }
            let Some(c) = self.objects[j].model.container.clone() else {
                continue;
            };
            let link = self.object_link_pose(s, j, &c.link);
            if c.contains(&link, &centre) {
                self.parents[i] = Some(Parent {
                    object: j,
                    link: c.link.clone(),
                    offset: link.inverse() * base,
                });
                return Some(j);
            }
        }
        None
    }

    /// Whether object `i`'s centre lies inside object `j`'s container.
    pub fn inside(&self, s: &WorldState, i: usize, j: usize) -> bool {
        let Some(c) = &self.objects[j].model.container else {
            return false;
        };
        let centre = self.object_base_pose(s, i).transform_point(&self.objects[i].model.centre);
        c.contains(&self.object_link_pose(s, j, &c.link), &centre)
    }

    fn interaction(&self, s: &WorldState) -> Interaction {
        let g = Vector3::new(0.0, 0.0, -self.model.g());
        match self.hold {
            None => Interaction {
                force: Vector3::zeros(),
                torque: Vector3::zeros(),
                point: self.ee_pose(s).translation,
                object: None,
            },
            Some(Hold::Rigid { object, .. }) => {
                let chain = &self.objects[object].model.chain;
                let base = self.object_base_pose(s, object);
                let poses = chain
                    .link_poses(&ChainState(s.objects[object].q.clone()))
                    .expect("object state matches its chain");
                let mut m = 0.0;
                let mut moment = Vector3::zeros();
                for (l, p) in chain.links().iter().zip(&poses) {
                    m += l.mass;
                    moment += (base * *p).transform_point(&l.com) * l.mass;
                }
                let point = if m > 0.0 { moment / m } else { base.translation };
                Interaction {
                    force: g * m,
                    torque: Vector3::zeros(),
                    point,
                    object: None,
                }
            }
            Some(Hold::Spring { object, offset }) => {
                let k = &self.spring;
                let ee = self.ee_pose(s);
                let target = ee * offset;
                let (v_ee, w_ee) = self.ee_twist(s);
                let v_t = v_ee + w_ee.cross(&(target.translation - ee.translation));
                let link = self.objects[object].model.grasp_link.clone();
                let h = self.object_link_pose(s, object, &link);
                let (jh, v_h, w_h) = self.object_point_twist(s, object, &link, &Vector3::zeros());
                let f = (target.translation - h.translation) * k.k_lin + (v_t - v_h) * k.d_lin;
                let tau = h.rotation * log_so3(&(h.rotation.transpose() * target.rotation)) * k.k_rot
                    + (w_ee - w_h) * k.d_rot;
                let wrench = Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z);
                let q_obj = jh.transpose() * DVector::from_column_slice(wrench.as_slice());
                Interaction {
                    force: -f,
                    torque: -tau,
                    point: target.translation,
                    object: Some((object, q_obj)),
                }
            }
        }
    }

    /// `M(q) q̈ = Q` for a fixed-base articulated object.
    fn object_accel(&self, s: &WorldState, i: usize, q_ext: Option<&DVector<f64>>) -> DVector<f64> {
        let o = &self.objects[i];
        let chain = &o.model.chain;
        let n = chain.dof();
        let st = &s.objects[i];
        let x = ChainState(st.q.clone());
        let poses = chain.link_poses(&x).expect("object state matches its chain");
        let base = self.object_base_pose(s, i);
        let g_local = base.rotation.transpose() * Vector3::new(0.0, 0.0, -self.model.g());
        let mut m = DMatrix::identity(n, n) * ARMATURE;
        let mut q = DVector::zeros(n);
        for (idx, (l, p)) in chain.links().iter().zip(&poses).enumerate() {
            if l.mass == 0.0 && l.inertia == Matrix3::zeros() {
                continue;
            }
            let j = chain.point_jacobian(&x, idx, &l.com).expect("valid link");
            let jv = j.rows(0, 3);
            let jw = j.rows(3, 3);
            let inertia = p.rotation * l.inertia * p.rotation.transpose();
            let iw = DMatrix::from_column_slice(3, 3, inertia.as_slice());
            m += jv.transpose() * jv * l.mass + jw.transpose() * iw * jw;
            q += jv.transpose() * DVector::from_column_slice((g_local * l.mass).as_slice());
        }
        if let Some(e) = q_ext {
            q += e;
        }
        let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
        for k in 0..n {
            let (qk, vk) = (st.q[k], st.qd[k]);
            q[k] -= o.damping * vk + o.friction * (vk / FRICTION_VEL).tanh();
            if qk < lo[k] {
                q[k] += STOP_STIFFNESS * (lo[k] - qk) - STOP_DAMPING * vk;
            } else if qk > hi[k] {
                q[k] += STOP_STIFFNESS * (hi[k] - qk) - STOP_DAMPING * vk;
            }
        }
        m.cholesky().expect("object inertia is positive definite").solve(&q)
    }

    fn derivative(&self, s: &WorldState, u: &WorldInputs) -> Result<Deriv, SimError> {
        let r = s.vehicle.rotation;
        let ext = self.interaction(s);
        let ee = self.ee_pose(s).translation;
        let lever_body = ext.point - s.vehicle.p;
        let f_b = r.transpose() * ext.force;
        let t_b = r.transpose() * (ext.torque + lever_body.cross(&ext.force));
        let mut w = vehicle_wrench(&self.model.params.vehicle, &s.actuators);
        w += Vector6::new(f_b.x, f_b.y, f_b.z, t_b.x, t_b.y, t_b.z);
        let (vdot, wdot) = self.model.vehicle_accel(&s.arm.q, &s.vehicle, &w);

        let t_ee = r.transpose() * (ext.torque + (ext.point - ee).cross(&ext.force));
        let f_arm = Vector6::new(f_b.x, f_b.y, f_b.z, t_ee.x, t_ee.y, t_ee.z);
        let j: SMatrix<f64, 6, 4> = self.model.arm().tool_jacobian(&s.arm.q);
        let g_base = r.transpose() * Vector3::new(0.0, 0.0, -self.model.g());
        let qdd = self.model.arm().accel(&s.arm, &u.arm_torque, &f_arm, &j, &g_base)?;

        let mut objects = Vec::with_capacity(s.objects.len());
        for (i, o) in self.objects.iter().enumerate() {
            let st = &s.objects[i];
            if o.model.fixed_base && o.model.chain.dof() > 0 {
                let q_ext = ext.object.as_ref().filter(|(k, _)| *k == i).map(|(_, q)| q);
                objects.push((st.qd.clone(), self.object_accel(s, i, q_ext)));
            } else {
                objects.push((DVector::zeros(st.q.len()), DVector::zeros(st.q.len())));
            }
        }
        Ok(Deriv {
            p: s.vehicle.v,
            rotation: r * hat(&s.vehicle.omega),
            v: vdot,
            omega: wdot,
            q: s.arm.qd,
            qd: qdd,
            actuators: self.actuator.derivative(&u.actuator, &s.actuators),
            objects,
        })
    }

    fn advance(s: &WorldState, d: &Deriv, h: f64) -> WorldState {
        let a = &s.actuators;
        WorldState {
            t: s.t + h,
            vehicle: VehicleState {
                p: s.vehicle.p + d.p * h,
                rotation: s.vehicle.rotation + d.rotation * h,
                v: s.vehicle.v + d.v * h,
                omega: s.vehicle.omega + d.omega * h,
            },
            arm: ArmState::new(s.arm.q + d.q * h, s.arm.qd + d.qd * h),
            actuators: ThrustCommand {
                t: a.t + d.actuators.t * h,
                alpha: a.alpha + d.actuators.alpha * h,
                beta: a.beta + d.actuators.beta * h,
            },
            objects: s
                .objects
                .iter()
                .zip(&d.objects)
                .map(|(o, (dq, dqd))| ObjectSimState {
                    q: &o.q + dq * h,
                    qd: &o.qd + dqd * h,
                    base_pose: o.base_pose,
                })
                .collect(),
        }
    }

    /// One RK4 step with inputs held.
    pub fn step(&self, s: &WorldState, u: &WorldInputs, dt: f64) -> Result<WorldState, SimError> {
        let k1 = self.derivative(s, u)?;
        let k2 = self.derivative(&Self::advance(s, &k1, 0.5 * dt), u)?;
        let k3 = self.derivative(&Self::advance(s, &k2, 0.5 * dt), u)?;
        let k4 = self.derivative(&Self::advance(s, &k3, dt), u)?;
        let mut out = s.clone();
        let ks = [(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)];
        for (k, w) in ks {
            let h = dt * w / 6.0;
            out.vehicle.p += k.p * h;
            out.vehicle.rotation += k.rotation * h;
            out.vehicle.v += k.v * h;
            out.vehicle.omega += k.omega * h;
            out.arm.q += k.q * h;
            out.arm.qd += k.qd * h;
            out.actuators.t += k.actuators.t * h;
            out.actuators.alpha += k.actuators.alpha * h;
            out.actuators.beta += k.actuators.beta * h;
            for (o, (dq, dqd)) in out.objects.iter_mut().zip(&k.objects) {
                o.q += dq * h;
                o.qd += dqd * h;
            }
        }
        out.t = s.t + dt;
        out.vehicle.rotation = orthonormalize(&out.vehicle.rotation);
        if let Some(Hold::Rigid { object, offset }) = self.hold {
            let chain = &self.objects[object].model.chain;
            let grasp = chain
                .forward_kinematics(&ChainState(out.objects[object].q.clone()), &self.objects[object].model.grasp_link)
                .expect("grasp link exists");
            out.objects[object].base_pose = self.ee_pose(&out) * offset * grasp.inverse();
        }
        let finite = out.vehicle.p.iter().chain(out.vehicle.v.iter()).chain(out.vehicle.omega.iter()).all(|x| x.is_finite())
            && out.vehicle.rotation.iter().all(|x| x.is_finite())
            && out.arm.q.iter().chain(out.arm.qd.iter()).all(|x| x.is_finite())
            && out.objects.iter().all(|o| o.q.iter().chain(o.qd.iter()).all(|x| x.is_finite()));
        if !finite {
            return Err(SimError::Diverged {
                t: out.t,
                reason: "non-finite state".into(),
            });
        }
        Ok(out)
    }

    /// Total linear momentum of platform and arm (vehicle-level model).
    pub fn linear_momentum(&self, s: &WorldState) -> Vector3<f64> {
        s.vehicle.v * self.model.mass()
    }

    /// Potential energy stored in the grasp spring (zero unless an
    /// articulated object is held).
    pub fn spring_energy(&self, s: &WorldState) -> f64 {
        let Some(Hold::Spring { object, offset }) = self.hold else {
            return 0.0;
        };
        let target = self.ee_pose(s) * offset;
        let h = self.handle_pose(s, object);
        let dp = target.translation - h.translation;
        let dr = log_so3(&(h.rotation.transpose() * target.rotation));
        0.5 * self.spring.k_lin * dp.norm_squared() + 0.5 * self.spring.k_rot * dr.norm_squared()
    }
}
