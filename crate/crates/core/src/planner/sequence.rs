//! Multi-step execution: rebuilds the chain around grasp changes and hands
//! the joint values of robot and objects from one step to the next.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::CollisionPrimitive;
use crate::kinematics::{attach_virtual_joint, invert_chain, ChainState, KinematicChain};
use crate::transform::RigidTransform;

use super::constraints::ee_link;
use super::problem::{
    Anchor, CollisionWorld, GoalKind, GoalSpec, Limits, PlanningProblem, PreAction, Trajectory, DEFAULT_DIST_SAFE,
    DEFAULT_DT, DEFAULT_STEPS, DEFAULT_XI_DIST, DEFAULT_XI_GOAL,
};
use super::solver::{solve_with, SolverOptions};
use super::PlannerError;

/// A manipulable object: a serial chain rooted at its base link.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub name: String,
    pub chain: KinematicChain,
    /// Link the gripper holds; must be the root or the tip of `chain`.
    pub grasp_link: String,
    /// Whether the base is fixed in the world (articulated furniture) or the
    /// whole object moves with the gripper.
    pub fixed_base: bool,
    pub container: Option<Container>,
    /// Body centre relative to the root link, used for containment.
    pub centre: Vector3<f64>,
}

/// Axis-aligned box volume fixed to an object link; a released object whose
/// centre lies inside it is considered stowed there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub link: String,
    #[serde(default)]
    pub offset: RigidTransform,
    pub half_extents: [f64; 3],
}

impl Container {
    pub fn contains(&self, link_pose: &RigidTransform, p: &Vector3<f64>) -> bool {
        let local = (*link_pose * self.offset).inverse().transform_point(p);
        (0..3).all(|i| local[i].abs() <= self.half_extents[i])
    }
}

/// Link of another object that carries this one.
#[derive(Debug, Clone, PartialEq)]
pub struct Parent {
    pub object: usize,
    pub link: String,
    /// Base pose relative to the parent link.
    pub offset: RigidTransform,
}

/// Configuration of an object in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    /// World pose of the root link; stale while `parent` is set.
    pub base_pose: RigidTransform,
    pub q: DVector<f64>,
    pub parent: Option<Parent>,
}

/// Goal of a step, stated in terms of the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepGoal {
    /// End-effector at the object's grasp link composed with `grasp_offset⁻¹`.
    Grasp {
        object: String,
        #[serde(default)]
        grasp_offset: RigidTransform,
    },
    /// A joint of the grasped (or any) object at `value`.
    ObjectJoint { object: String, joint: String, value: f64 },
    /// World pose of an object link (defaults to the root).
    ObjectPose {
        object: String,
        #[serde(default)]
        link: Option<String>,
        pose: RigidTransform,
    },
    EePose { pose: RigidTransform },
    /// Robot joint values by name.
    RobotJoints { values: Vec<(String, f64)> },
}

/// Horizon, weights and tolerances of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSettings {
    pub steps: usize,
    pub dt: f64,
    /// Per-robot-DoF weights; object DoF use `w_object`.
    pub w_v: Option<Vec<f64>>,
    pub w_a: Option<Vec<f64>>,
    pub w_object: f64,
    pub xi_goal: f64,
    pub dist_safe: f64,
    pub xi_dist: f64,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            dt: DEFAULT_DT,
            w_v: None,
            w_a: None,
            w_object: 1.0,
            xi_goal: DEFAULT_XI_GOAL,
            dist_safe: DEFAULT_DIST_SAFE,
            xi_dist: DEFAULT_XI_DIST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStep {
    pub name: String,
    #[serde(default)]
    pub pre_action: PreAction,
    pub goal: StepGoal,
    #[serde(default)]
    pub settings: Option<StepSettings>,
}

#[derive(Debug, Clone)]
struct Grasp {
    object: usize,
    offset: RigidTransform,
}

/// Robot, objects and static obstacles plus the evolving configuration.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Floating-base robot chain rooted at the world.
    pub robot: KinematicChain,
    pub robot_state: ChainState,
    pub objects: Vec<ObjectModel>,
    pub object_states: Vec<ObjectState>,
    pub static_world: CollisionWorld,
    pub settings: StepSettings,
    pub options: SolverOptions,
    grasp: Option<Grasp>,
}

/// One solved step with the chain it was solved on.
#[derive(Debug, Clone)]
pub struct PlannedStep {
    pub name: String,
    pub pre_action: PreAction,
    pub problem: PlanningProblem,
    pub trajectory: Trajectory,
    /// Grasped object during the step.
    pub attached: Option<String>,
    /// Grasp offset (end-effector to grasp link) when attached.
    pub grasp_offset: Option<RigidTransform>,
}

impl Scene {
    pub fn new(
        robot: KinematicChain,
        robot_state: ChainState,
        objects: Vec<(ObjectModel, ObjectState)>,
        static_world: CollisionWorld,
    ) -> Self {
        let (objects, object_states) = objects.into_iter().unzip();
        Self {
            robot,
            robot_state,
            objects,
            object_states,
            static_world,
            settings: StepSettings::default(),
            options: SolverOptions::default(),
            grasp: None,
        }
    }

    pub fn object_index(&self, name: &str) -> Result<usize, PlannerError> {
        self.objects
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| PlannerError::InvalidProblem(format!("unknown object `{name}`")))
    }

    pub fn attached(&self) -> Option<&str> {
        self.grasp.as_ref().map(|g| self.objects[g.object].name.as_str())
    }

    /// World pose of the root link of object `i`, following any parent.
    pub fn object_base_pose(&self, i: usize) -> Result<RigidTransform, PlannerError> {
        let st = &self.object_states[i];
        match &st.parent {
            None => Ok(st.base_pose),
            Some(p) => Ok(self.object_link_pose(p.object, &p.link)? * p.offset),
        }
    }

    /// World pose of every link of object `i` at its current configuration.
    pub fn object_link_poses(&self, i: usize) -> Result<Vec<RigidTransform>, PlannerError> {
        let st = &self.object_states[i];
        let base = self.object_base_pose(i)?;
        let poses = self.objects[i].chain.link_poses(&ChainState(st.q.clone()))?;
        Ok(poses.into_iter().map(|p| base * p).collect())
    }

    /// Whether object `i` is `ancestor` or is carried (transitively) by it.
    fn carried_by(&self, mut i: usize, ancestor: usize) -> bool {
        for _ in 0..=self.objects.len() {
            if i == ancestor {
                return true;
            }
            match &self.object_states[i].parent {
                Some(p) => i = p.object,
                None => return false,
            }
        }
        false
    }

    /// Parents a free object to the first container holding its centre.
    fn stow(&mut self, i: usize) -> Result<(), PlannerError> {
        if self.objects[i].fixed_base {
            return Ok(());
        }
        let base = self.object_base_pose(i)?;
        let centre = base.transform_point(&self.objects[i].centre);
        for j in 0..self.objects.len() {
            if j == i || self.carried_by(j, i) {
                continue;
            }
            let Some(c) = self.objects[j].container.clone() else {
                continue;
            };
            let link = self.object_link_pose(j, &c.link)?;
            if c.contains(&link, &centre) {
                log::debug!("`{}` stowed in `{}`", self.objects[i].name, self.objects[j].name);
                self.object_states[i].parent = Some(Parent {
                    object: j,
                    link: c.link.clone(),
                    offset: link.inverse() * base,
                });
                break;
            }
        }
        Ok(())
    }

    /// Drops any parent, freezing the current world pose.
    fn unstow(&mut self, i: usize) -> Result<(), PlannerError> {
        let base = self.object_base_pose(i)?;
        let st = &mut self.object_states[i];
        st.base_pose = base;
        st.parent = None;
        Ok(())
    }

    pub fn object_link_pose(&self, i: usize, link: &str) -> Result<RigidTransform, PlannerError> {
        let idx = self.objects[i].chain.link_index(link)?;
        Ok(self.object_link_poses(i)?[idx])
    }

    /// Static obstacles plus every object not currently grasped.
    pub fn collision_world(&self) -> Result<CollisionWorld, PlannerError> {
        let mut obstacles = self.static_world.obstacles.clone();
        for (i, o) in self.objects.iter().enumerate() {
            if self.grasp.as_ref().is_some_and(|g| self.carried_by(i, g.object)) {
                continue;
            }
            let poses = self.object_link_poses(i)?;
            for (l, pose) in o.chain.links().iter().zip(&poses) {
                for g in &l.collision_geoms {
                    obstacles.push(CollisionPrimitive::new(
                        &format!("{}/{}", o.name, g.name),
                        g.shape,
                        "world",
                        *pose * g.offset,
                    ));
                }
            }
        }
        Ok(CollisionWorld::new(obstacles))
    }

    /// Object chain re-rooted at its grasp link.
    fn grasped_chain(&self, i: usize) -> Result<KinematicChain, PlannerError> {
        let o = &self.objects[i];
        Ok(invert_chain(&o.chain, &o.grasp_link)?)
    }

    fn inverted(&self, i: usize) -> bool {
        let o = &self.objects[i];
        o.chain.root_link() != o.grasp_link
    }

    /// Current chain, its state and the anchors that close the loop.
    pub fn current_chain(&self) -> Result<(KinematicChain, ChainState, Vec<Anchor>), PlannerError> {
        let Some(g) = &self.grasp else {
            return Ok((self.robot.clone(), self.robot_state.clone(), Vec::new()));
        };
        let o = &self.objects[g.object];
        let mut obj = self.grasped_chain(g.object)?;
        // objects stowed in the grasped one ride on their container link
        for (i, c) in self.objects.iter().enumerate() {
            let Some(p) = self.object_states[i].parent.as_ref().filter(|p| p.object == g.object) else {
                continue;
            };
            let carrier = self.object_link_pose(g.object, &p.link)?.inverse();
            for (l, pose) in c.chain.links().iter().zip(self.object_link_poses(i)?) {
                for geom in &l.collision_geoms {
                    let name = format!("{}/{}", c.name, geom.name);
                    let offset = carrier * pose * geom.offset;
                    obj.add_collision_geom(&p.link, CollisionPrimitive::new(&name, geom.shape, &p.link, offset))?;
                }
            }
        }
        let vkc = attach_virtual_joint(&self.robot, self.robot.tip_link(), &obj, &g.offset)?;
        let q = &self.object_states[g.object].q;
        let oq: Vec<f64> = if self.inverted(g.object) {
            q.iter().rev().map(|v| -v).collect()
        } else {
            q.iter().copied().collect()
        };
        let mut x = self.robot_state.0.iter().copied().collect::<Vec<_>>();
        x.extend(oq);
        let anchors = if o.fixed_base {
            vec![Anchor {
                link: o.chain.root_link().to_string(),
                pose: self.object_states[g.object].base_pose,
            }]
        } else {
            Vec::new()
        };
        Ok((vkc, ChainState::from_slice(&x), anchors))
    }

    fn attach(&mut self, object: &str) -> Result<(), PlannerError> {
        if self.grasp.is_some() {
            return Err(PlannerError::InvalidProblem(format!(
                "cannot attach `{object}`: already holding `{}`",
                self.attached().unwrap_or_default()
            )));
        }
        let i = self.object_index(object)?;
        self.unstow(i)?;
        let ee = self.robot.forward_kinematics(&self.robot_state, self.robot.tip_link())?;
        let handle = self.object_link_pose(i, &self.objects[i].grasp_link)?;
        // the offset actually realised at the end of the approach, not the nominal one
        self.grasp = Some(Grasp {
            object: i,
            offset: ee.inverse() * handle,
        });
        Ok(())
    }

    fn detach(&mut self) -> Result<(), PlannerError> {
        let Some(g) = self.grasp.take() else {
            return Err(PlannerError::InvalidProblem("cannot detach: nothing is grasped".into()));
        };
        self.stow(g.object)
    }

    pub fn apply(&mut self, action: &PreAction) -> Result<(), PlannerError> {
        match action {
            PreAction::None => Ok(()),
            PreAction::Attach { object, .. } => self.attach(object),
            PreAction::Detach => self.detach(),
        }
    }

    /// Writes a final chain state back into robot and object states.
    fn absorb(&mut self, vkc: &KinematicChain, x: &ChainState) -> Result<(), PlannerError> {
        let nr = self.robot.dof();
        self.robot_state = ChainState::from_slice(&x.0.as_slice()[..nr]);
        if let Some(g) = self.grasp.clone() {
            let oq = &x.0.as_slice()[nr..];
            let q: Vec<f64> = if self.inverted(g.object) {
                oq.iter().rev().map(|v| -v).collect()
            } else {
                oq.to_vec()
            };
            let root = self.objects[g.object].chain.root_link().to_string();
            let base = vkc.forward_kinematics(x, &root)?;
            let st = &mut self.object_states[g.object];
            st.q = DVector::from_vec(q);
            if !self.objects[g.object].fixed_base {
                st.base_pose = base;
            }
        }
        Ok(())
    }

    /// Index of an object joint within the current chain's DoF.
    fn object_dof(&self, vkc: &KinematicChain, object: usize, joint: &str) -> Result<(usize, f64), PlannerError> {
        let o = &self.objects[object];
        if vkc.dof_index(joint).is_none() || !o.chain.joints().iter().any(|j| j.name == joint) {
            return Err(PlannerError::InvalidProblem(format!(
                "joint `{joint}` of `{}` is not in the current chain",
                o.name
            )));
        }
        let sign = if self.grasp.as_ref().is_some_and(|g| g.object == object) && self.inverted(object) {
            -1.0
        } else {
            1.0
        };
        Ok((vkc.dof_index(joint).expect("checked above"), sign))
    }

    fn goal(&self, vkc: &KinematicChain, goal: &StepGoal, xi_goal: f64) -> Result<GoalSpec, PlannerError> {
        let n = vkc.dof();
        let kind = match goal {
            StepGoal::Grasp { object, grasp_offset } => {
                let i = self.object_index(object)?;
                let handle = self.object_link_pose(i, &self.objects[i].grasp_link)?;
                GoalKind::EePose {
                    target: handle * grasp_offset.inverse(),
                }
            }
            StepGoal::ObjectJoint { object, joint, value } => {
                let i = self.object_index(object)?;
                let (k, sign) = self.object_dof(vkc, i, joint)?;
                let mut target = vec![0.0; n];
                let mut mask = vec![false; n];
                target[k] = sign * value;
                mask[k] = true;
                GoalKind::JointTarget { target, mask }
            }
            StepGoal::ObjectPose { object, link, pose } => {
                let i = self.object_index(object)?;
                let link = link.clone().unwrap_or_else(|| self.objects[i].chain.root_link().to_string());
                GoalKind::LinkPose { link, target: *pose }
            }
            StepGoal::EePose { pose } => GoalKind::EePose { target: *pose },
            StepGoal::RobotJoints { values } => {
                let mut target = vec![0.0; n];
                let mut mask = vec![false; n];
                for (name, v) in values {
                    let k = vkc
                        .dof_index(name)
                        .ok_or_else(|| PlannerError::InvalidProblem(format!("unknown joint `{name}`")))?;
                    target[k] = *v;
                    mask[k] = true;
                }
                GoalKind::JointTarget { target, mask }
            }
        };
        Ok(GoalSpec { kind, xi_goal })
    }

    /// Planning problem for `step` from the current configuration (after its
    /// pre-action has been applied).
    pub fn problem(&self, step: &TaskStep) -> Result<PlanningProblem, PlannerError> {
        let s = step.settings.clone().unwrap_or_else(|| self.settings.clone());
        let (vkc, x, anchors) = self.current_chain()?;
        let n = vkc.dof();
        let nr = self.robot.dof();
        let weights = |w: &Option<Vec<f64>>| -> Result<DVector<f64>, PlannerError> {
            let mut v = DVector::from_element(n, s.w_object);
            match w {
                Some(w) if w.len() != nr => Err(PlannerError::InvalidProblem(format!(
                    "expected {nr} robot weights, got {}",
                    w.len()
                ))),
                Some(w) => {
                    v.rows_mut(0, nr).copy_from_slice(w);
                    Ok(v)
                }
                None => {
                    v.rows_mut(0, nr).fill(1.0);
                    Ok(v)
                }
            }
        };
        let goal = self.goal(&vkc, &step.goal, s.xi_goal)?;
        let limits = Limits::from_chain(&vkc);
        Ok(PlanningProblem {
            x_start: x,
            steps: s.steps,
            dt: s.dt,
            w_v: weights(&s.w_v)?,
            w_a: weights(&s.w_a)?,
            goal,
            limits,
            anchors,
            world: self.collision_world()?,
            dist_safe: s.dist_safe,
            xi_dist: s.xi_dist,
            vkc,
        })
    }

    /// Applies the pre-action, plans the step and advances the scene to its
    /// final state.
    pub fn plan_step(&mut self, step: &TaskStep) -> Result<PlannedStep, PlannerError> {
        self.apply(&step.pre_action)?;
        let problem = self.problem(step)?;
        log::info!(
            "planning `{}` on a {}-DoF chain ({} anchors, {} obstacles)",
            step.name,
            problem.dof(),
            problem.anchors.len(),
            problem.world.obstacles.len()
        );
        let trajectory = solve_with(&problem, &self.options)?;
        self.absorb(&problem.vkc, &trajectory.last())?;
        Ok(PlannedStep {
            name: step.name.clone(),
            pre_action: step.pre_action.clone(),
            attached: self.attached().map(str::to_string),
            grasp_offset: self.grasp.as_ref().map(|g| g.offset),
            problem,
            trajectory,
        })
    }

    /// Name of the robot end-effector link.
    pub fn ee_link(&self) -> &str {
        ee_link(&self.robot)
    }
}

/// Plans every step in order; the scene ends in the final configuration.
pub fn execute_sequence(scene: &mut Scene, steps: &[TaskStep]) -> Result<Vec<PlannedStep>, PlannerError> {
    let mut out = Vec::with_capacity(steps.len());
    for (index, step) in steps.iter().enumerate() {
        let planned = scene.plan_step(step).map_err(|e| PlannerError::Step {
            index,
            name: step.name.clone(),
            source: Box::new(e),
        })?;
        out.push(planned);
    }
    Ok(out)
}
