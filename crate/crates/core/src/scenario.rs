//! Scenario files: robot start, objects, obstacles and the step list, shared
//! by the planner and the simulator. Three tasks are built in.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionPrimitive, Shape};
use crate::error::ConfigError;
use crate::kinematics::{build_virtual_base_with, ChainDesc, ChainState, Joint, KinematicChain, Link, VirtualBaseLimits};
use crate::planner::{
    CollisionWorld, Container, ObjectModel, ObjectState, PlannerError, PreAction, Scene, SolverOptions, StepGoal,
    StepSettings, TaskStep,
};
use crate::platform::PlatformParams;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDesc {
    pub name: String,
    pub chain: ChainDescWrapper,
    pub base_pose: RigidTransform,
    pub grasp_link: String,
    #[serde(default)]
    pub fixed_base: bool,
    /// Initial joint values.
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub container: Option<Container>,
    /// Viscous joint damping (N·m·s/rad or N·s/m) in simulation.
    #[serde(default = "default_damping")]
    pub joint_damping: f64,
    /// Dry joint friction (N·m or N) in simulation.
    #[serde(default)]
    pub joint_friction: f64,
    /// Centre of the object body relative to its root link, for containment.
    #[serde(default)]
    pub centre: Vector3<f64>,
}

fn default_damping() -> f64 {
    0.5
}

/// Serialisable chain description with equality for scenario comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainDescWrapper(pub ChainDesc);

impl PartialEq for ChainDescWrapper {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(&self.0).ok() == serde_json::to_value(&other.0).ok()
    }
}

impl ObjectDesc {
    pub fn chain(&self) -> Result<KinematicChain, crate::error::KinematicsError> {
        self.chain.0.clone().build()
    }
}

/// Initial robot configuration: base joint values then arm joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDesc {
    pub position: [f64; 3],
    /// Values of the roll, pitch and yaw base joints.
    #[serde(default)]
    pub attitude: [f64; 3],
    #[serde(default)]
    pub arm: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub platform: PlatformParams,
    #[serde(default = "default_base_limits")]
    pub base_limits: VirtualBaseLimits,
    pub start: StartDesc,
    #[serde(default)]
    pub objects: Vec<ObjectDesc>,
    #[serde(default)]
    pub obstacles: Vec<CollisionPrimitive>,
    #[serde(default)]
    pub settings: StepSettings,
    pub steps: Vec<TaskStep>,
}

/// Base rate limits used by the built-in tasks.
pub fn default_base_limits() -> VirtualBaseLimits {
    VirtualBaseLimits {
        position: [[-5.0, 5.0], [-5.0, 5.0], [0.0, 5.0]],
        attitude: [[-2.0 * PI, 2.0 * PI]; 3],
        linear_vel: 1.0,
        linear_acc: 2.0,
        angular_vel: 2.0,
        angular_acc: 4.0,
    }
}

impl Scenario {
    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        sc.validate().map_err(|msg| ConfigError::Other(format!("{path}: {msg}")))?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p)?;
        Self::from_json(&text, &p.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialise")
    }

    /// Built-in scenario by name: `task1`, `task2` or `drawer`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "task1" | "bulb" => Some(task1()),
            "task2" | "cabinet" => Some(task2()),
            "drawer" => Some(drawer()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("scenario has no steps".into());
        }
        let mut held = false;
        for s in &self.steps {
            match &s.pre_action {
                PreAction::Attach { object, .. } => {
                    if held {
                        return Err(format!("step `{}` attaches while already holding an object", s.name));
                    }
                    if !self.objects.iter().any(|o| &o.name == object) {
                        return Err(format!("step `{}` attaches unknown object `{object}`", s.name));
                    }
                    held = true;
                }
                PreAction::Detach => {
                    if !held {
                        return Err(format!("step `{}` detaches with nothing held", s.name));
                    }
                    held = false;
                }
                PreAction::None => {}
            }
        }
        for o in &self.objects {
            let chain = o.chain().map_err(|e| format!("object `{}`: {e}", o.name))?;
            if chain.dof() != o.q.len() {
                return Err(format!(
                    "object `{}` has {} DoF but {} initial values",
                    o.name,
                    chain.dof(),
                    o.q.len()
                ));
            }
            if o.grasp_link != chain.root_link() && o.grasp_link != chain.tip_link() {
                return Err(format!("object `{}`: grasp link must be the root or the tip", o.name));
            }
        }
        Ok(())
    }

    /// Floating-base robot chain.
    pub fn robot_chain(&self) -> Result<KinematicChain, PlannerError> {
        Ok(build_virtual_base_with(&self.platform.robot_chain(), &self.base_limits)?)
    }

    pub fn start_state(&self) -> ChainState {
        let s = &self.start;
        let mut x: Vec<f64> = s.position.to_vec();
        x.extend(s.attitude);
        x.extend(s.arm);
        ChainState::from_slice(&x)
    }

    pub fn scene(&self) -> Result<Scene, PlannerError> {
        let mut objects = Vec::new();
        for o in &self.objects {
            let chain = o.chain()?;
            objects.push((
                ObjectModel {
                    name: o.name.clone(),
                    chain,
                    grasp_link: o.grasp_link.clone(),
                    fixed_base: o.fixed_base,
                    container: o.container.clone(),
                    centre: o.centre,
                },
                ObjectState {
                    base_pose: o.base_pose,
                    q: DVector::from_vec(o.q.clone()),
                    parent: None,
                },
            ));
        }
        let mut scene = Scene::new(
            self.robot_chain()?,
            self.start_state(),
            objects,
            CollisionWorld::new(self.obstacles.clone()),
        );
        scene.settings = self.settings.clone();
        scene.options = SolverOptions::default();
        Ok(scene)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectDesc> {
        self.objects.iter().find(|o| o.name == name)
    }
}

fn boxed(name: &str, link: &str, at: [f64; 3], half: [f64; 3]) -> CollisionPrimitive {
    CollisionPrimitive::new(
        name,
        Shape::Box { half_extents: half },
        link,
        RigidTransform::from_translation(Vector3::from(at)),
    )
}

fn floor() -> CollisionPrimitive {
    boxed("floor", "world", [0.0, 0.0, -0.05], [4.0, 4.0, 0.05])
}

fn pedestal(name: &str, x: f64, y: f64, top: f64) -> CollisionPrimitive {
    boxed(name, "world", [x, y, 0.5 * top], [0.12, 0.12, 0.5 * top])
}

fn link(name: &str, mass: f64, geoms: Vec<CollisionPrimitive>) -> Link {
    Link {
        mass,
        com: Vector3::zeros(),
        inertia: nalgebra::Matrix3::identity() * (1e-3 * mass),
        collision_geoms: geoms,
        ..Link::massless(name)
    }
}

/// Small free object grasped from above; its frame is the grasp point and
/// its body hangs below it.
fn small_object(name: &str, at: [f64; 3]) -> ObjectDesc {
    let geom = CollisionPrimitive::new(
        "body",
        Shape::Sphere { radius: 0.03 },
        name,
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, -0.03)),
    );
    let chain = KinematicChain::single_link(link(name, 0.02, vec![geom]));
    ObjectDesc {
        name: name.to_string(),
        chain: ChainDescWrapper(ChainDesc::from_chain(&chain)),
        base_pose: RigidTransform::from_translation(Vector3::from(at)),
        grasp_link: name.to_string(),
        fixed_base: false,
        q: Vec::new(),
        container: None,
        joint_damping: 0.0,
        joint_friction: 0.0,
        centre: Vector3::new(0.0, 0.0, -0.03),
    }
}

fn step(name: &str, pre: PreAction, goal: StepGoal) -> TaskStep {
    TaskStep {
        name: name.to_string(),
        pre_action: pre,
        goal,
        settings: None,
    }
}

fn attach(object: &str) -> PreAction {
    PreAction::Attach {
        object: object.to_string(),
        grasp_offset: RigidTransform::identity(),
    }
}

fn grasp(object: &str) -> StepGoal {
    StepGoal::Grasp {
        object: object.to_string(),
        grasp_offset: RigidTransform::identity(),
    }
}

fn pose(xyz: [f64; 3], rpy: [f64; 3]) -> RigidTransform {
    RigidTransform::from_xyz_rpy(xyz, rpy)
}

fn default_settings() -> StepSettings {
    StepSettings {
        w_a: Some(vec![3.0; 10]),
        ..StepSettings::default()
    }
}

/// Install a light bulb in a ceiling socket: approach, pick up, flip under
/// the socket, feed in.
pub fn task1() -> Scenario {
    let ceiling = 2.0;
    let socket = [1.0, 0.0, ceiling - 0.06];
    let flipped = [PI, 0.0, 0.0];
    Scenario {
        name: "task1".into(),
        platform: PlatformParams::default(),
        base_limits: default_base_limits(),
        start: StartDesc {
            position: [-0.5, 0.0, 1.2],
            attitude: [0.0; 3],
            arm: [0.0; 4],
        },
        objects: vec![small_object("bulb", [0.0, 0.0, 0.86])],
        obstacles: vec![
            floor(),
            boxed("ceiling", "world", [0.0, 0.0, ceiling + 0.05], [4.0, 4.0, 0.05]),
            pedestal("table", 0.0, 0.0, 0.8),
        ],
        settings: StepSettings {
            // arm motion is dearer than base motion, so large reorientations go to the base
            w_v: Some(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0]),
            ..default_settings()
        },
        steps: vec![
            step("approach", PreAction::None, grasp("bulb")),
            step(
                "pick_up",
                attach("bulb"),
                StepGoal::ObjectPose {
                    object: "bulb".into(),
                    link: None,
                    pose: pose([0.0, 0.0, 1.15], [0.0; 3]),
                },
            ),
            step(
                "rotate_and_translate",
                PreAction::None,
                StepGoal::ObjectPose {
                    object: "bulb".into(),
                    link: None,
                    pose: pose([socket[0], socket[1], socket[2] - 0.15], flipped),
                },
            ),
            step(
                "feed_in",
                PreAction::None,
                StepGoal::ObjectPose {
                    object: "bulb".into(),
                    link: None,
                    pose: pose(socket, flipped),
                },
            ),
        ],
    }
}

/// Socket pose of the built-in bulb task.
pub fn task1_socket() -> RigidTransform {
    pose([1.0, 0.0, 1.94], [PI, 0.0, 0.0])
}

pub const CHEST_OPEN: f64 = 1.75;
pub const DRAWER_OPEN: f64 = 0.25;

/// Chest with a lid hinged along its back top edge. Base frame at the
/// centre of the floor footprint; the chest front faces −x.
fn chest(at: [f64; 3]) -> ObjectDesc {
    let (hx, hy, h, wall) = (0.2, 0.2, 0.3, 0.01);
    let base_geoms = vec![
        boxed("bottom", "cabinet/base", [0.0, 0.0, wall], [hx, hy, wall]),
        boxed("front", "cabinet/base", [-hx + wall, 0.0, 0.5 * h], [wall, hy, 0.5 * h]),
        boxed("back", "cabinet/base", [hx - wall, 0.0, 0.5 * h], [wall, hy, 0.5 * h]),
        boxed("left", "cabinet/base", [0.0, hy - wall, 0.5 * h], [hx, wall, 0.5 * h]),
        boxed("right", "cabinet/base", [0.0, -hy + wall, 0.5 * h], [hx, wall, 0.5 * h]),
    ];
    let lid_geoms = vec![boxed("lid", "cabinet/lid", [-hx, 0.0, wall], [hx, hy, wall])];
    let links = vec![
        link("cabinet/base", 5.0, base_geoms),
        Link {
            com: Vector3::new(-hx, 0.0, wall),
            ..link("cabinet/lid", 0.3, lid_geoms)
        },
        Link::massless("cabinet/handle"),
    ];
    let joints = vec![
        Joint::revolute(
            "cabinet/hinge",
            RigidTransform::from_translation(Vector3::new(hx, 0.0, h)),
            Vector3::y(),
            [0.0, 1.9],
        )
        .with_rate_limits(1.0, 3.0),
        // handle in front of the lid edge, pointing forward
        Joint::fixed("cabinet/handle_mount", pose([-2.0 * hx - 0.05, 0.0, wall], [0.0, -FRAC_PI_2, 0.0])),
    ];
    let chain = KinematicChain::new(links, joints).expect("chest chain is serial");
    ObjectDesc {
        name: "cabinet".into(),
        chain: ChainDescWrapper(ChainDesc::from_chain(&chain)),
        base_pose: RigidTransform::from_translation(Vector3::from(at)),
        grasp_link: "cabinet/handle".into(),
        fixed_base: true,
        q: vec![0.0],
        container: Some(Container {
            link: "cabinet/base".into(),
            offset: RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.5 * h + wall)),
            half_extents: [hx - 2.0 * wall, hy - 2.0 * wall, 0.5 * h - wall],
        }),
        joint_damping: 0.5,
        joint_friction: 0.02,
        centre: Vector3::zeros(),
    }
}

/// Relocate an object into a chest: open the lid, fetch the object, put it
/// in, close the lid.
pub fn task2() -> Scenario {
    let chest_at = [1.0, 0.0, 0.0];
    Scenario {
        name: "task2".into(),
        platform: PlatformParams::default(),
        base_limits: default_base_limits(),
        start: StartDesc {
            position: [0.0, 0.0, 0.8],
            attitude: [0.0; 3],
            arm: [0.0; 4],
        },
        objects: vec![chest(chest_at), small_object("toy", [0.2, 0.7, 0.56])],
        obstacles: vec![floor(), pedestal("stand", 0.2, 0.7, 0.5)],
        settings: default_settings(),
        steps: container_steps("cabinet", "cabinet/hinge", CHEST_OPEN, pose([0.95, 0.0, 0.24], [0.0; 3])),
    }
}

fn container_steps(object: &str, joint: &str, open: f64, drop: RigidTransform) -> Vec<TaskStep> {
    let joint_goal = |v: f64| StepGoal::ObjectJoint {
        object: object.into(),
        joint: joint.into(),
        value: v,
    };
    vec![
        step("approach_handle", PreAction::None, grasp(object)),
        step("open", attach(object), joint_goal(open)),
        step("pick_up_toy", PreAction::Detach, grasp("toy")),
        step(
            "place_toy",
            attach("toy"),
            StepGoal::ObjectPose {
                object: "toy".into(),
                link: None,
                pose: drop,
            },
        ),
        step("approach_handle_again", PreAction::Detach, grasp(object)),
        TaskStep {
            // joint goals land on the tolerance boundary; close snugly
            settings: Some(StepSettings {
                xi_goal: 1e-5,
                ..default_settings()
            }),
            ..step("close", attach(object), joint_goal(0.0))
        },
    ]
}

/// Dresser with one top drawer sliding out along −x. Base frame at the
/// centre of the floor footprint.
fn dresser(at: [f64; 3]) -> ObjectDesc {
    let (hx, hy, h, wall) = (0.2, 0.2, 0.5, 0.01);
    let dh = 0.15; // drawer height
    let base_geoms = vec![
        boxed("carcass", "drawer/base", [0.0, 0.0, 0.5 * (h - dh)], [hx, hy, 0.5 * (h - dh)]),
        boxed("top", "drawer/base", [0.0, 0.0, h + wall], [hx, hy, wall]),
        boxed("back", "drawer/base", [hx - wall, 0.0, h - 0.5 * dh], [wall, hy, 0.5 * dh]),
    ];
    // drawer frame at the front-bottom edge of the drawer
    let z0 = h - dh;
    let dg = |name: &str, at: [f64; 3], half: [f64; 3]| boxed(name, "drawer/drawer", at, half);
    let ih = 0.5 * (dh - 0.02);
    let drawer_geoms = vec![
        dg("bottom", [hx - 0.02, 0.0, wall], [hx - 0.03, hy - 0.02, wall]),
        dg("front", [wall, 0.0, ih], [wall, hy - 0.01, ih]),
        dg("rear", [2.0 * hx - 0.05, 0.0, ih], [wall, hy - 0.02, ih]),
        dg("left", [hx - 0.02, hy - 0.03, ih], [hx - 0.03, wall, ih]),
        dg("right", [hx - 0.02, -hy + 0.03, ih], [hx - 0.03, wall, ih]),
    ];
    let links = vec![
        link("drawer/base", 10.0, base_geoms),
        Link {
            com: Vector3::new(hx - 0.02, 0.0, ih),
            ..link("drawer/drawer", 0.4, drawer_geoms)
        },
        Link::massless("drawer/handle"),
    ];
    let joints = vec![
        Joint::prismatic(
            "drawer/slide",
            RigidTransform::from_translation(Vector3::new(-hx, 0.0, z0)),
            -Vector3::x(),
            [0.0, 0.32],
        )
        .with_rate_limits(0.5, 2.0),
        Joint::fixed("drawer/handle_mount", pose([-0.05, 0.0, 0.6 * dh], [0.0, -FRAC_PI_2, 0.0])),
    ];
    let chain = KinematicChain::new(links, joints).expect("dresser chain is serial");
    ObjectDesc {
        name: "drawer".into(),
        chain: ChainDescWrapper(ChainDesc::from_chain(&chain)),
        base_pose: RigidTransform::from_translation(Vector3::from(at)),
        grasp_link: "drawer/handle".into(),
        fixed_base: true,
        q: vec![0.0],
        container: Some(Container {
            link: "drawer/drawer".into(),
            offset: RigidTransform::from_translation(Vector3::new(hx - 0.02, 0.0, 0.5 * dh)),
            half_extents: [hx - 0.04, hy - 0.04, 0.5 * dh],
        }),
        joint_damping: 2.0,
        joint_friction: 0.05,
        centre: Vector3::zeros(),
    }
}

/// Relocate a toy into a drawer: open it, fetch the toy, drop it in the
/// open drawer, close the drawer.
pub fn drawer() -> Scenario {
    let at = [1.0, 0.0, 0.0];
    // toy over the exposed part of the open drawer, front at x = 0.8 - 0.25
    let drop = pose([at[0] - 0.2 - DRAWER_OPEN + 0.13, 0.0, 0.48], [0.0; 3]);
    Scenario {
        name: "drawer".into(),
        platform: PlatformParams::default(),
        base_limits: default_base_limits(),
        start: StartDesc {
            position: [0.0, 0.0, 0.8],
            attitude: [0.0; 3],
            arm: [0.0; 4],
        },
        objects: vec![dresser(at), small_object("toy", [0.2, -0.7, 0.56])],
        obstacles: vec![floor(), pedestal("stand", 0.2, -0.7, 0.5)],
        settings: default_settings(),
        steps: container_steps("drawer", "drawer/slide", DRAWER_OPEN, drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate_and_round_trip() {
        for name in ["task1", "task2", "drawer"] {
            let s = Scenario::builtin(name).unwrap();
            s.validate().unwrap();
            let back = Scenario::from_json(&s.to_json(), name).unwrap();
            assert_eq!(back, s);
            s.scene().unwrap();
        }
    }
}
