use nalgebra::{DVector, Vector3, Vector4};

use crate::controller::{
    allocate_near, high_level_wrench, ArmController, ArmReference, HighLevelController, LowLevelController,
};
use crate::dynamics::{ArmState, ThrustCommand, VehicleModel, VehicleState};
use crate::math::{matrix_to_xyz_near, xyz_to_matrix};
use crate::kinematics::ChainState;
use crate::planner::{PlannedStep, PlannerError, PreAction, Scene, TaskStep};
use crate::platform::PlatformParams;
use crate::scenario::Scenario;

use super::log::{EventKind, SimLog, SimRow};
use super::noise::{CommandDelay, Sensor};
use super::reference::Reference;
use super::world::{GraspSpring, ObjectSimState, SimObject, SimWorld, WorldInputs, WorldState};
use super::{SimConfig, SimError};

/// Result of a simulated episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub log: SimLog,
    pub planned: Vec<PlannedStep>,
    pub world: SimWorld,
    pub final_state: WorldState,
    /// State at the end of each completed step (after settling).
    pub step_states: Vec<WorldState>,
}

/// Initial offset for a hover-recovery run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverSetup {
    pub hover_at: Vector3<f64>,
    pub position_offset: Vector3<f64>,
    /// Rx·Ry·Rz angles, rad.
    pub attitude_offset: Vector3<f64>,
    pub duration: f64,
}

impl Default for HoverSetup {
    fn default() -> Self {
        Self {
            hover_at: Vector3::new(0.0, 0.0, 1.0),
            position_offset: Vector3::zeros(),
            attitude_offset: Vector3::zeros(),
            duration: 5.0,
        }
    }
}

/// Where an object joint's reference sits in a step's chain columns.
type JointMap = Vec<Option<(usize, f64)>>;

/// Controllers, sensing and the command pipe of one episode.
struct Runner<'a> {
    config: &'a SimConfig,
    high: HighLevelController,
    low: LowLevelController,
    arm: ArmController,
    sensor: Sensor,
    delay: CommandDelay<(ThrustCommand, ArmReference)>,
    last_alloc: ThrustCommand,
    applied: (ThrustCommand, ArmReference),
    inputs: WorldInputs,
    saturated: bool,
    angles: Vector3<f64>,
    log: SimLog,
    /// (object, joint) for each object joint column.
    joints: Vec<(usize, usize)>,
}

enum SegmentEnd {
    Elapsed,
    Stopped,
    Failed(String),
}

impl<'a> Runner<'a> {
    fn new(config: &'a SimConfig, world: &SimWorld, state: &WorldState) -> Self {
        let c = &config.controller;
        let hover = hover_command(&world.model, state);
        let arm_ref = ArmReference::hold(state.arm.q);
        let mut joints = Vec::new();
        let mut log = SimLog::default();
        for (i, o) in world.objects.iter().enumerate() {
            for (k, j) in o.model.chain.moving_joints().enumerate() {
                joints.push((i, k));
                log.object_joints.push(j.name.clone());
            }
        }
        Self {
            config,
            high: HighLevelController::new(c.gains, c.integral_limit),
            low: LowLevelController::new(c.actuator),
            arm: ArmController::new(c.gains.arm, c.integral_limit),
            sensor: Sensor::new(config.seed),
            delay: CommandDelay::new(config.delay_ticks(), (hover, arm_ref)),
            last_alloc: hover,
            applied: (hover, arm_ref),
            inputs: WorldInputs::default(),
            saturated: false,
            angles: crate::math::matrix_to_xyz_near(&state.vehicle.rotation, &Vector3::zeros()),
            log,
            joints,
        }
    }

    /// Tracks `reference` for `duration` seconds (or until `stop` holds at
    /// an outer-loop tick).
    #[allow(clippy::too_many_arguments)]
    fn segment(
        &mut self,
        world: &SimWorld,
        state: &mut WorldState,
        reference: &Reference,
        map: &JointMap,
        duration: f64,
        step: i64,
        stop: &dyn Fn(&SimWorld, &WorldState) -> bool,
    ) -> SegmentEnd {
        let cfg = self.config;
        let (he, le) = (cfg.high_every(), cfg.low_every());
        let (h_dt, l_dt) = (1.0 / cfg.high_rate, 1.0 / cfg.low_rate);
        let n = (duration / cfg.dt).round() as usize;
        let model = &world.model;
        for k in 0..n {
            if k % he == 0 {
                let r = reference.at(k as f64 * cfg.dt);
                let meas = self.sensor.measure(&state.vehicle, cfg);
                let (wrench, errs) = self.high.update(model, &state.arm.q, &meas, &r.vehicle, h_dt);
                let alloc = allocate_near(&model.params.vehicle, &wrench, &self.last_alloc);
                self.last_alloc = alloc.cmd;
                if alloc.saturated && !self.saturated {
                    self.log.push_event(state.t, step, EventKind::Saturation, None, format!("scale {:.3}", alloc.scale));
                }
                self.saturated = alloc.saturated;
                self.applied = self.delay.push((alloc.cmd, r.arm));
                self.record(state, &r.x, map, &alloc.cmd, step, errs.e_p.norm(), errs.e_theta.norm());
                let e_true = (r.vehicle.state.p - state.vehicle.p).norm();
                if !e_true.is_finite() || e_true > cfg.divergence_limit {
                    return SegmentEnd::Failed(format!("tracking divergence: position error {e_true:.3} m"));
                }
                if stop(world, state) {
                    return SegmentEnd::Stopped;
                }
            }
            if k % le == 0 {
                let actuator = self.low.rates(&self.applied.0, &state.actuators, l_dt);
                let g_base = state.vehicle.rotation.transpose() * Vector3::new(0.0, 0.0, -model.g());
                let tau = self.arm.update(model.arm(), &state.arm, &self.applied.1, &g_base, l_dt);
                self.inputs = WorldInputs {
                    actuator,
                    arm_torque: tau,
                };
            }
            match world.step(state, &self.inputs, cfg.dt) {
                Ok(s) => *state = s,
                Err(e) => return SegmentEnd::Failed(e.to_string()),
            }
        }
        SegmentEnd::Elapsed
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        state: &WorldState,
        x_ref: &DVector<f64>,
        map: &JointMap,
        cmd: &ThrustCommand,
        step: i64,
        e_p: f64,
        e_theta: f64,
    ) {
        self.angles = matrix_to_xyz_near(&state.vehicle.rotation, &self.angles);
        let p = state.vehicle.p;
        let a = self.angles;
        let mut ref_objects = Vec::with_capacity(self.joints.len());
        let mut objects = Vec::with_capacity(self.joints.len());
        for (c, &(i, k)) in self.joints.iter().enumerate() {
            objects.push(state.objects[i].q[k]);
            ref_objects.push(match map.get(c).copied().flatten() {
                Some((col, sign)) => sign * x_ref[col],
                None => f64::NAN,
            });
        }
        self.log.rows.push(SimRow {
            t: state.t,
            step,
            ref_base: std::array::from_fn(|i| x_ref[i]),
            base: [p.x, p.y, p.z, a.x, a.y, a.z],
            ref_arm: std::array::from_fn(|i| x_ref[6 + i]),
            arm: std::array::from_fn(|i| state.arm.q[i]),
            ref_objects,
            objects,
            thrust: *cmd,
            e_p,
            e_theta,
            saturated: self.saturated,
        });
    }
}

/// Allocation holding `state` still (zero virtual inputs).
pub fn hover_command(model: &VehicleModel, state: &WorldState) -> ThrustCommand {
    let w = high_level_wrench(model, &state.arm.q, &state.vehicle, &Vector3::zeros(), &Vector3::zeros());
    crate::controller::allocate(&model.params.vehicle, &w).cmd
}

/// Simulation world and initial state of a scenario, hovering at its start.
pub fn world_from(scenario: &Scenario, config: &SimConfig) -> Result<(SimWorld, WorldState), SimError> {
    let scene = scenario.scene()?;
    let objects = scene
        .objects
        .iter()
        .zip(&scenario.objects)
        .map(|(m, d)| SimObject {
            model: m.clone(),
            damping: d.joint_damping,
            friction: d.joint_friction,
        })
        .collect();
    let model = VehicleModel::new(scenario.platform.clone());
    let x0 = scenario.start_state();
    let x = x0.0.as_slice();
    let mut state = WorldState {
        t: 0.0,
        vehicle: VehicleState {
            p: Vector3::new(x[0], x[1], x[2]),
            rotation: xyz_to_matrix(&Vector3::new(x[3], x[4], x[5])),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        },
        arm: ArmState::at_rest(Vector4::new(x[6], x[7], x[8], x[9])),
        actuators: ThrustCommand::default(),
        objects: scene
            .object_states
            .iter()
            .map(|s| ObjectSimState {
                q: s.q.clone(),
                qd: DVector::zeros(s.q.len()),
                base_pose: s.base_pose,
            })
            .collect(),
    };
    state.actuators = hover_command(&model, &state);
    Ok((SimWorld::new(model, objects, config.grasp, config.controller.actuator), state))
}

/// Column of each object joint in a planned step's chain, with its sign.
fn joint_map(world: &SimWorld, step: &PlannedStep) -> JointMap {
    let mut map = Vec::new();
    for o in &world.objects {
        let held = step.attached.as_deref() == Some(o.model.name.as_str());
        for j in o.model.chain.moving_joints() {
            let entry = if held {
                step.problem.vkc.dof_index(&j.name).map(|col| {
                    let inverted = o.model.chain.root_link() != o.model.grasp_link;
                    (col, if inverted { -1.0 } else { 1.0 })
                })
            } else {
                None
            };
            map.push(entry);
        }
    }
    map
}

/// Copies the simulated robot and object configuration into the planning
/// scene, so the next step is planned from where the platform really is.
fn sync_scene(scene: &mut Scene, world: &SimWorld, state: &WorldState) {
    let near = Vector3::from_iterator(scene.robot_state.0.rows(3, 3).iter().copied());
    let a = matrix_to_xyz_near(&state.vehicle.rotation, &near);
    let p = state.vehicle.p;
    let q = state.arm.q;
    let lo = scene.robot.lower_limits();
    let hi = scene.robot.upper_limits();
    let x: Vec<f64> = [p.x, p.y, p.z, a.x, a.y, a.z, q[0], q[1], q[2], q[3]]
        .iter()
        .enumerate()
        .map(|(i, v)| v.clamp(lo[i], hi[i]))
        .collect();
    scene.robot_state = ChainState::from_slice(&x);
    for (i, st) in scene.object_states.iter_mut().enumerate() {
        let chain = &world.objects[i].model.chain;
        let (lo, hi) = (chain.lower_limits(), chain.upper_limits());
        st.q = state.objects[i].q.zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
        st.base_pose = world.object_base_pose(state, i);
        st.parent = world.parent(i).cloned();
    }
}

/// Plans each step from the simulated state just before executing it.
pub fn run_episode(scenario: &Scenario, steps: &[TaskStep], config: &SimConfig) -> Result<Episode, SimError> {
    config.validate()?;
    let mut scene = scenario.scene()?;
    let names = steps.iter().map(|s| s.name.clone()).collect();
    let mut next = |k: usize, world: &SimWorld, state: &WorldState| {
        sync_scene(&mut scene, world, state);
        scene.plan_step(&steps[k])
    };
    simulate(scenario, config, steps.len(), names, &mut next)
}

/// Simulates already planned steps open-loop with respect to planning.
pub fn run_planned(scenario: &Scenario, planned: Vec<PlannedStep>, config: &SimConfig) -> Result<Episode, SimError> {
    config.validate()?;
    let names = planned.iter().map(|p| p.name.clone()).collect();
    let n = planned.len();
    let mut next = |k: usize, _: &SimWorld, _: &WorldState| Ok(planned[k].clone());
    simulate(scenario, config, n, names, &mut next)
}

type StepSource<'a> = dyn FnMut(usize, &SimWorld, &WorldState) -> Result<PlannedStep, PlannerError> + 'a;

fn simulate(
    scenario: &Scenario,
    config: &SimConfig,
    n_steps: usize,
    names: Vec<String>,
    next: &mut StepSource,
) -> Result<Episode, SimError> {
    let (mut world, mut state) = world_from(scenario, config)?;
    let mut run = Runner::new(config, &world, &state);
    run.log.step_names = names;
    let never = |_: &SimWorld, _: &WorldState| false;
    let mut prev = Reference::hold(&scenario.start_state().0);
    let no_map: JointMap = Vec::new();
    let mut planned = Vec::with_capacity(n_steps);
    let mut step_states = Vec::with_capacity(n_steps);

    let fail = |run: &mut Runner, t: f64, step: i64, why: String| {
        run.log.push_event(t, step, EventKind::Failure, None, why.clone());
        run.log.failure = Some(why);
    };

    if n_steps == 0 {
        let end = run.segment(&world, &mut state, &prev, &no_map, config.settle_time, -1, &never);
        if let SegmentEnd::Failed(why) = end {
            fail(&mut run, state.t, -1, why);
        }
    }
    for k in 0..n_steps {
        let step = k as i64;
        run.log.push_event(state.t, step, EventKind::StepStart, None, run.log.step_names[k].clone());
        let p = match next(k, &world, &state) {
            Ok(p) => p,
            Err(e) => {
                fail(&mut run, state.t, step, format!("planning failed: {e}"));
                break;
            }
        };
        match &p.pre_action {
            PreAction::None => {}
            PreAction::Attach { object, .. } => {
                let Some(i) = world.object_index(object) else {
                    fail(&mut run, state.t, step, format!("unknown object `{object}`"));
                    break;
                };
                let (dist, speed) = (config.attach_distance, config.attach_speed);
                let ready = move |w: &SimWorld, s: &WorldState| {
                    let (d, v) = w.grasp_gap(s, i);
                    d < dist && v < speed
                };
                if !ready(&world, &state) {
                    let end = run.segment(&world, &mut state, &prev, &no_map, config.grasp_wait, step, &ready);
                    match end {
                        SegmentEnd::Stopped => {}
                        SegmentEnd::Failed(why) => {
                            fail(&mut run, state.t, step, why);
                            break;
                        }
                        SegmentEnd::Elapsed => {
                            let (d, v) = world.grasp_gap(&state, i);
                            fail(
                                &mut run,
                                state.t,
                                step,
                                format!("failed grasp of `{object}`: gap {:.1} mm, speed {v:.3} m/s", d * 1e3),
                            );
                            break;
                        }
                    }
                }
                let (d, _) = world.grasp_gap(&state, i);
                world.attach(&mut state, i);
                run.log.push_event(state.t, step, EventKind::Attach, Some(object), format!("gap {:.1} mm", d * 1e3));
            }
            PreAction::Detach => {
                let held = world.held().map(|i| world.objects[i].model.name.clone());
                let stowed = world.detach(&state);
                run.log.push_event(state.t, step, EventKind::Detach, held.as_deref(), "");
                if let Some(j) = stowed {
                    let container = world.objects[j].model.name.clone();
                    run.log.push_event(state.t, step, EventKind::Stow, held.as_deref(), container);
                }
            }
        }
        let reference = Reference::new(p.trajectory.states.clone(), p.trajectory.dt);
        let map = joint_map(&world, &p);
        planned.push(p);
        let duration = reference.duration() + config.settle_time;
        if let SegmentEnd::Failed(why) = run.segment(&world, &mut state, &reference, &map, duration, step, &never) {
            fail(&mut run, state.t, step, why);
            break;
        }
        step_states.push(state.clone());
        prev = Reference::hold(&reference.final_state().rows(0, 10).into_owned());
    }
    if run.log.failure.is_none() {
        run.log.push_event(state.t, n_steps as i64 - 1, EventKind::Done, None, "");
    }
    Ok(Episode {
        log: run.log,
        planned,
        world,
        final_state: state,
        step_states,
    })
}

/// Hover recovery from an initial offset with a stationary reference.
pub fn run_hover(platform: &PlatformParams, config: &SimConfig, setup: &HoverSetup) -> Result<Episode, SimError> {
    config.validate()?;
    let model = VehicleModel::new(platform.clone());
    let world = SimWorld::new(model, Vec::new(), GraspSpring::default(), config.controller.actuator);
    let mut state = WorldState {
        t: 0.0,
        vehicle: VehicleState {
            p: setup.hover_at + setup.position_offset,
            rotation: xyz_to_matrix(&setup.attitude_offset),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        },
        arm: ArmState::default(),
        actuators: ThrustCommand::default(),
        objects: Vec::new(),
    };
    state.actuators = hover_command(&world.model, &state);
    let mut x = DVector::zeros(10);
    x.rows_mut(0, 3).copy_from(&setup.hover_at);
    let reference = Reference::hold(&x);
    let mut run = Runner::new(config, &world, &state);
    let never = |_: &SimWorld, _: &WorldState| false;
    if let SegmentEnd::Failed(why) = run.segment(&world, &mut state, &reference, &Vec::new(), setup.duration, 0, &never) {
        run.log.push_event(state.t, 0, EventKind::Failure, None, why.clone());
        run.log.failure = Some(why);
    }
    Ok(Episode {
        log: run.log,
        planned: Vec::new(),
        world,
        final_state: state,
        step_states: Vec::new(),
    })
}
