//! Task-level measures of a finished episode.

use serde::Serialize;

use crate::kinematics::JointKind;
use crate::planner::{StepGoal, TaskStep};

use super::episode::Episode;

/// Pose of an object at the end of the last step that had a pose goal for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    pub object: String,
    pub step: String,
    /// m
    pub position_error: f64,
    /// rad
    pub angle_error: f64,
}

/// How far an articulated object was opened and re-closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Articulation {
    pub object: String,
    pub joint: String,
    pub prismatic: bool,
    pub commanded_open: f64,
    /// Fraction of the commanded travel reached during the open step.
    pub open_fraction: f64,
    pub close_target: f64,
    pub final_value: f64,
    /// Free objects that ended inside this object's container volume.
    pub contents: Vec<String>,
}

impl Articulation {
    pub fn close_error(&self) -> f64 {
        (self.final_value - self.close_target).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub completed: bool,
    pub failure: Option<String>,
    /// Largest |roll| or |pitch| of the vehicle over the episode, rad.
    pub max_tilt: f64,
    pub placements: Vec<Placement>,
    pub articulations: Vec<Articulation>,
}

/// Measures `episode` against the goals of `steps`.
pub fn evaluate(episode: &Episode, steps: &[TaskStep]) -> Outcome {
    let log = &episode.log;
    let world = &episode.world;
    let state = &episode.final_state;
    let max_tilt = log
        .rows
        .iter()
        .map(|r| r.base[3].abs().max(r.base[4].abs()))
        .fold(0.0, f64::max);

    let mut placements: Vec<Placement> = Vec::new();
    let mut joint_goals: Vec<(usize, &str, &str, f64)> = Vec::new();
    for (k, s) in steps.iter().enumerate() {
        match &s.goal {
            StepGoal::ObjectPose { object, link, pose } => {
                let Some(i) = world.object_index(object) else { continue };
                let state = episode.step_states.get(k).unwrap_or(state);
                let actual = match link {
                    Some(l) => world.object_link_pose(state, i, l),
                    None => world.object_base_pose(state, i),
                };
                let e = actual.pose_error(pose);
                let p = Placement {
                    object: object.clone(),
                    step: s.name.clone(),
                    position_error: e.fixed_rows::<3>(0).norm(),
                    angle_error: e.fixed_rows::<3>(3).norm(),
                };
                placements.retain(|q| q.object != p.object);
                placements.push(p);
            }
            StepGoal::ObjectJoint { object, joint, value } => joint_goals.push((k, object, joint, *value)),
            _ => {}
        }
    }

    let mut articulations = Vec::new();
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for &(k_open, object, joint, open) in &joint_goals {
        if seen.contains(&(object, joint)) {
            continue;
        }
        seen.push((object, joint));
        let Some(i) = world.object_index(object) else { continue };
        let chain = &world.objects[i].model.chain;
        let Some(d) = chain.dof_index(joint) else { continue };
        let prismatic = chain.moving_joints().nth(d).is_some_and(|j| j.kind == JointKind::Prismatic);
        let col = log
            .object_joints
            .iter()
            .position(|n| n == joint)
            .expect("every object joint has a log column");
        let q0 = log.rows.first().map_or(0.0, |r| r.objects[col]);
        let reached = log
            .rows
            .iter()
            .filter(|r| r.step == k_open as i64)
            .map(|r| (r.objects[col] - q0) * (open - q0).signum())
            .fold(0.0, f64::max);
        let open_fraction = if (open - q0).abs() > 0.0 { reached / (open - q0).abs() } else { 1.0 };
        let close_target = joint_goals
            .iter()
            .rev()
            .find(|g| g.1 == object && g.2 == joint)
            .map_or(open, |g| g.3);
        let contents = (0..world.objects.len())
            .filter(|&j| j != i && world.inside(state, j, i))
            .map(|j| world.objects[j].model.name.clone())
            .collect();
        articulations.push(Articulation {
            object: object.to_string(),
            joint: joint.to_string(),
            prismatic,
            commanded_open: open,
            open_fraction,
            close_target,
            final_value: state.objects[i].q[d],
            contents,
        });
    }

    Outcome {
        completed: log.completed(),
        failure: log.failure.clone(),
        max_tilt,
        placements,
        articulations,
    }
}
