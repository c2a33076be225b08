//! Trajectory files: a CSV of knot states (`t` then one column per DoF)
//! and a JSON sidecar carrying the planning problem, per-knot residuals and
//! solver statistics. The sidecar holds everything needed to re-verify the
//! trajectory without re-running the planner.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::kinematics::{ChainState, KinematicChain};
use crate::planner::{
    Anchor, CollisionWorld, GoalSpec, InfeasibilityReport, Limits, PlannedStep, PlanningProblem, PreAction,
    SolverStats, StepResiduals, Trajectory,
};
use crate::transform::RigidTransform;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialisable form of [`PlanningProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDesc {
    pub vkc: KinematicChain,
    pub x_start: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    pub w_v: Vec<f64>,
    pub w_a: Vec<f64>,
    pub goal: GoalSpec,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
    pub anchors: Vec<Anchor>,
    pub world: CollisionWorld,
    pub dist_safe: f64,
    pub xi_dist: f64,
}

impl From<&PlanningProblem> for ProblemDesc {
    fn from(p: &PlanningProblem) -> Self {
        let v = |d: &DVector<f64>| d.as_slice().to_vec();
        Self {
            vkc: p.vkc.clone(),
            x_start: v(&p.x_start.0),
            steps: p.steps,
            dt: p.dt,
            w_v: v(&p.w_v),
            w_a: v(&p.w_a),
            goal: p.goal.clone(),
            lower: v(&p.limits.lower),
            upper: v(&p.limits.upper),
            vel: v(&p.limits.vel),
            acc: v(&p.limits.acc),
            anchors: p.anchors.clone(),
            world: p.world.clone(),
            dist_safe: p.dist_safe,
            xi_dist: p.xi_dist,
        }
    }
}

impl ProblemDesc {
    pub fn to_problem(&self) -> PlanningProblem {
        let v = |s: &[f64]| DVector::from_column_slice(s);
        PlanningProblem {
            vkc: self.vkc.clone(),
            x_start: ChainState(v(&self.x_start)),
            steps: self.steps,
            dt: self.dt,
            w_v: v(&self.w_v),
            w_a: v(&self.w_a),
            goal: self.goal.clone(),
            limits: Limits {
                lower: v(&self.lower),
                upper: v(&self.upper),
                vel: v(&self.vel),
                acc: v(&self.acc),
            },
            anchors: self.anchors.clone(),
            world: self.world.clone(),
            dist_safe: self.dist_safe,
            xi_dist: self.xi_dist,
        }
    }
}

/// JSON sidecar of one trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub name: String,
    pub pre_action: PreAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_offset: Option<RigidTransform>,
    pub dt: f64,
    pub dof_names: Vec<String>,
    pub stats: SolverStats,
    /// Worst residual per constraint family as reported by the solver.
    pub worst: InfeasibilityReport,
    pub residuals: Vec<StepResiduals>,
    pub problem: ProblemDesc,
}

/// Single-file JSON form: sidecar plus the states as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDoc {
    #[serde(flatten)]
    pub meta: TrajectoryMeta,
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format `{s}` (expected csv or json)")),
        }
    }
}

fn worst_of(residuals: &[StepResiduals]) -> InfeasibilityReport {
    residuals.iter().fold(InfeasibilityReport::default(), |w, r| InfeasibilityReport {
        chain: w.chain.max(r.chain),
        limit: w.limit.max(r.limit),
        env: w.env.max(r.env),
        self_collision: w.self_collision.max(r.self_collision),
        ..w
    })
}

impl TrajectoryMeta {
    pub fn from_step(step: &PlannedStep) -> Self {
        let tr = &step.trajectory;
        let mut worst = worst_of(&tr.residuals);
        worst.goal = tr.stats.goal;
        Self {
            name: step.name.clone(),
            pre_action: step.pre_action.clone(),
            attached: step.attached.clone(),
            grasp_offset: step.grasp_offset,
            dt: tr.dt,
            dof_names: tr.dof_names.clone(),
            stats: tr.stats.clone(),
            worst,
            residuals: tr.residuals.clone(),
            problem: ProblemDesc::from(&step.problem),
        }
    }
}

/// CSV text of a trajectory: header `t,<dof...>`, one row per knot.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(traj.dof_names.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (k, row) in traj.states.row_iter().enumerate() {
        let mut rec = vec![format!("{}", k as f64 * traj.dt)];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Parses a trajectory CSV; returns dof names, dt (from the `t` column) and states.
pub fn parse_trajectory_csv(text: &str, path: &str) -> Result<(Vec<String>, f64, DMatrix<f64>), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_string(),
        source,
    };
    let fmt_err = |msg: String| IoError::Format {
        path: path.to_string(),
        msg,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(fmt_err("first column must be `t`".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut nums = rec.iter().map(|f| f.trim().parse::<f64>());
        let t = nums.next().transpose().map_err(|e| fmt_err(e.to_string()))?;
        times.push(t.unwrap_or(f64::NAN));
        for v in nums {
            values.push(v.map_err(|e| fmt_err(e.to_string()))?);
        }
    }
    let dof = header.len() - 1;
    if times.is_empty() {
        return Err(fmt_err("no rows".into()));
    }
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Ok((header[1..].to_vec(), dt, DMatrix::from_row_slice(times.len(), dof, &values)))
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes one planned step; see [`write_trajectory`].
pub fn write_step(dir: &Path, stem: &str, step: &PlannedStep, format: Format) -> Result<Vec<PathBuf>, IoError> {
    write_trajectory(dir, stem, &TrajectoryMeta::from_step(step), &step.trajectory, format)
}

/// Writes `<dir>/<stem>.csv` + `<dir>/<stem>.json` (sidecar), or a single
/// `<dir>/<stem>.json` in JSON format. Returns the written paths.
pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    meta: &TrajectoryMeta,
    traj: &Trajectory,
    format: Format,
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json_path = dir.join(format!("{stem}.json"));
    match format {
        Format::Csv => {
            let csv_path = dir.join(format!("{stem}.csv"));
            std::fs::write(&csv_path, trajectory_csv(traj)).map_err(io_err(&csv_path))?;
            let text = serde_json::to_string_pretty(meta).expect("sidecar serialises");
            std::fs::write(&json_path, text).map_err(io_err(&json_path))?;
            Ok(vec![csv_path, json_path])
        }
        Format::Json => {
            let doc = TrajectoryDoc {
                meta: meta.clone(),
                states: traj.states.row_iter().map(|r| r.iter().copied().collect()).collect(),
            };
            let text = serde_json::to_string_pretty(&doc).expect("trajectory serialises");
            std::fs::write(&json_path, text).map_err(io_err(&json_path))?;
            Ok(vec![json_path])
        }
    }
}

/// Reads a trajectory written by [`write_step`], from either its CSV (with
/// the sidecar next to it) or its single JSON file.
pub fn read_step(path: &Path) -> Result<(TrajectoryMeta, Trajectory), IoError> {
    let name = path.display().to_string();
    let json_err = |p: &Path| {
        let p = p.display().to_string();
        move |source| IoError::Json { path: p, source }
    };
    let fmt_err = |msg: String| IoError::Format {
        path: name.clone(),
        msg,
    };
    let (meta, states) = if path.extension().is_some_and(|e| e == "csv") {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let (names, _, states) = parse_trajectory_csv(&text, &name)?;
        let side = sidecar_path(path);
        let meta_text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
        let meta: TrajectoryMeta = serde_json::from_str(&meta_text).map_err(json_err(&side))?;
        if names != meta.dof_names {
            return Err(fmt_err("CSV columns do not match the sidecar's DoF names".into()));
        }
        (meta, states)
    } else {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let doc: TrajectoryDoc = serde_json::from_str(&text).map_err(json_err(path))?;
        let dof = doc.meta.dof_names.len();
        if doc.states.is_empty() || doc.states.iter().any(|r| r.len() != dof) {
            return Err(fmt_err(format!("states must be non-empty rows of {dof} values")));
        }
        let flat: Vec<f64> = doc.states.concat();
        let states = DMatrix::from_row_slice(doc.states.len(), dof, &flat);
        (doc.meta, states)
    };
    let mut traj = Trajectory::from_states(states, meta.dt, meta.dof_names.clone());
    traj.residuals = meta.residuals.clone();
    traj.stats = meta.stats.clone();
    Ok((meta, traj))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let states = DMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin() / 3.0);
        let tr = Trajectory::from_states(states.clone(), 0.1, vec!["a".into(), "b".into(), "c/d".into()]);
        let text = trajectory_csv(&tr);
        assert!(text.starts_with("t,a,b,c/d\n"));
        let (names, dt, back) = parse_trajectory_csv(&text, "mem").unwrap();
        assert_eq!(names, tr.dof_names);
        assert!((dt - 0.1).abs() < 1e-15);
        assert_eq!(back, states);
    }

    #[test]
    fn rejects_missing_time_column() {
        assert!(parse_trajectory_csv("x,y\n1,2\n", "mem").is_err());
    }
}
