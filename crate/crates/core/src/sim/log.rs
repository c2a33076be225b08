//! Episode log: one row per outer-loop tick plus a list of events.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `t` | time, s |
//! | `step` | step index, -1 while hovering before the first step |
//! | `ref_x` … `ref_yaw`, `x` … `yaw` | base position (m) and Rx·Ry·Rz angles (rad), reference then actual |
//! | `ref_q1` … `ref_q4`, `q1` … `q4` | arm joints (rad) |
//! | `ref_<joint>`, `<joint>` | each object joint (`/` replaced by `_`); reference is NaN when the object is not in the planned chain |
//! | `T1` … `T4`, `alpha1` … `alpha4`, `beta1` … `beta4` | commanded thrust (N) and gimbal angles (rad) |
//! | `e_p`, `e_theta` | norms of the position (m) and attitude errors |
//! | `saturated` | 1 when the allocation was scaled down |

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::ThrustCommand;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StepStart,
    Attach,
    Detach,
    Stow,
    Saturation,
    Failure,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub step: i64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub t: f64,
    pub step: i64,
    pub ref_base: [f64; 6],
    pub base: [f64; 6],
    pub ref_arm: [f64; 4],
    pub arm: [f64; 4],
    pub ref_objects: Vec<f64>,
    pub objects: Vec<f64>,
    pub thrust: ThrustCommand,
    pub e_p: f64,
    pub e_theta: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    /// Object joint names, in column order.
    pub object_joints: Vec<String>,
    pub step_names: Vec<String>,
    pub rows: Vec<SimRow>,
    pub events: Vec<SimEvent>,
    /// Reason the episode stopped early, if it did.
    pub failure: Option<String>,
}

const BASE: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

impl SimLog {
    pub fn columns(&self) -> Vec<String> {
        let mut c = vec!["t".to_string(), "step".to_string()];
        c.extend(BASE.iter().map(|n| format!("ref_{n}")));
        c.extend(BASE.iter().map(|n| n.to_string()));
        c.extend((1..=4).map(|i| format!("ref_q{i}")));
        c.extend((1..=4).map(|i| format!("q{i}")));
        for j in &self.object_joints {
            let j = j.replace('/', "_");
            c.push(format!("ref_{j}"));
            c.push(j);
        }
        for p in ["T", "alpha", "beta"] {
            c.extend((1..=4).map(|i| format!("{p}{i}")));
        }
        c.extend(["e_p", "e_theta", "saturated"].map(String::from));
        c
    }

    pub fn push_event(&mut self, t: f64, step: i64, kind: EventKind, object: Option<&str>, detail: impl Into<String>) {
        self.events.push(SimEvent {
            t,
            step,
            kind,
            object: object.map(str::to_string),
            detail: detail.into(),
        });
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns().iter().position(|c| c == name)
    }

    fn row_values(&self, r: &SimRow) -> Vec<f64> {
        let mut v = vec![r.t, r.step as f64];
        v.extend(r.ref_base);
        v.extend(r.base);
        v.extend(r.ref_arm);
        v.extend(r.arm);
        for (a, b) in r.ref_objects.iter().zip(&r.objects) {
            v.push(*a);
            v.push(*b);
        }
        v.extend(r.thrust.t.iter());
        v.extend(r.thrust.alpha.iter());
        v.extend(r.thrust.beta.iter());
        v.extend([r.e_p, r.e_theta, if r.saturated { 1.0 } else { 0.0 }]);
        v
    }

    /// Values of one column over all rows.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column(name)?;
        Some(self.rows.iter().map(|r| self.row_values(r)[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.columns())?;
        for r in &self.rows {
            let vals = self.row_values(r);
            let mut rec: Vec<String> = vals.iter().map(|x| format!("{x}")).collect();
            rec[1] = r.step.to_string();
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn events_json(&self) -> String {
        let doc = serde_json::json!({
            "steps": self.step_names,
            "object_joints": self.object_joints,
            "failure": self.failure,
            "events": self.events,
        });
        serde_json::to_string_pretty(&doc).expect("events serialise")
    }

    /// Whole log as one JSON document: columns, rows and events.
    pub fn to_json_string(&self) -> String {
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| self.row_values(r)).collect();
        let doc = serde_json::json!({
            "columns": self.columns(),
            "rows": rows,
            "steps": self.step_names,
            "failure": self.failure,
            "events": self.events,
        });
        serde_json::to_string(&doc).expect("log serialises")
    }

    /// Writes `<stem>.csv` and `<stem>.events.json`; returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), SimError> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.events.json"));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
        std::fs::write(&json_path, self.events_json())?;
        Ok((csv_path, json_path))
    }
}
