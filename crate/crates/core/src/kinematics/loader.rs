//! JSON chain description files.
//!
//! ```json
//! {
//!   "root_link": "base",
//!   "links": [{"name": "base"}, {"name": "door", "mass": 0.3}],
//!   "joints": [{"name": "hinge", "kind": "revolute", "parent": "base",
//!               "child": "door", "axis": [0, 0, 1], "limits": [0, 1.5]}]
//! }
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chain::{Joint, KinematicChain, Link};
use crate::error::{ConfigError, KinematicsError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointDesc {
    pub parent: String,
    pub child: String,
    #[serde(flatten)]
    pub joint: Joint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDesc {
    pub root_link: String,
    pub links: Vec<Link>,
    #[serde(default)]
    pub joints: Vec<JointDesc>,
}

impl ChainDesc {
    pub fn from_chain(chain: &KinematicChain) -> Self {
        let links = chain.links();
        Self {
            root_link: chain.root_link().to_string(),
            links: links.to_vec(),
            joints: chain
                .joints()
                .iter()
                .enumerate()
                .map(|(i, j)| JointDesc {
                    parent: links[i].name.clone(),
                    child: links[i + 1].name.clone(),
                    joint: j.clone(),
                })
                .collect(),
        }
    }

    /// Orders links from the root following parent/child references and
    /// rejects anything that is not a single serial chain.
    pub fn build(self) -> Result<KinematicChain, KinematicsError> {
        let mut by_name: HashMap<String, Link> = HashMap::new();
        for l in self.links {
            let name = l.name.clone();
            if by_name.insert(name.clone(), l).is_some() {
                return Err(KinematicsError::DuplicateName(name));
            }
        }
        let mut child_of: HashMap<&str, &JointDesc> = HashMap::new();
        let mut parents: HashMap<&str, usize> = HashMap::new();
        for j in &self.joints {
            for end in [&j.parent, &j.child] {
                if !by_name.contains_key(end) {
                    return Err(KinematicsError::UnknownLink(end.clone()));
                }
            }
            if child_of.insert(j.parent.as_str(), j).is_some() {
                return Err(KinematicsError::NotSerial(format!(
                    "link `{}` has more than one child joint",
                    j.parent
                )));
            }
            *parents.entry(j.child.as_str()).or_default() += 1;
        }
        if let Some((l, _)) = parents.iter().find(|(_, n)| **n > 1) {
            return Err(KinematicsError::NotSerial(format!("link `{l}` has more than one parent")));
        }
        if parents.contains_key(self.root_link.as_str()) {
            return Err(KinematicsError::NotSerial(format!(
                "root link `{}` has a parent joint",
                self.root_link
            )));
        }
        let mut cur = self.root_link.clone();
        let mut links = vec![by_name
            .remove(&cur)
            .ok_or_else(|| KinematicsError::UnknownLink(cur.clone()))?];
        let mut joints = Vec::new();
        while let Some(j) = child_of.get(cur.as_str()) {
            let child = by_name
                .remove(&j.child)
                .ok_or_else(|| KinematicsError::NotSerial(format!("cycle through `{}`", j.child)))?;
            joints.push(j.joint.clone());
            links.push(child);
            cur = j.child.clone();
        }
        if let Some(orphan) = by_name.keys().next() {
            return Err(KinematicsError::NotSerial(format!(
                "link `{orphan}` is not reachable from the root"
            )));
        }
        KinematicChain::new(links, joints)
    }
}

/// 1-based line of the first `"name": "<name>"` occurrence, or 1.
pub(crate) fn line_of_name(text: &str, name: &str) -> usize {
    let needle = format!("\"{name}\"");
    text.lines()
        .position(|l| l.contains("\"name\"") && l.contains(&needle))
        .map(|i| i + 1)
        .unwrap_or(1)
}

fn offending_name(e: &KinematicsError) -> Option<&str> {
    match e {
        KinematicsError::UnknownLink(n) | KinematicsError::DuplicateName(n) => Some(n),
        KinematicsError::InvalidJoint { name, .. } | KinematicsError::InvalidLink { name, .. } => Some(name),
        _ => None,
    }
}

pub fn parse_chain(text: &str, path: &str) -> Result<KinematicChain, ConfigError> {
    let desc: ChainDesc = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    desc.build().map_err(|source| ConfigError::Invalid {
        path: path.to_string(),
        line: offending_name(&source).map(|n| line_of_name(text, n)).unwrap_or(1),
        source,
    })
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<KinematicChain, ConfigError> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p)?;
    parse_chain(&text, &p.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CABINET: &str = r#"{
  "root_link": "base",
  "links": [
    {"name": "base"},
    {"name": "door", "mass": 0.3},
    {"name": "handle"}
  ],
  "joints": [
    {"name": "hinge", "kind": "revolute", "parent": "base", "child": "door",
     "axis": [0, 0, 1], "limits": [0, 1.5]},
    {"name": "mount", "kind": "fixed", "parent": "door", "child": "handle",
     "origin": {"xyz": [0.0, -0.3, 0.0]}}
  ]
}"#;

    #[test]
    fn loads_serial_chain() {
        let c = parse_chain(CABINET, "cab.json").unwrap();
        assert_eq!(c.dof(), 1);
        assert_eq!(c.tip_link(), "handle");
    }

    #[test]
    fn reports_line_of_bad_joint() {
        let bad = CABINET.replace("\"axis\": [0, 0, 1]", "\"axis\": [0, 0, 2]");
        match parse_chain(&bad, "cab.json") {
            Err(ConfigError::Invalid { line, .. }) => assert_eq!(line, 9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_branching() {
        let branched = CABINET.replace("\"parent\": \"door\"", "\"parent\": \"base\"");
        assert!(matches!(
            parse_chain(&branched, "x"),
            Err(ConfigError::Invalid { source: KinematicsError::NotSerial(_), .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_chain("{\n  \"root_link\": ,\n}", "x") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
