//! Library of configurations and behaviors.
//!
//! Each entry pairs a configuration graph with one behavior it can execute,
//! the capability tags of that behavior, and the environment types it is
//! rated for. The high-level planner queries this store by (property,
//! environment) to decide what to run and whether to reconfigure.

use crate::envchar::EnvironmentType;
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Body,
    Sensor,
    Cube,
}

/// Connector face of a module. Left/right/top/bottom map to planar
/// directions +y/-y/+x/-x in the module frame; front/back are the sensor
/// module's steel plates (+x/-x); up/down are the cube's vertical faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Left,
    Right,
    Top,
    Bottom,
    Front,
    Back,
    Up,
    Down,
}

impl Face {
    pub fn allowed_for(self, kind: ModuleKind) -> bool {
        match kind {
            ModuleKind::Body => matches!(self, Face::Left | Face::Right | Face::Top | Face::Bottom),
            ModuleKind::Sensor => matches!(self, Face::Front | Face::Back),
            ModuleKind::Cube => true,
        }
    }

    /// Outward direction of the face in the module's local frame, for faces
    /// that lie in the driving plane.
    pub fn planar_dir(self) -> Option<Vec2> {
        match self {
            Face::Top | Face::Front => Some(Vec2::new(1.0, 0.0)),
            Face::Bottom | Face::Back => Some(Vec2::new(-1.0, 0.0)),
            Face::Left => Some(Vec2::new(0.0, 1.0)),
            Face::Right => Some(Vec2::new(0.0, -1.0)),
            Face::Up | Face::Down => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigNode {
    pub id: String,
    pub kind: ModuleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEdge {
    pub a: String,
    pub face_a: Face,
    pub b: String,
    pub face_b: Face,
}

/// Resting pose of a module in the configuration, in the sensor module's
/// frame (sensor at the origin, facing +x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutPose {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationGraph {
    pub name: String,
    pub nodes: Vec<ConfigNode>,
    pub edges: Vec<ConfigEdge>,
    pub layout: Vec<LayoutPose>,
}

impl ConfigurationGraph {
    pub fn node_kind(&self, id: &str) -> Option<ModuleKind> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.kind)
    }

    pub fn sensor_id(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.kind == ModuleKind::Sensor)
            .map(|n| n.id.as_str())
    }

    pub fn layout_pose(&self, id: &str) -> Option<&LayoutPose> {
        self.layout.iter().find(|p| p.id == id)
    }

    fn validate(&self) -> Result<(), LibraryError> {
        let err = |m: String| Err(LibraryError::InvalidConfiguration {
            config: self.name.clone(),
            reason: m,
        });
        let sensors = self
            .nodes
            .iter()
            .filter(|n| n.kind == ModuleKind::Sensor)
            .count();
        if sensors != 1 {
            return err(format!("expected exactly one sensor module, found {sensors}"));
        }
        let mut used: BTreeSet<(String, Face)> = BTreeSet::new();
        for e in &self.edges {
            for (id, face) in [(&e.a, e.face_a), (&e.b, e.face_b)] {
                let kind = self
                    .node_kind(id)
                    .ok_or_else(|| LibraryError::InvalidConfiguration {
                        config: self.name.clone(),
                        reason: format!("edge references unknown module {id}"),
                    })?;
                if !face.allowed_for(kind) {
                    return err(format!("module {id} ({kind:?}) has no {face:?} face"));
                }
                if !used.insert((id.clone(), face)) {
                    return err(format!("face {face:?} of module {id} used twice"));
                }
            }
        }
        // connectivity
        if !self.nodes.is_empty() {
            let mut seen = BTreeSet::new();
            let mut stack = vec![self.nodes[0].id.clone()];
            while let Some(id) = stack.pop() {
                if !seen.insert(id.clone()) {
                    continue;
                }
                for e in &self.edges {
                    if e.a == id {
                        stack.push(e.b.clone());
                    } else if e.b == id {
                        stack.push(e.a.clone());
                    }
                }
            }
            if seen.len() != self.nodes.len() {
                return err("configuration graph is not connected".into());
            }
        }
        for n in &self.nodes {
            if self.layout_pose(&n.id).is_none() {
                return err(format!("module {} missing from layout", n.id));
            }
        }
        Ok(())
    }

    /// Face-labeled isomorphism: a kind-preserving bijection of nodes under
    /// which the face-labeled edge sets coincide. Graphs here are tiny, so a
    /// backtracking search over node assignments is plenty.
    pub fn isomorphic(&self, other: &ConfigurationGraph) -> bool {
        self.isomorphism(other).is_some()
    }

    /// The witnessing bijection (self id -> other id), preferring the
    /// identity where several exist so replanning keeps stable names.
    pub fn isomorphism(&self, other: &ConfigurationGraph) -> Option<BTreeMap<String, String>> {
        if self.nodes.len() != other.nodes.len() || self.edges.len() != other.edges.len() {
            return None;
        }
        let edge_key = |a: usize, fa: Face, b: usize, fb: Face| {
            if (a, fa) <= (b, fb) {
                (a, fa, b, fb)
            } else {
                (b, fb, a, fa)
            }
        };
        let index = |g: &ConfigurationGraph, id: &str| g.nodes.iter().position(|n| n.id == id);
        let edges = |g: &ConfigurationGraph| -> Option<BTreeSet<(usize, Face, usize, Face)>> {
            g.edges
                .iter()
                .map(|e| Some(edge_key(index(g, &e.a)?, e.face_a, index(g, &e.b)?, e.face_b)))
                .collect()
        };
        let (e1, e2) = (edges(self)?, edges(other)?);
        let n = self.nodes.len();
        let mut mapping = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        fn assign(
            i: usize,
            n: usize,
            g1: &ConfigurationGraph,
            g2: &ConfigurationGraph,
            e1: &BTreeSet<(usize, Face, usize, Face)>,
            e2: &BTreeSet<(usize, Face, usize, Face)>,
            mapping: &mut [usize],
            taken: &mut [bool],
        ) -> bool {
            if i == n {
                return e1.iter().all(|&(a, fa, b, fb)| {
                    let (ma, mb) = (mapping[a], mapping[b]);
                    let key = if (ma, fa) <= (mb, fb) {
                        (ma, fa, mb, fb)
                    } else {
                        (mb, fb, ma, fa)
                    };
                    e2.contains(&key)
                });
            }
            // try the same-named node first so the identity wins when legal
            let same = g2.nodes.iter().position(|m| m.id == g1.nodes[i].id);
            let order = same.into_iter().chain((0..n).filter(|&j| Some(j) != same));
            for j in order {
                if !taken[j] && g1.nodes[i].kind == g2.nodes[j].kind {
                    mapping[i] = j;
                    taken[j] = true;
                    if assign(i + 1, n, g1, g2, e1, e2, mapping, taken) {
                        return true;
                    }
                    taken[j] = false;
                    mapping[i] = usize::MAX;
                }
            }
            false
        }
        if !assign(0, n, self, other, &e1, &e2, &mut mapping, &mut taken) {
            return None;
        }
        Some(
            (0..n)
                .map(|i| (self.nodes[i].id.clone(), other.nodes[mapping[i]].id.clone()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub t: f64,
    pub module: String,
    pub joints: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EffectKind {
    PickUp,
    Drop,
    HighReach,
    ClimbUp,
    ClimbDown,
}

/// A controller a configuration can execute: a fixed joint script, a
/// run-time parameterized generator (driving), or an abstract effect whose
/// success rules live in the entry's property values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BehaviorKind {
    Static { script: Vec<ScriptStep> },
    Parametric { params: Vec<ParamSpec> },
    Effect { effect: EffectKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub name: String,
    #[serde(flatten)]
    pub kind: BehaviorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub configuration: String,
    pub behavior: Behavior,
    pub behavior_properties: BTreeSet<String>,
    pub environment_types: BTreeSet<EnvironmentType>,
    #[serde(default)]
    pub env_property_values: BTreeMap<String, f64>,
}

impl LibraryEntry {
    pub fn property_value(&self, key: &str) -> Option<f64> {
        self.env_property_values.get(key).copied()
    }

    /// "Config.behavior" display name used in logs and reports.
    pub fn label(&self) -> String {
        format!("{}.{}", self.configuration, self.behavior.name)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Library {
    #[serde(rename = "configuration", default)]
    pub configurations: Vec<ConfigurationGraph>,
    #[serde(rename = "entry", default)]
    pub entries: Vec<LibraryEntry>,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("failed to parse library: {0}")]
    Parse(String),
    #[error("unknown configuration: {0}")]
    UnknownConfiguration(String),
    #[error("invalid configuration {config}: {reason}")]
    InvalidConfiguration { config: String, reason: String },
    #[error("entry {entry}: {reason}")]
    InvalidEntry { entry: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Library {
    pub fn from_str(text: &str) -> Result<Library, LibraryError> {
        let lib: Library = toml::from_str(text).map_err(|e| LibraryError::Parse(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Library, LibraryError> {
        Library::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self) -> String {
        toml::to_string_pretty(self).expect("library serializes")
    }

    fn validate(&self) -> Result<(), LibraryError> {
        for c in &self.configurations {
            c.validate()?;
        }
        for e in &self.entries {
            if self.configuration(&e.configuration).is_none() {
                return Err(LibraryError::UnknownConfiguration(e.configuration.clone()));
            }
            if e.behavior_properties.is_empty() {
                return Err(LibraryError::InvalidEntry {
                    entry: e.label(),
                    reason: "behavior_properties must be non-empty".into(),
                });
            }
            if e.environment_types.is_empty() {
                return Err(LibraryError::InvalidEntry {
                    entry: e.label(),
                    reason: "environment_types must be non-empty".into(),
                });
            }
            if let BehaviorKind::Static { script } = &e.behavior.kind {
                let config = self.configuration(&e.configuration).unwrap();
                for step in script {
                    if config.node_kind(&step.module).is_none() {
                        return Err(LibraryError::InvalidEntry {
                            entry: e.label(),
                            reason: format!("script references unknown module {}", step.module),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn configuration(&self, name: &str) -> Option<&ConfigurationGraph> {
        self.configurations.iter().find(|c| c.name == name)
    }

    /// All entries offering `property` in environment `env`, in insertion order.
    pub fn query(&self, property: &str, env: EnvironmentType) -> Vec<&LibraryEntry> {
        self.entries
            .iter()
            .filter(|e| e.behavior_properties.contains(property) && e.environment_types.contains(&env))
            .collect()
    }

    pub fn entries_for_configuration(
        &self,
        config_name: &str,
    ) -> Result<Vec<&LibraryEntry>, LibraryError> {
        if self.configuration(config_name).is_none() {
            return Err(LibraryError::UnknownConfiguration(config_name.to_string()));
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| e.configuration == config_name)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(name: &str) -> ConfigurationGraph {
        ConfigurationGraph {
            name: name.into(),
            nodes: vec![
                ConfigNode { id: "s".into(), kind: ModuleKind::Sensor },
                ConfigNode { id: "m1".into(), kind: ModuleKind::Body },
                ConfigNode { id: "m2".into(), kind: ModuleKind::Body },
            ],
            edges: vec![
                ConfigEdge { a: "s".into(), face_a: Face::Front, b: "m1".into(), face_b: Face::Bottom },
                ConfigEdge { a: "m1".into(), face_a: Face::Top, b: "m2".into(), face_b: Face::Bottom },
            ],
            layout: vec![
                LayoutPose { id: "s".into(), x: 0.0, y: 0.0, heading: 0.0 },
                LayoutPose { id: "m1".into(), x: 0.08, y: 0.0, heading: 0.0 },
                LayoutPose { id: "m2".into(), x: 0.16, y: 0.0, heading: 0.0 },
            ],
        }
    }

    #[test]
    fn isomorphism_respects_faces() {
        let a = chain("a");
        let mut b = chain("b");
        // rename modules: still isomorphic
        for n in &mut b.nodes {
            n.id = format!("x{}", n.id);
        }
        for e in &mut b.edges {
            e.a = format!("x{}", e.a);
            e.b = format!("x{}", e.b);
        }
        for p in &mut b.layout {
            p.id = format!("x{}", p.id);
        }
        assert!(a.isomorphic(&b));
        // change a face label: no longer isomorphic
        b.edges[1].face_a = Face::Left;
        assert!(!a.isomorphic(&b));
    }

    #[test]
    fn face_exclusivity_rejected() {
        let mut g = chain("bad");
        g.edges.push(ConfigEdge {
            a: "m1".into(),
            face_a: Face::Top,
            b: "m2".into(),
            face_b: Face::Top,
        });
        assert!(g.validate().is_err());
    }

    #[test]
    fn sensor_face_restriction() {
        let mut g = chain("bad");
        g.edges[0].face_a = Face::Left;
        assert!(matches!(
            g.validate(),
            Err(LibraryError::InvalidConfiguration { .. })
        ));
    }
}
