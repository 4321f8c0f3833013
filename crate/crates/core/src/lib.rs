//! Simulation and autonomy stack for a desk-scale modular
//! self-reconfigurable robot: deterministic world model, occupancy
//! mapping and exploration, environment characterization, a library of
//! configurations and behaviors, reactive mission synthesis, navigation,
//! and reconfiguration planning/execution.

pub mod designlib;
pub mod envchar;
pub mod executor;
pub mod geom;
pub mod mapping;
pub mod nav;
pub mod reconfig;
pub mod scenario;
pub mod synth;
pub mod voxel;
pub mod worldsim;

use serde::{Deserialize, Serialize};

/// Object color label, matched case-sensitively across sensing,
/// mapping and mission specs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Color(pub String);

impl Color {
    pub fn new(s: &str) -> Color {
        Color(s.to_string())
    }
}

impl std::fmt::Display for Color {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
