//! Scenario files: a world description in TOML — arena size, solid boxes,
//! stairs, task objects, and the robot's starting configuration.

use crate::designlib::Library;
use crate::geom::{Pose2, Vec2, Vec3};
use crate::worldsim::{FaultProfile, StairField, TaskObject, WorldState};
use crate::Color;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

fn default_ticks() -> u64 {
    6000
}

#[derive(Debug, Clone, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Mission tick budget; the run fails if it is exhausted.
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    pub world: WorldDef,
    pub robot: RobotDef,
    #[serde(default, rename = "solid")]
    pub solids: Vec<SolidDef>,
    #[serde(default)]
    pub stairs: Option<StairsDef>,
    #[serde(default, rename = "object")]
    pub objects: Vec<ObjectDef>,
    #[serde(default)]
    pub faults: FaultProfile,
    #[serde(default)]
    pub pose_noise_std: f64,
    #[serde(default)]
    pub heading_noise_std: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WorldDef {
    pub dims: [usize; 3],
    pub res: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RobotDef {
    pub configuration: String,
    /// x, y, heading.
    pub start: [f64; 3],
    /// Object id the robot starts out holding.
    #[serde(default)]
    pub carrying: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SolidDef {
    #[serde(default)]
    pub id: Option<String>,
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default)]
    pub color: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StairsDef {
    pub base: [f64; 2],
    pub direction: [f64; 2],
    pub rise: f64,
    pub depth: f64,
    pub steps: usize,
    pub width: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ObjectDef {
    pub id: String,
    pub color: String,
    pub position: [f64; 3],
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("unknown configuration `{0}`")]
    UnknownConfiguration(String),
    #[error("robot carries unknown object `{0}`")]
    UnknownObject(String),
    #[error("{0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Scenario, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_str(&text)
    }

    /// Construct the simulation world. `seed` overrides the file's seed
    /// when given so one scenario can back many reproducible runs.
    pub fn build(&self, lib: &Library, seed: Option<u64>) -> Result<WorldState, ScenarioError> {
        let config = lib
            .configuration(&self.robot.configuration)
            .ok_or_else(|| ScenarioError::UnknownConfiguration(self.robot.configuration.clone()))?;
        self.faults
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let mut w = WorldState::new(self.world.dims, self.world.res, seed.unwrap_or(self.seed));
        for s in &self.solids {
            w.fill_box(
                Vec3::new(s.min[0], s.min[1], s.min[2]),
                Vec3::new(s.max[0], s.max[1], s.max[2]),
                s.color.as_deref().map(Color::new),
            );
        }
        if let Some(st) = &self.stairs {
            let dir = Vec2::new(st.direction[0], st.direction[1]);
            let n = dir.norm();
            if n <= 0.0 {
                return Err(ScenarioError::Invalid("stair direction must be nonzero".into()));
            }
            w.add_stairs(StairField {
                base: Vec2::new(st.base[0], st.base[1]),
                direction: dir.scale(1.0 / n),
                rise: st.rise,
                depth: st.depth,
                steps: st.steps,
                width: st.width,
            });
        }
        for o in &self.objects {
            w.objects.push(TaskObject {
                id: o.id.clone(),
                color: Color::new(&o.color),
                position: Vec3::new(o.position[0], o.position[1], o.position[2]),
                height_above_ground: o.position[2],
                carried_by: None,
                carry_offset: Vec2::default(),
                carry_dz: 0.0,
            });
        }
        if let Some(cid) = &self.robot.carrying {
            let sensor = config
                .sensor_id()
                .ok_or_else(|| ScenarioError::Invalid("configuration has no sensor module".into()))?
                .to_string();
            let o = w
                .objects
                .iter_mut()
                .find(|o| o.id == *cid)
                .ok_or_else(|| ScenarioError::UnknownObject(cid.clone()))?;
            o.carried_by = Some(sensor);
            o.carry_offset = Vec2::new(0.10, 0.0);
            o.carry_dz = 0.0;
        }
        // placing the cluster also snaps carried objects to the carrier
        w.place_cluster(config, Pose2::new(self.robot.start[0], self.robot.start[1], self.robot.start[2]));
        w.fault = self.faults;
        w.pose_noise_std = self.pose_noise_std;
        w.heading_noise_std = self.heading_noise_std;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "t"
        [world]
        dims = [20, 20, 4]
        res = 0.08
        [robot]
        configuration = "Car"
        start = [0.6, 0.6, 0.0]
        carrying = "box"
        [[solid]]
        min = [1.2, 0.0, 0.0]
        max = [1.28, 0.8, 0.24]
        [[object]]
        id = "box"
        color = "green"
        position = [1.0, 1.0, 0.0]
    "#;

    fn lib() -> Library {
        Library::load(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/library.toml")))
            .unwrap()
    }

    #[test]
    fn builds_world_with_carried_object() {
        let sc = Scenario::from_str(MINIMAL).unwrap();
        let w = sc.build(&lib(), None).unwrap();
        assert_eq!(w.config_name, "Car");
        let o = w.object("box").unwrap();
        assert_eq!(o.carried_by.as_deref(), Some("s"));
        // carried objects ride slightly ahead of the sensor module
        assert!((o.position.x - 0.70).abs() < 1e-9 && (o.position.y - 0.60).abs() < 1e-9);
        assert!(matches!(w.voxel([15, 4, 0]), crate::worldsim::Voxel::Solid(None)));
    }

    #[test]
    fn unknown_carried_object_rejected() {
        let sc =
            Scenario::from_str(&MINIMAL.replace("carrying = \"box\"", "carrying = \"nope\"")).unwrap();
        assert!(matches!(sc.build(&lib(), None), Err(ScenarioError::UnknownObject(_))));
    }

    #[test]
    fn seed_override_wins() {
        let sc = Scenario::from_str(MINIMAL).unwrap();
        let w = sc.build(&lib(), Some(42)).unwrap();
        assert_eq!(w.rng_seed, 42);
    }
}
