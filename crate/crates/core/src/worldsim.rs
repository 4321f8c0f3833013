//! Deterministic kinematic world simulation: voxel environment, modules,
//! task objects, idealized depth sensing, and abstract behavior effects.

use crate::designlib::{ConfigEdge, ConfigNode, ConfigurationGraph, EffectKind, Face, LayoutPose, LibraryEntry, ModuleKind};
use crate::envchar::EnvironmentType;
use crate::geom::{wrap_angle, Pose2, Vec2, Vec3};
use crate::voxel::{traverse, GridFrame};
use crate::Color;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Module edge length in meters; also the voxel resolution.
pub const MODULE_SIZE: f64 = 0.08;
pub const WHEEL_RADIUS: f64 = 0.04;
/// Wheel separation of a single module driving on its own.
pub const MODULE_TRACK: f64 = 0.08;
/// Effective wheel separation of an assembled cluster.
pub const CLUSTER_TRACK: f64 = 0.16;
/// Fixed integration step.
pub const TICK_DT: f64 = 0.1;
/// Localization zone in the sensor module frame: x in [0, ZONE_DEPTH],
/// |y| <= ZONE_HALF_WIDTH.
pub const ZONE_DEPTH: f64 = 0.75;
pub const ZONE_HALF_WIDTH: f64 = 0.25;

pub const PAN_LIMIT: f64 = std::f64::consts::FRAC_PI_2;
pub const TILT_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Voxel {
    Empty,
    Solid(Option<Color>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointCommand {
    /// Wheel angular velocities, rad/s.
    pub left: f64,
    pub right: f64,
    pub pan: f64,
    pub tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleState {
    pub id: String,
    pub kind: ModuleKind,
    pub pose: Pose2,
    pub z: f64,
    /// left wheel, right wheel, pan, tilt angles (radians).
    pub joints: [f64; 4],
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub a: String,
    pub face_a: Face,
    pub b: String,
    pub face_b: Face,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskObject {
    pub id: String,
    pub color: Color,
    pub position: Vec3,
    pub height_above_ground: f64,
    pub carried_by: Option<String>,
    /// Offset in the carrier frame while carried.
    #[serde(default)]
    pub carry_offset: Vec2,
    #[serde(default)]
    pub carry_dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StairField {
    /// Center of the bottom edge of the first step.
    pub base: Vec2,
    /// Unit ascent direction.
    pub direction: Vec2,
    pub rise: f64,
    pub depth: f64,
    pub steps: usize,
    pub width: f64,
}

impl StairField {
    pub fn top_height(&self) -> f64 {
        self.steps as f64 * self.rise
    }

    pub fn top_center(&self) -> Vec2 {
        self.base.add(self.direction.scale(self.steps as f64 * self.depth))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultProfile {
    pub hardware: f64,
    pub navigation: f64,
    pub perception: f64,
    pub network: f64,
}

impl FaultProfile {
    pub fn validate(&self) -> Result<(), WorldError> {
        for (name, p) in [
            ("hardware", self.hardware),
            ("navigation", self.navigation),
            ("perception", self.perception),
            ("network", self.network),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorldError::InvalidFaultProbability {
                    category: name.to_string(),
                    value: p,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultCategory {
    Hardware,
    Navigation,
    Perception,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub fov_h: f64,
    pub fov_v: f64,
    pub rays_h: usize,
    pub rays_v: usize,
    pub max_range: f64,
    /// Camera height above the sensor module's ground contact.
    pub height: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            fov_h: 60f64.to_radians(),
            fov_v: 45f64.to_radians(),
            rays_h: 64,
            rays_v: 48,
            max_range: 3.0,
            height: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRay {
    /// Unit direction in the world frame.
    pub dir: Vec3,
    /// Range to the first solid cell, None if nothing within max_range.
    pub range: Option<f64>,
    pub color: Option<Color>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub origin: Vec3,
    pub yaw: f64,
    pub fov_h: f64,
    pub fov_v: f64,
    pub max_range: f64,
    pub rays: Vec<SensorRay>,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unknown module: {0}")]
    UnknownModule(String),
    #[error("unknown object: {0}")]
    UnknownObject(String),
    #[error("fault probability {category}={value} outside [0,1]")]
    InvalidFaultProbability { category: String, value: f64 },
    #[error("dt must be positive, got {0}")]
    NonPositiveDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorFailure {
    EnvMismatch,
    OutOfReach,
    NoTarget,
}

/// What an abstract-effect behavior acts on, as perceived by the executor.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectTarget {
    pub position: Vec3,
    pub height: f64,
    pub object_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub frame: GridFrameDef,
    voxels: Vec<Voxel>,
    pub objects: Vec<TaskObject>,
    pub modules: Vec<ModuleState>,
    pub connections: Vec<Connection>,
    pub config_name: String,
    pub stairs: Option<StairField>,
    pub tick: u64,
    pub rng_seed: u64,
    pub fault: FaultProfile,
    pub pose_noise_std: f64,
    pub heading_noise_std: f64,
    pub distance_traveled: f64,
    rng: ChaCha8Rng,
}

/// Serializable mirror of [`GridFrame`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrameDef {
    pub dims: [usize; 3],
    pub res: f64,
    pub origin: [f64; 3],
}

impl GridFrameDef {
    pub fn frame(&self) -> GridFrame {
        GridFrame {
            dims: self.dims,
            res: self.res,
            origin: Vec3::new(self.origin[0], self.origin[1], self.origin[2]),
        }
    }
}

impl WorldState {
    pub fn new(dims: [usize; 3], res: f64, seed: u64) -> WorldState {
        WorldState {
            frame: GridFrameDef { dims, res, origin: [0.0, 0.0, 0.0] },
            voxels: vec![Voxel::Empty; dims[0] * dims[1] * dims[2]],
            objects: vec![],
            modules: vec![],
            connections: vec![],
            config_name: String::new(),
            stairs: None,
            tick: 0,
            rng_seed: seed,
            fault: FaultProfile::default(),
            pose_noise_std: 0.0,
            heading_noise_std: 0.0,
            distance_traveled: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn grid_frame(&self) -> GridFrame {
        self.frame.frame()
    }

    pub fn voxel(&self, c: [usize; 3]) -> &Voxel {
        &self.voxels[self.grid_frame().idx(c)]
    }

    pub fn fill_box(&mut self, min: Vec3, max: Vec3, color: Option<Color>) {
        let f = self.grid_frame();
        for cz in 0..f.dims[2] {
            for cy in 0..f.dims[1] {
                for cx in 0..f.dims[0] {
                    let c = f.center([cx, cy, cz]);
                    if c.x > min.x && c.x < max.x && c.y > min.y && c.y < max.y && c.z > min.z && c.z < max.z {
                        self.voxels[f.idx([cx, cy, cz])] = Voxel::Solid(color.clone());
                    }
                }
            }
        }
    }

    pub fn add_stairs(&mut self, stairs: StairField) {
        // Voxelize each step as a solid box.
        let s = stairs.clone();
        let perp = Vec2::new(-s.direction.y, s.direction.x);
        for i in 0..s.steps {
            let lo = s.base.add(s.direction.scale(i as f64 * s.depth));
            let hi = s.base.add(s.direction.scale((i + 1) as f64 * s.depth));
            let h = (i + 1) as f64 * s.rise;
            // axis-aligned bounding box assumption: stairs ship axis-aligned
            let corners = [
                lo.add(perp.scale(s.width / 2.0)),
                lo.add(perp.scale(-s.width / 2.0)),
                hi.add(perp.scale(s.width / 2.0)),
                hi.add(perp.scale(-s.width / 2.0)),
            ];
            let min_x = corners.iter().map(|c| c.x).fold(f64::INFINITY, f64::min);
            let max_x = corners.iter().map(|c| c.x).fold(f64::NEG_INFINITY, f64::max);
            let min_y = corners.iter().map(|c| c.y).fold(f64::INFINITY, f64::min);
            let max_y = corners.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max);
            self.fill_box(
                Vec3::new(min_x, min_y, 0.0),
                Vec3::new(max_x, max_y, h),
                Some(Color::new("gray")),
            );
        }
        self.stairs = Some(stairs);
    }

    pub fn module(&self, id: &str) -> Option<&ModuleState> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn module_mut(&mut self, id: &str) -> Option<&mut ModuleState> {
        self.modules.iter_mut().find(|m| m.id == id)
    }

    pub fn sensor_module(&self) -> &ModuleState {
        self.modules
            .iter()
            .find(|m| m.kind == ModuleKind::Sensor)
            .expect("world has a sensor module")
    }

    pub fn object(&self, id: &str) -> Option<&TaskObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Pose of the assembled robot; the sensor module anchors the cluster frame.
    pub fn cluster_pose(&self) -> Pose2 {
        self.sensor_module().pose
    }

    pub fn cluster_z(&self) -> f64 {
        self.sensor_module().z
    }

    /// Place (or re-place) the cluster's modules according to a
    /// configuration layout, with the sensor frame at `pose`.
    pub fn place_cluster(&mut self, config: &ConfigurationGraph, pose: Pose2) {
        let z = self.modules.iter().find(|m| m.kind == ModuleKind::Sensor).map(|m| m.z).unwrap_or(0.0);
        self.modules.clear();
        self.connections.clear();
        for node in &config.nodes {
            let lp = config.layout_pose(&node.id).expect("validated layout");
            let world = pose.local_to_world(Vec2::new(lp.x, lp.y));
            self.modules.push(ModuleState {
                id: node.id.clone(),
                kind: node.kind,
                pose: Pose2::new(world.x, world.y, wrap_angle(pose.heading + lp.heading)),
                z,
                joints: [0.0; 4],
                attached: true,
            });
        }
        for e in &config.edges {
            self.connections.push(Connection {
                a: e.a.clone(),
                face_a: e.face_a,
                b: e.b.clone(),
                face_b: e.face_b,
            });
        }
        self.config_name = config.name.clone();
        self.update_carried();
    }

    /// Rigidly move every attached module (and carried objects) by the pose
    /// delta implied by moving the sensor frame from its current pose to a
    /// new one computed by the caller.
    fn apply_cluster_twist(&mut self, anchor: Pose2, v: f64, w: f64, dt: f64) {
        let dtheta = w * dt;
        let mid_heading = anchor.heading + dtheta / 2.0;
        let dx = v * dt * mid_heading.cos();
        let dy = v * dt * mid_heading.sin();
        let pivot = anchor.pos();
        for m in &mut self.modules {
            if !m.attached {
                continue;
            }
            let rel = m.pose.pos().sub(pivot).rotated(dtheta);
            let np = pivot.add(rel).add(Vec2::new(dx, dy));
            m.pose = Pose2::new(np.x, np.y, wrap_angle(m.pose.heading + dtheta));
        }
        self.distance_traveled += (v * dt).abs();
    }

    fn integrate_single(m: &mut ModuleState, cmd: &JointCommand, dt: f64, track: f64) -> (f64, f64) {
        let v = WHEEL_RADIUS * (cmd.left + cmd.right) / 2.0;
        let w = WHEEL_RADIUS * (cmd.right - cmd.left) / track;
        m.joints[0] += cmd.left * dt;
        m.joints[1] += cmd.right * dt;
        m.joints[2] = (m.joints[2] + cmd.pan * dt).clamp(-PAN_LIMIT, PAN_LIMIT);
        m.joints[3] = (m.joints[3] + cmd.tilt * dt).clamp(-TILT_LIMIT, TILT_LIMIT);
        (v, w)
    }

    /// Integrate one simulation step. Commands to detached modules drive them
    /// individually; the lowest-id commanded attached module sets the rigid
    /// cluster twist (other attached wheels are assumed coordinated with it).
    pub fn step(&mut self, commands: &[(String, JointCommand)], dt: f64) -> Result<(), WorldError> {
        if dt <= 0.0 {
            return Err(WorldError::NonPositiveDt(dt));
        }
        for (id, _) in commands {
            if self.module(id).is_none() {
                return Err(WorldError::UnknownModule(id.clone()));
            }
        }
        let mut ordered: Vec<&(String, JointCommand)> = commands.iter().collect();
        ordered.sort_by(|a, b| a.0.cmp(&b.0));

        let mut cluster_twist: Option<(Pose2, f64, f64)> = None;
        for (id, cmd) in ordered {
            let attached = self.module(id).unwrap().attached;
            if attached {
                let m = self.module_mut(id).unwrap();
                let pose = m.pose;
                let (v, w) = Self::integrate_single(m, cmd, dt, CLUSTER_TRACK);
                if cluster_twist.is_none() {
                    cluster_twist = Some((pose, v, w));
                }
            } else {
                let m = self.module_mut(id).unwrap();
                let (v, w) = Self::integrate_single(m, cmd, dt, MODULE_TRACK);
                let dtheta = w * dt;
                let mid = m.pose.heading + dtheta / 2.0;
                m.pose.x += v * dt * mid.cos();
                m.pose.y += v * dt * mid.sin();
                m.pose.heading = wrap_angle(m.pose.heading + dtheta);
            }
        }
        if let Some((anchor, v, w)) = cluster_twist {
            self.apply_cluster_twist(anchor, v, w, dt);
        }
        self.update_carried();
        self.tick += 1;
        Ok(())
    }

    fn update_carried(&mut self) {
        let carriers: Vec<(String, Pose2, f64)> = self
            .modules
            .iter()
            .map(|m| (m.id.clone(), m.pose, m.z))
            .collect();
        for o in &mut self.objects {
            if let Some(cid) = &o.carried_by {
                if let Some((_, pose, z)) = carriers.iter().find(|(id, _, _)| id == cid) {
                    let p = pose.local_to_world(o.carry_offset);
                    o.position = Vec3::new(p.x, p.y, z + o.carry_dz);
                }
            }
        }
    }

    fn object_cells(&self) -> Vec<([usize; 3], Color)> {
        let f = self.grid_frame();
        self.objects
            .iter()
            .filter(|o| o.carried_by.is_none())
            .filter_map(|o| {
                // objects sit at their stated position; the cell sampled at
                // the object's center represents it in depth frames
                let center = Vec3::new(o.position.x, o.position.y, o.position.z + f.res / 2.0);
                f.cell_of(center).map(|c| (c, o.color.clone()))
            })
            .collect()
    }

    /// Idealized RGB-D frame: one raycast per angular sample, reporting the
    /// first solid voxel (or uncarried task object) along each ray.
    pub fn render_depth(&self, origin: Vec3, yaw: f64, cfg: &SensorConfig) -> SensorFrame {
        let frame = self.grid_frame();
        let obj_cells = self.object_cells();
        let solid_at = |c: [usize; 3]| -> Option<Option<Color>> {
            if let Voxel::Solid(col) = &self.voxels[frame.idx(c)] {
                return Some(col.clone());
            }
            obj_cells
                .iter()
                .find(|(oc, _)| *oc == c)
                .map(|(_, col)| Some(col.clone()))
        };
        let mut rays = Vec::with_capacity(cfg.rays_h * cfg.rays_v);
        for iv in 0..cfg.rays_v {
            let pitch = cfg.fov_v * ((iv as f64 + 0.5) / cfg.rays_v as f64 - 0.5);
            for ih in 0..cfg.rays_h {
                let dyaw = cfg.fov_h * ((ih as f64 + 0.5) / cfg.rays_h as f64 - 0.5);
                let a = yaw + dyaw;
                let dir = Vec3::new(pitch.cos() * a.cos(), pitch.cos() * a.sin(), pitch.sin());
                let mut hit: Option<(f64, Option<Color>)> = None;
                traverse(&frame, origin, dir, cfg.max_range, |c, t| {
                    if let Some(col) = solid_at(c) {
                        hit = Some((t.max(0.0), col));
                        false
                    } else {
                        true
                    }
                });
                rays.push(SensorRay {
                    dir,
                    range: hit.as_ref().map(|(t, _)| *t),
                    color: hit.and_then(|(_, c)| c),
                });
            }
        }
        SensorFrame {
            origin,
            yaw,
            fov_h: cfg.fov_h,
            fov_v: cfg.fov_v,
            max_range: cfg.max_range,
            rays,
        }
    }

    /// Depth frame from the sensor module's current pose.
    pub fn sense(&self, cfg: &SensorConfig) -> SensorFrame {
        let s = self.sensor_module();
        let origin = Vec3::new(s.pose.x, s.pose.y, s.z + cfg.height);
        self.render_depth(origin, s.pose.heading, cfg)
    }

    pub fn in_zone(&self, p: Vec2) -> bool {
        let s = self.sensor_module().pose;
        let local = s.world_to_local(p);
        local.x >= 0.0 && local.x <= ZONE_DEPTH && local.y.abs() <= ZONE_HALF_WIDTH
    }

    /// Poses of body/cube modules inside the localization zone in front of
    /// the sensor module, perturbed by the configured measurement noise.
    /// Stands in for overhead fiducial tracking.
    pub fn reconfig_zone_poses(&mut self) -> Vec<(String, Pose2)> {
        let sensor = self.sensor_module().pose;
        let ids: Vec<(String, Pose2)> = self
            .modules
            .iter()
            .filter(|m| m.kind != ModuleKind::Sensor)
            .filter(|m| {
                let local = sensor.world_to_local(m.pose.pos());
                local.x >= 0.0 && local.x <= ZONE_DEPTH && local.y.abs() <= ZONE_HALF_WIDTH
            })
            .map(|m| (m.id.clone(), m.pose))
            .collect();
        if self.pose_noise_std == 0.0 && self.heading_noise_std == 0.0 {
            return ids;
        }
        let pos = Normal::new(0.0, self.pose_noise_std.max(1e-12)).unwrap();
        let hdg = Normal::new(0.0, self.heading_noise_std.max(1e-12)).unwrap();
        ids.into_iter()
            .map(|(id, p)| {
                let noisy = Pose2::new(
                    p.x + pos.sample(&mut self.rng),
                    p.y + pos.sample(&mut self.rng),
                    wrap_angle(p.heading + hdg.sample(&mut self.rng)),
                );
                (id, noisy)
            })
            .collect()
    }

    /// One Bernoulli draw per fault category; returns the first category
    /// that fires, in fixed order.
    pub fn roll_faults(&mut self) -> Option<FaultCategory> {
        use rand::Rng;
        let draws = [
            (FaultCategory::Hardware, self.fault.hardware),
            (FaultCategory::Navigation, self.fault.navigation),
            (FaultCategory::Perception, self.fault.perception),
            (FaultCategory::Network, self.fault.network),
        ];
        for (cat, p) in draws {
            if p > 0.0 && self.rng.random::<f64>() < p {
                return Some(cat);
            }
        }
        None
    }

    pub fn detach(&mut self, id: &str, face: Face) -> bool {
        let before = self.connections.len();
        self.connections
            .retain(|c| !((c.a == id && c.face_a == face) || (c.b == id && c.face_b == face)));
        if before != self.connections.len() {
            let still = self.connections.iter().any(|c| c.a == id || c.b == id);
            if !still {
                if let Some(m) = self.module_mut(id) {
                    m.attached = false;
                }
            }
            true
        } else {
            false
        }
    }

    pub fn connect(&mut self, a: &str, face_a: Face, b: &str, face_b: Face) {
        self.connections.push(Connection {
            a: a.to_string(),
            face_a,
            b: b.to_string(),
            face_b,
        });
        for id in [a, b] {
            if let Some(m) = self.module_mut(id) {
                m.attached = true;
            }
        }
    }

    pub fn face_occupied(&self, id: &str, face: Face) -> bool {
        self.connections
            .iter()
            .any(|c| (c.a == id && c.face_a == face) || (c.b == id && c.face_b == face))
    }

    /// Snapshot of the current connectivity as a configuration graph, for
    /// topology verification after reconfiguration.
    pub fn connection_graph(&self) -> ConfigurationGraph {
        let sensor = self.sensor_module().pose;
        ConfigurationGraph {
            name: "current".into(),
            nodes: self
                .modules
                .iter()
                .map(|m| ConfigNode { id: m.id.clone(), kind: m.kind })
                .collect(),
            edges: self
                .connections
                .iter()
                .map(|c| ConfigEdge {
                    a: c.a.clone(),
                    face_a: c.face_a,
                    b: c.b.clone(),
                    face_b: c.face_b,
                })
                .collect(),
            layout: self
                .modules
                .iter()
                .map(|m| {
                    let local = sensor.world_to_local(m.pose.pos());
                    LayoutPose {
                        id: m.id.clone(),
                        x: local.x,
                        y: local.y,
                        heading: wrap_angle(m.pose.heading - sensor.heading),
                    }
                })
                .collect(),
        }
    }

    fn carried_object_idx(&self) -> Option<usize> {
        self.objects.iter().position(|o| o.carried_by.is_some())
    }

    fn translate_cluster(&mut self, to: Vec2, heading: f64, z: f64) {
        let from = self.cluster_pose();
        let dtheta = wrap_angle(heading - from.heading);
        let pivot = from.pos();
        for m in &mut self.modules {
            if !m.attached {
                continue;
            }
            let rel = m.pose.pos().sub(pivot).rotated(dtheta);
            let np = to.add(rel);
            m.pose = Pose2::new(np.x, np.y, wrap_angle(m.pose.heading + dtheta));
            m.z = z;
        }
        self.update_carried();
    }

    /// Apply an abstract-effect behavior. Success rules follow the entry's
    /// environment types and rated property values: a behavior run against
    /// terrain exceeding its rating fails rather than succeeding anyway.
    pub fn apply_behavior_effect(
        &mut self,
        entry: &LibraryEntry,
        env: EnvironmentType,
        target: Option<&EffectTarget>,
    ) -> Result<(), BehaviorFailure> {
        use crate::designlib::BehaviorKind;
        let BehaviorKind::Effect { effect } = &entry.behavior.kind else {
            return Err(BehaviorFailure::EnvMismatch);
        };
        if !entry.environment_types.contains(&env) {
            return Err(BehaviorFailure::EnvMismatch);
        }
        match effect {
            EffectKind::PickUp => {
                let grasp = entry.property_value("grasp_radius").unwrap_or(0.25);
                let target = target.ok_or(BehaviorFailure::NoTarget)?;
                let oid = target.object_id.as_deref().ok_or(BehaviorFailure::NoTarget)?;
                let sensor = self.cluster_pose();
                let obj = self
                    .objects
                    .iter()
                    .position(|o| o.id == oid && o.carried_by.is_none())
                    .ok_or(BehaviorFailure::NoTarget)?;
                let d = self.objects[obj].position.xy().dist(sensor.pos());
                if d > grasp {
                    return Err(BehaviorFailure::OutOfReach);
                }
                let carrier = self.sensor_module().id.clone();
                let z = self.cluster_z();
                let o = &mut self.objects[obj];
                o.carried_by = Some(carrier);
                o.carry_offset = Vec2::new(0.10, 0.0);
                o.carry_dz = o.position.z - z;
                self.update_carried();
                Ok(())
            }
            EffectKind::Drop => {
                let idx = self.carried_object_idx().ok_or(BehaviorFailure::NoTarget)?;
                let pose = self.cluster_pose();
                let z = self.cluster_z();
                let p = pose.local_to_world(Vec2::new(0.12, 0.0));
                let o = &mut self.objects[idx];
                o.carried_by = None;
                o.position = Vec3::new(p.x, p.y, z);
                o.height_above_ground = z;
                Ok(())
            }
            EffectKind::HighReach => {
                let reach = entry.property_value("reach_height").unwrap_or(0.40);
                let idx = self.carried_object_idx().ok_or(BehaviorFailure::NoTarget)?;
                let target = target.ok_or(BehaviorFailure::NoTarget)?;
                if target.height > reach {
                    return Err(BehaviorFailure::OutOfReach);
                }
                let o = &mut self.objects[idx];
                o.carried_by = None;
                o.position = target.position;
                o.height_above_ground = target.height;
                Ok(())
            }
            EffectKind::ClimbUp => {
                let rated = entry.property_value("rated_stair_rise").unwrap_or(MODULE_SIZE);
                let stairs = self.stairs.clone().ok_or(BehaviorFailure::EnvMismatch)?;
                if stairs.rise > rated + 1e-9 {
                    return Err(BehaviorFailure::EnvMismatch);
                }
                let pose = self.cluster_pose();
                if pose.pos().dist(stairs.base) > 0.8 {
                    return Err(BehaviorFailure::OutOfReach);
                }
                let top = stairs.top_center().add(stairs.direction.scale(0.10));
                self.translate_cluster(top, stairs.direction.angle(), stairs.top_height());
                Ok(())
            }
            EffectKind::ClimbDown => {
                let stairs = self.stairs.clone().ok_or(BehaviorFailure::EnvMismatch)?;
                if self.cluster_z() <= 0.0 {
                    return Err(BehaviorFailure::EnvMismatch);
                }
                let base = stairs.base.add(stairs.direction.scale(-0.20));
                let heading = stairs.direction.scale(-1.0).angle();
                self.translate_cluster(base, heading, 0.0);
                Ok(())
            }
        }
    }
}
