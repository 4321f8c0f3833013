//! Reconfiguration plans: static validation by graph rewriting and
//! closed-loop execution inside the sensor module's localization zone.
//! One module moves at a time: tilt-wiggle detach, waypoint driving on
//! noisy zone poses, spin alignment at a pre-dock standoff, and a short
//! deliberate overdrive through the dock point.

use crate::designlib::{Face, Library};
use crate::geom::{point_segment_dist, wrap_angle, Vec2};
use crate::nav::{follow_path, to_wheel_speeds, Waypoint};
use crate::worldsim::{
    FaultCategory, JointCommand, WorldState, MODULE_SIZE, MODULE_TRACK, TICK_DT, ZONE_DEPTH,
    ZONE_HALF_WIDTH,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALIGN_TOL: f64 = 3.0 * std::f64::consts::PI / 180.0;
pub const OVERDRIVE_DIST: f64 = 0.01;
pub const PRE_DOCK_STANDOFF: f64 = 0.10;
/// Simulated seconds a single module may take from detach to dock.
pub const MODULE_BUDGET_S: f64 = 60.0;
/// Minimum clearance between a moving module's path and resting modules.
const PATH_CLEARANCE: f64 = 0.065;
const WAYPOINT_TOL: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStep {
    Detach { module: String, face: Face },
    /// Waypoints in the sensor module's frame, ending at the pre-dock area.
    MoveTo { module: String, waypoints: Vec<[f64; 2]> },
    AlignAndDock { module: String, target: String, target_face: Face, own_face: Face },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconfigurationPlan {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSet {
    #[serde(default, rename = "plan")]
    pub plans: Vec<ReconfigurationPlan>,
}

impl PlanSet {
    pub fn from_str(text: &str) -> Result<PlanSet, PlanError> {
        toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<PlanSet, PlanError> {
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::Parse(e.to_string()))?;
        PlanSet::from_str(&text)
    }

    pub fn find(&self, from: &str, to: &str) -> Option<&ReconfigurationPlan> {
        self.plans.iter().find(|p| p.from == from && p.to == to)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("plan file: {0}")]
    Parse(String),
    #[error("unknown configuration `{0}`")]
    UnknownConfiguration(String),
    #[error("unknown module `{0}` in plan")]
    UnknownModule(String),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("face conflict: {module}.{face:?} already connected")]
    FaceConflict { module: String, face: Face },
    #[error("waypoint path of `{module}` passes within clearance of `{other}`")]
    Collision { module: String, other: String },
    #[error("waypoint of `{module}` lies outside the reconfiguration zone")]
    OutOfZone { module: String },
    #[error("step addresses `{module}` which is not detached")]
    NotDetached { module: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconfigEventKind {
    Detached,
    WaypointReached,
    Aligned,
    Docked,
    VerifyOk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconfigEvent {
    pub kind: ReconfigEventKind,
    pub module: String,
    pub tick: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReconfigFailure {
    #[error("module `{0}` left (or was never inside) the localization zone")]
    ModuleOutOfZone(String),
    #[error("module `{0}` failed the docking tolerance check")]
    DockMisaligned(String),
    #[error("module `{0}` exceeded the per-module time budget")]
    Timeout(String),
    #[error("hardware fault during reconfiguration of `{0}`")]
    Hardware(String),
}

fn in_zone_local(p: Vec2) -> bool {
    p.x >= 0.0 && p.x <= ZONE_DEPTH && p.y.abs() <= ZONE_HALF_WIDTH
}

/// Simulate the plan's step sequence on the source configuration graph:
/// edge bookkeeping, zone containment of waypoints, and clearance of
/// move segments against resting modules. Final topology must be
/// isomorphic to the target configuration.
pub fn validate_plan(plan: &ReconfigurationPlan, lib: &Library) -> Result<(), PlanError> {
    let from = lib
        .configuration(&plan.from)
        .ok_or_else(|| PlanError::UnknownConfiguration(plan.from.clone()))?;
    let to = lib
        .configuration(&plan.to)
        .ok_or_else(|| PlanError::UnknownConfiguration(plan.to.clone()))?;
    let mut graph = from.clone();
    let mut pos: std::collections::BTreeMap<String, (Vec2, f64)> = graph
        .layout
        .iter()
        .map(|l| (l.id.clone(), (Vec2::new(l.x, l.y), l.heading)))
        .collect();
    let mut detached: std::collections::BTreeSet<String> = Default::default();
    let face_used = |graph: &crate::designlib::ConfigurationGraph, m: &str, f: Face| {
        graph
            .edges
            .iter()
            .any(|e| (e.a == m && e.face_a == f) || (e.b == m && e.face_b == f))
    };
    for step in &plan.steps {
        match step {
            PlanStep::Detach { module, face } => {
                if graph.node_kind(module).is_none() {
                    return Err(PlanError::UnknownModule(module.clone()));
                }
                if !face_used(&graph, module, *face) {
                    return Err(PlanError::TopologyMismatch(format!(
                        "detach of unconnected face {module}.{face:?}"
                    )));
                }
                graph
                    .edges
                    .retain(|e| !((e.a == *module && e.face_a == *face) || (e.b == *module && e.face_b == *face)));
                let still_connected = graph.edges.iter().any(|e| e.a == *module || e.b == *module);
                if !still_connected {
                    detached.insert(module.clone());
                }
            }
            PlanStep::MoveTo { module, waypoints } => {
                if !detached.contains(module) {
                    return Err(PlanError::NotDetached { module: module.clone() });
                }
                let (mut cur, heading) = *pos
                    .get(module)
                    .ok_or_else(|| PlanError::UnknownModule(module.clone()))?;
                for wp in waypoints {
                    let wp = Vec2::new(wp[0], wp[1]);
                    if !in_zone_local(wp) {
                        return Err(PlanError::OutOfZone { module: module.clone() });
                    }
                    for (other, (op, _)) in &pos {
                        if other == module {
                            continue;
                        }
                        if point_segment_dist(*op, cur, wp) < PATH_CLEARANCE {
                            return Err(PlanError::Collision {
                                module: module.clone(),
                                other: other.clone(),
                            });
                        }
                    }
                    cur = wp;
                }
                pos.insert(module.clone(), (cur, heading));
            }
            PlanStep::AlignAndDock { module, target, target_face, own_face } => {
                if !detached.contains(module) {
                    return Err(PlanError::NotDetached { module: module.clone() });
                }
                let kind = graph
                    .node_kind(module)
                    .ok_or_else(|| PlanError::UnknownModule(module.clone()))?;
                let target_kind = graph
                    .node_kind(target)
                    .ok_or_else(|| PlanError::UnknownModule(target.clone()))?;
                if !own_face.allowed_for(kind) || !target_face.allowed_for(target_kind) {
                    return Err(PlanError::TopologyMismatch(format!(
                        "face not available on module kind for {module}/{target}"
                    )));
                }
                if face_used(&graph, target, *target_face) {
                    return Err(PlanError::FaceConflict { module: target.clone(), face: *target_face });
                }
                if face_used(&graph, module, *own_face) {
                    return Err(PlanError::FaceConflict { module: module.clone(), face: *own_face });
                }
                graph.edges.push(crate::designlib::ConfigEdge {
                    a: target.clone(),
                    face_a: *target_face,
                    b: module.clone(),
                    face_b: *own_face,
                });
                detached.remove(module);
                // resting position after docking: adjacent to the target
                // along the target face direction
                let (tp, th) = *pos
                    .get(target)
                    .ok_or_else(|| PlanError::UnknownModule(target.clone()))?;
                let out = target_face
                    .planar_dir()
                    .ok_or_else(|| PlanError::TopologyMismatch(format!(
                        "cannot dock onto vertical face {target_face:?}"
                    )))?
                    .rotated(th);
                let own_dir = own_face.planar_dir().ok_or_else(|| {
                    PlanError::TopologyMismatch(format!("cannot dock with vertical face {own_face:?}"))
                })?;
                // a differential drive can only translate along its body x
                // axis, so the docking face must be fore or aft
                if own_dir.y != 0.0 {
                    return Err(PlanError::TopologyMismatch(format!(
                        "module {module} cannot drive sideways onto a dock with {own_face:?}"
                    )));
                }
                let heading = wrap_angle(out.scale(-1.0).angle() - own_dir.angle());
                pos.insert(module.clone(), (tp.add(out.scale(MODULE_SIZE)), heading));
            }
        }
    }
    if !detached.is_empty() {
        return Err(PlanError::TopologyMismatch(format!(
            "plan leaves modules detached: {detached:?}"
        )));
    }
    if !graph.isomorphic(to) {
        return Err(PlanError::TopologyMismatch(format!(
            "rewritten {} graph is not isomorphic to {}",
            plan.from, plan.to
        )));
    }
    Ok(())
}

struct Exec<'w> {
    world: &'w mut WorldState,
    events: Vec<ReconfigEvent>,
    /// Ticks consumed by the currently moving module.
    used: u64,
    budget: u64,
}

impl<'w> Exec<'w> {
    fn push(&mut self, kind: ReconfigEventKind, module: &str) {
        self.events.push(ReconfigEvent { kind, module: module.to_string(), tick: self.world.tick });
    }

    fn measured_pose(&mut self, module: &str) -> Result<crate::geom::Pose2, ReconfigFailure> {
        self.world
            .reconfig_zone_poses()
            .into_iter()
            .find(|(id, _)| id == module)
            .map(|(_, p)| p)
            .ok_or_else(|| ReconfigFailure::ModuleOutOfZone(module.to_string()))
    }

    /// Average several zone measurements to beat down localization noise
    /// before precision moves. Headings are averaged on the circle.
    fn measured_pose_avg(&mut self, module: &str, n: usize) -> Result<crate::geom::Pose2, ReconfigFailure> {
        let (mut x, mut y, mut c, mut s) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let p = self.measured_pose(module)?;
            x += p.x;
            y += p.y;
            c += p.heading.cos();
            s += p.heading.sin();
        }
        let n = n as f64;
        Ok(crate::geom::Pose2::new(x / n, y / n, s.atan2(c)))
    }

    fn tick_module(&mut self, module: &str, cmd: JointCommand) -> Result<(), ReconfigFailure> {
        self.world
            .step(&[(module.to_string(), cmd)], TICK_DT)
            .expect("validated module id");
        self.used += 1;
        if self.used > self.budget {
            return Err(ReconfigFailure::Timeout(module.to_string()));
        }
        let true_pos = self.world.module(module).unwrap().pose.pos();
        if !self.world.in_zone(true_pos) {
            return Err(ReconfigFailure::ModuleOutOfZone(module.to_string()));
        }
        Ok(())
    }

    fn drive_to(
        &mut self,
        module: &str,
        goal: Waypoint,
        tol: f64,
        samples: usize,
    ) -> Result<(), ReconfigFailure> {
        loop {
            let pose = self.measured_pose_avg(module, samples)?;
            let dist = pose.pos().dist(goal.position);
            if dist <= tol {
                return Ok(());
            }
            // the cruise controller idles inside its own goal region, which
            // can be looser than a docking tolerance: creep the rest
            let cmd = if dist <= crate::nav::GOAL_TOL {
                let local = pose.world_to_local(goal.position);
                let heading_err = local.y.atan2(local.x);
                if heading_err.abs() > 0.3 {
                    crate::nav::DriveCommand { v: 0.0, omega: (3.0 * heading_err).clamp(-1.0, 1.0) }
                } else {
                    crate::nav::DriveCommand { v: 0.02, omega: (2.0 * heading_err).clamp(-1.0, 1.0) }
                }
            } else {
                follow_path(&[goal], pose)
            };
            let (l, r) = to_wheel_speeds(cmd, MODULE_TRACK, crate::worldsim::WHEEL_RADIUS);
            self.tick_module(module, JointCommand { left: l, right: r, ..Default::default() })?;
        }
    }

    fn spin_align(&mut self, module: &str, heading: f64) -> Result<(), ReconfigFailure> {
        loop {
            let pose = self.measured_pose_avg(module, 4)?;
            let err = wrap_angle(heading - pose.heading);
            if err.abs() < ALIGN_TOL {
                return Ok(());
            }
            let omega = (3.0 * err).clamp(-1.0, 1.0);
            let (l, r) = to_wheel_speeds(
                crate::nav::DriveCommand { v: 0.0, omega },
                MODULE_TRACK,
                crate::worldsim::WHEEL_RADIUS,
            );
            self.tick_module(module, JointCommand { left: l, right: r, ..Default::default() })?;
        }
    }
}

/// Execute a validated plan against the simulation. Module positions are
/// sensed through the noisy localization zone; docking succeeds only when
/// the true pose meets the contact tolerances.
pub fn execute_plan(
    plan: &ReconfigurationPlan,
    world: &mut WorldState,
    lib: &Library,
) -> Result<Vec<ReconfigEvent>, ReconfigFailure> {
    let from = lib.configuration(&plan.from).expect("validated plan");
    let to = lib.configuration(&plan.to).expect("validated plan");
    // earlier reconfigurations may have permuted which physical module
    // plays each role, so rebind the plan's names onto the world's ids
    let bind = from
        .isomorphism(&world.connection_graph())
        .expect("world topology matches the plan's source configuration");
    let name = |m: &String| bind.get(m).cloned().unwrap_or_else(|| m.clone());
    let sensor = world.cluster_pose();
    let budget = (MODULE_BUDGET_S / TICK_DT) as u64;
    let mut ex = Exec { world, events: vec![], used: 0, budget };
    for step in &plan.steps {
        match step {
            PlanStep::Detach { module, face } => {
                let module = &name(module);
                ex.used = 0; // budget covers one module's detach-move-dock
                if ex.world.roll_faults() == Some(FaultCategory::Hardware) {
                    return Err(ReconfigFailure::Hardware(module.clone()));
                }
                // tilt wiggle to free the magnets, wheels on the ground
                for dir in [1.0, -1.0, 1.0, -1.0] {
                    ex.tick_module(module, JointCommand { tilt: 0.8 * dir, ..Default::default() })?;
                }
                ex.world.detach(module, *face);
                ex.push(ReconfigEventKind::Detached, module);
            }
            PlanStep::MoveTo { module, waypoints } => {
                let module = &name(module);
                for wp in waypoints {
                    let w = sensor.local_to_world(Vec2::new(wp[0], wp[1]));
                    ex.drive_to(module, Waypoint::at(w.x, w.y), WAYPOINT_TOL, 1)?;
                    ex.push(ReconfigEventKind::WaypointReached, module);
                }
            }
            PlanStep::AlignAndDock { module, target, target_face, own_face } => {
                let (module, target) = (&name(module), &name(target));
                let (tp, th) = {
                    let t = ex.measured_pose_avg(target, 8)?;
                    (t.pos(), t.heading)
                };
                let out = target_face.planar_dir().expect("validated face").rotated(th);
                let dock = tp.add(out.scale(MODULE_SIZE));
                let pre_dock = dock.add(out.scale(PRE_DOCK_STANDOFF));
                let own_dir = own_face.planar_dir().expect("validated face");
                let heading = wrap_angle(out.scale(-1.0).angle() - own_dir.angle());
                ex.drive_to(module, Waypoint::at(pre_dock.x, pre_dock.y), 0.015, 8)?;
                ex.spin_align(module, heading)?;
                ex.push(ReconfigEventKind::Aligned, module);
                // straight overdrive through the dock point, open loop;
                // reverse when the docking face is aft of the body
                let travel = PRE_DOCK_STANDOFF + OVERDRIVE_DIST;
                let v = 0.05 * own_dir.x.signum();
                let ticks = (travel / (v.abs() * TICK_DT)).round() as u64;
                let (l, r) = to_wheel_speeds(
                    crate::nav::DriveCommand { v, omega: 0.0 },
                    MODULE_TRACK,
                    crate::worldsim::WHEEL_RADIUS,
                );
                for _ in 0..ticks {
                    ex.tick_module(module, JointCommand { left: l, right: r, ..Default::default() })?;
                }
                // contact check against ground truth
                let m = ex.world.module(module).unwrap();
                let true_target = ex.world.module(target).unwrap().pose;
                let true_out = target_face.planar_dir().unwrap().rotated(true_target.heading);
                let true_dock = true_target.pos().add(true_out.scale(MODULE_SIZE));
                let want_heading =
                    wrap_angle(true_out.scale(-1.0).angle() - own_dir.angle());
                let pos_err = m.pose.pos().dist(true_dock);
                let heading_err = wrap_angle(m.pose.heading - want_heading).abs();
                if pos_err >= MODULE_SIZE / 2.0 || heading_err >= 2.0 * ALIGN_TOL {
                    return Err(ReconfigFailure::DockMisaligned(module.clone()));
                }
                // snap to the exact berth on magnet engagement
                let mm = ex.world.module_mut(module).unwrap();
                mm.pose = crate::geom::Pose2::new(true_dock.x, true_dock.y, want_heading);
                ex.world.connect(target, *target_face, module, *own_face);
                ex.push(ReconfigEventKind::Docked, module);
            }
        }
    }
    let current = ex.world.connection_graph();
    if !current.isomorphic(to) {
        let culprit = plan
            .steps
            .iter()
            .rev()
            .find_map(|s| match s {
                PlanStep::AlignAndDock { module, .. } => Some(module.clone()),
                _ => None,
            })
            .unwrap_or_default();
        return Err(ReconfigFailure::DockMisaligned(culprit));
    }
    ex.world.config_name = plan.to.clone();
    let sensor_id = ex.world.sensor_module().id.clone();
    ex.push(ReconfigEventKind::VerifyOk, &sensor_id);
    Ok(ex.events)
}
