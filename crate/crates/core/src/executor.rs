//! Closed-loop mission execution: sense, evaluate propositions, advance the
//! synthesized controller, and realize its chosen action through
//! exploration, navigation, behaviors, and reconfiguration.

use crate::designlib::{BehaviorKind, Library, LibraryEntry};
use crate::envchar::{
    characterize, Characterization, CharacterizationParams, EnvironmentType,
};
use crate::geom::{Vec2, Vec3};
use crate::mapping::{reach_distances, Detection, NbvOutcome, OccupancyGrid};
use crate::nav::{follow_path, plan_path, to_wheel_speeds, Waypoint};
use crate::reconfig::{execute_plan, PlanSet};
use crate::scenario::{Scenario, ScenarioError};
use crate::synth::{
    synthesize, Binding, EnvBinding, MissionSpec, SynthError, SynthesisOutcome, SysBinding,
    TargetRef,
};
use crate::worldsim::{
    EffectTarget, JointCommand, SensorConfig, WorldState, CLUSTER_TRACK, TICK_DT, WHEEL_RADIUS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Arrival tolerance for staging waypoints; matched to the controller's
/// stop tolerance so arrival is actually attained.
const ARRIVE_TOL: f64 = crate::nav::GOAL_TOL + 1e-9;
/// Heading tolerance at a staging waypoint.
const ARRIVE_HEADING_TOL: f64 = 0.1;
/// Consecutive planning failures tolerated before the mission aborts.
const NAV_RETRY_LIMIT: u32 = 200;
/// Cruise executed for a parametric drive behavior: a short straight run.
const CRUISE_TICKS: u32 = 10;
const CRUISE_SPEED: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionEventKind {
    ObjectDetected,
    Characterized,
    StateTransition,
    BehaviorStarted,
    BehaviorDone,
    ReconfigStarted,
    ReconfigDone,
    MissionComplete,
    MissionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionEvent {
    pub tick: u64,
    pub kind: MissionEventKind,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MissionResult {
    Complete,
    Failed { cause: String },
}

pub struct MissionState {
    pub result: MissionResult,
    pub events: Vec<MissionEvent>,
    pub ticks: u64,
    pub reconfigurations: usize,
    pub distance_traveled: f64,
    pub final_configuration: String,
    pub world: WorldState,
    pub grid: OccupancyGrid,
}

impl MissionState {
    /// One JSON record per line, in emission order.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum MissionSetupError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("specification is unrealizable")]
    Unrealizable(crate::synth::CounterTrace),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Error, PartialEq)]
#[error("no library entry offers `{property}` in {env}")]
pub struct NoCapableEntry {
    pub property: String,
    pub env: EnvironmentType,
}

/// Pick the entry realizing `property` in `env`. The current configuration
/// is always preferred (no reconfiguration); otherwise one candidate is
/// drawn uniformly with the mission RNG and flagged for reconfiguration.
pub fn select_behavior<'l>(
    lib: &'l Library,
    property: &str,
    env: EnvironmentType,
    current_config: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(&'l LibraryEntry, bool), NoCapableEntry> {
    select_filtered(lib, property, env, current_config, rng, |_| true)
}

fn select_filtered<'l>(
    lib: &'l Library,
    property: &str,
    env: EnvironmentType,
    current_config: &str,
    rng: &mut ChaCha8Rng,
    reachable: impl Fn(&str) -> bool,
) -> Result<(&'l LibraryEntry, bool), NoCapableEntry> {
    let cands = lib.query(property, env);
    if cands.is_empty() {
        return Err(NoCapableEntry { property: property.to_string(), env });
    }
    if let Some(e) = cands.iter().find(|e| e.configuration == current_config) {
        return Ok((e, false));
    }
    let pool: Vec<&&LibraryEntry> =
        cands.iter().filter(|e| reachable(&e.configuration)).collect();
    let pool = if pool.is_empty() { cands.iter().collect() } else { pool };
    let pick = pool[rng.random_range(0..pool.len())];
    Ok((pick, true))
}

/// Inputs for one proposition evaluation pass.
pub struct PropContext<'a> {
    pub detections: &'a [Detection],
    /// Characterization of the currently selected target, if any.
    pub characterization: Option<&'a Characterization>,
    pub carrying: bool,
    pub explored: bool,
    pub elevated: bool,
    /// Colors whose task objects have already been handled.
    pub delivered: &'a BTreeSet<String>,
    /// Library entries available to the current configuration.
    pub config_entries: &'a [&'a LibraryEntry],
}

/// Evaluate every environment proposition, packing bit i of the result
/// with the truth of `spec.env_props[i]`.
pub fn evaluate_propositions(spec: &MissionSpec, ctx: &PropContext) -> u32 {
    let mut val = 0u32;
    for (i, p) in spec.env_props.iter().enumerate() {
        let Binding::Env(b) = &p.binding else { continue };
        let truth = match b {
            EnvBinding::ObjectSeen(c) => ctx.detections.iter().any(|d| d.color == *c),
            EnvBinding::EnvTypeIs(t) => {
                ctx.characterization.map(|c| c.env == *t).unwrap_or(false)
            }
            EnvBinding::Carrying => ctx.carrying,
            EnvBinding::Pending(colors) => colors.iter().any(|c| {
                !ctx.delivered.contains(&c.0)
                    && ctx.detections.iter().any(|d| d.color == *c)
            }),
            EnvBinding::Explored => ctx.explored,
            EnvBinding::Elevated => ctx.elevated,
            EnvBinding::ConfigCan(prop) => ctx
                .config_entries
                .iter()
                .any(|e| e.behavior_properties.contains(prop)),
        };
        if truth {
            val |= 1 << i;
        }
    }
    val
}

struct CharEntry {
    c: Characterization,
    centroid: Vec3,
    cell_count: usize,
    /// Occupied cells within the characterization region at compute time;
    /// newly mapped obstacles there invalidate the result.
    region_occ: usize,
}

struct Exec<'a> {
    world: WorldState,
    grid: OccupancyGrid,
    lib: &'a Library,
    plans: &'a PlanSet,
    spec: &'a MissionSpec,
    aut: crate::synth::MissionAutomaton,
    cursor: Option<usize>,
    rng: ChaCha8Rng,
    events: Vec<MissionEvent>,
    sensor_cfg: SensorConfig,
    params: CharacterizationParams,
    budget: u64,
    seen_colors: BTreeSet<String>,
    delivered: BTreeSet<String>,
    explored: bool,
    chars: BTreeMap<String, CharEntry>,
    /// Color currently staged for a behavior; its characterization is the
    /// mission's "current" one.
    target: Option<String>,
    nav_goal: Option<Waypoint>,
    /// Active low-level escape target; engaged when the robot's cell falls
    /// inside an obstacle bloat margin, held until reached.
    escape_goal: Option<Vec2>,
    nav_failures: u32,
    reconfigurations: usize,
    distance: f64,
}

enum TickOutcome {
    Continue,
    Complete,
    Failed(String),
}

impl<'a> Exec<'a> {
    fn push(&mut self, kind: MissionEventKind, payload: serde_json::Value) {
        self.events.push(MissionEvent { tick: self.world.tick, kind, payload });
    }

    fn robot(&self) -> Vec2 {
        self.world.cluster_pose().pos()
    }

    fn elevated(&self) -> bool {
        self.world.cluster_z() > 1e-9
    }

    fn idle(&mut self) {
        self.world.step(&[], TICK_DT).expect("positive dt");
    }

    fn drive(&mut self, cmd: crate::nav::DriveCommand) {
        let (l, r) = to_wheel_speeds(cmd, CLUSTER_TRACK, WHEEL_RADIUS);
        let id = self.world.sensor_module().id.clone();
        let before = self.robot();
        self.world
            .step(&[(id, JointCommand { left: l, right: r, pan: 0.0, tilt: 0.0 })], TICK_DT)
            .expect("valid command");
        self.distance += self.robot().dist(before);
    }

    fn sense_and_detect(&mut self) -> Vec<Detection> {
        let frame = self.world.sense(&self.sensor_cfg);
        self.grid.integrate_frame(&frame);
        if !self.elevated() {
            // cells under the cluster are free by virtue of standing on them
            let centers: Vec<Vec2> =
                self.world.modules.iter().map(|m| m.pose.pos()).collect();
            for c in centers {
                self.grid.mark_footprint_free(c, 0.09);
            }
        }
        let detections = self.grid.detect_objects();
        for d in &detections {
            if self.seen_colors.insert(d.color.0.clone()) {
                self.push(
                    MissionEventKind::ObjectDetected,
                    json!({
                        "color": d.color.0,
                        "centroid": [d.centroid.x, d.centroid.y, d.centroid.z],
                        "cells": d.cell_count,
                        "height": d.height_above_ground,
                    }),
                );
            }
        }
        detections
    }

    /// Cached characterization for a color, refreshed when the detection
    /// moved by more than a cell or grew new occupied cells. Refresh
    /// failures keep the previous result (e.g. while standing on top of
    /// the terrain being classified).
    fn characterization_for(
        &mut self,
        color: &str,
        detections: &[Detection],
    ) -> Option<Characterization> {
        let d = detections.iter().find(|d| d.color.0 == color)?;
        let region_occ = self.occupied_near(d.centroid.xy());
        let stale = match self.chars.get(color) {
            None => true,
            Some(e) => {
                e.centroid.sub(d.centroid).norm() > self.grid.res
                    || e.cell_count != d.cell_count
                    || e.region_occ != region_occ
            }
        };
        if stale && !self.elevated() {
            if let Ok(c) = characterize(&self.grid, self.robot(), d, &self.params) {
                let changed = self
                    .chars
                    .get(color)
                    .map(|e| e.c != c)
                    .unwrap_or(true);
                if changed {
                    self.push(
                        MissionEventKind::Characterized,
                        json!({
                            "color": color,
                            "env": c.env.to_string(),
                            "distance": c.distance,
                            "height": c.object_height,
                            "staging": [c.approach_point.x, c.approach_point.y],
                            "staging_heading": c.approach_heading,
                        }),
                    );
                }
                self.chars.insert(
                    color.to_string(),
                    CharEntry { c, centroid: d.centroid, cell_count: d.cell_count, region_occ },
                );
            }
        }
        self.chars.get(color).map(|e| e.c.clone())
    }

    /// Occupied map cells within the characterization region of `center`.
    fn occupied_near(&self, center: Vec2) -> usize {
        self.grid.occupied_within(center, self.params.region_extent)
    }

    /// One control tick toward `goal`; emits drive commands, replanning on
    /// the fly as the map evolves. Planning failures count toward an abort
    /// only once exploration is finished; before that the map may simply
    /// not show a path yet.
    fn nav_step(&mut self, goal: Waypoint) -> TickOutcome {
        if self.escape_goal.is_some() {
            self.escape_step();
            return TickOutcome::Continue;
        }
        match plan_path(&self.grid, self.robot(), &goal, self.params.robot_radius, self.params.ground_z) {
            Ok(path) => {
                self.nav_failures = 0;
                let cmd = follow_path(&path, self.world.cluster_pose());
                self.drive(cmd);
                TickOutcome::Continue
            }
            Err(crate::nav::PlanError::StartBlocked) => {
                // inside the bloat margin of something mapped after we got
                // here; creep out toward the nearest traversable cell
                self.nav_failures += 1;
                if self.nav_failures > NAV_RETRY_LIMIT {
                    return TickOutcome::Failed("navigation: stuck inside obstacle margin".into());
                }
                self.escape_step();
                TickOutcome::Continue
            }
            Err(e) => {
                if self.explored {
                    self.nav_failures += 1;
                }
                if self.nav_failures > NAV_RETRY_LIMIT {
                    return TickOutcome::Failed(format!("navigation: {e}"));
                }
                self.idle();
                TickOutcome::Continue
            }
        }
    }

    /// Drive toward the nearest comfortably clear cell (one whose whole
    /// 8-neighborhood is traversable), ignoring the planner. The target is
    /// held until reached so the escape cannot livelock against replans
    /// that alternate across a cell boundary.
    fn escape_step(&mut self) {
        let pose = self.world.cluster_pose();
        if let Some(g) = self.escape_goal {
            if g.dist(pose.pos()) <= 0.03 {
                // clear of the margin; hand control back to the planner
                self.escape_goal = None;
                self.idle();
                return;
            }
        }
        if self.escape_goal.is_none() {
            let proj = self.grid.project_2d(self.params.ground_z, self.params.robot_radius);
            let interior = |x: usize, y: usize| -> bool {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                        if qx < 0 || qy < 0 || qx as usize >= proj.nx || qy as usize >= proj.ny {
                            return false;
                        }
                        if !proj.traversable[proj.idx(qx as usize, qy as usize)] {
                            return false;
                        }
                    }
                }
                true
            };
            let mut best: Option<(f64, Vec2)> = None;
            for y in 0..proj.ny {
                for x in 0..proj.nx {
                    if !interior(x, y) {
                        continue;
                    }
                    let c = proj.center(x, y);
                    let d = c.dist(pose.pos());
                    if best.as_ref().map(|(bd, _)| d < *bd).unwrap_or(true) {
                        best = Some((d, c));
                    }
                }
            }
            self.escape_goal = best.map(|(_, c)| c);
        }
        let Some(goal) = self.escape_goal else {
            self.idle();
            return;
        };
        let local = pose.world_to_local(goal);
        let heading_err = local.y.atan2(local.x);
        let cmd = if heading_err.abs() > 0.3 {
            crate::nav::DriveCommand { v: 0.0, omega: (3.0 * heading_err).clamp(-1.0, 1.0) }
        } else {
            crate::nav::DriveCommand { v: 0.08, omega: (2.0 * heading_err).clamp(-1.0, 1.0) }
        };
        self.drive(cmd);
    }

    /// Staging navigation: like `nav_step`, but while the map is still
    /// incomplete an unplannable goal redirects the tick to exploration so
    /// the missing passage gets mapped.
    fn nav_step_or_explore(&mut self, goal: Waypoint) -> TickOutcome {
        let attempt = plan_path(
            &self.grid,
            self.robot(),
            &goal,
            self.params.robot_radius,
            self.params.ground_z,
        );
        match attempt {
            Err(crate::nav::PlanError::Unreachable) if !self.explored => self.serve_explore(),
            _ => self.nav_step(goal),
        }
    }

    fn arrived(&self, goal: &Waypoint) -> bool {
        let pose = self.world.cluster_pose();
        if pose.pos().dist(goal.position) > ARRIVE_TOL {
            return false;
        }
        match goal.heading {
            Some(h) => crate::geom::wrap_angle(h - pose.heading).abs() <= ARRIVE_HEADING_TOL,
            None => true,
        }
    }

    fn serve_explore(&mut self) -> TickOutcome {
        if self.explored {
            self.idle();
            return TickOutcome::Continue;
        }
        if let Some(goal) = self.nav_goal {
            if !self.arrived(&goal) {
                return self.nav_step(goal);
            }
            self.nav_goal = None;
        }
        let outcome = self.grid.next_best_view(
            self.robot(),
            self.world.cluster_z() + self.sensor_cfg.height,
            self.sensor_cfg.max_range,
            self.params.robot_radius,
            self.params.ground_z,
        );
        match outcome {
            NbvOutcome::View { position, heading, .. } => {
                let goal = Waypoint::facing(position.x, position.y, heading);
                self.nav_goal = Some(goal);
                self.nav_step(goal)
            }
            NbvOutcome::Complete => {
                self.explored = true;
                self.idle();
                TickOutcome::Continue
            }
            // typically the robot's own cell slipped inside a bloat margin
            NbvOutcome::NoReachableCandidate => {
                self.escape_step();
                TickOutcome::Continue
            }
        }
    }

    /// Highest-priority true behavior/goto/explore proposition, realized.
    fn realize(&mut self, sys_val: u32, detections: &[Detection]) -> TickOutcome {
        // complete has already been checked by the caller
        for (i, p) in self.spec.sys_props.iter().enumerate() {
            if sys_val >> i & 1 == 0 {
                continue;
            }
            if let Binding::Sys(SysBinding::Behavior { property, target }) = &p.binding {
                let property = property.clone();
                let target = target.clone();
                return self.serve_behavior(&property, target.as_ref(), detections);
            }
        }
        for (i, p) in self.spec.sys_props.iter().enumerate() {
            if sys_val >> i & 1 == 0 {
                continue;
            }
            if let Binding::Sys(SysBinding::Goto(c)) = &p.binding {
                let color = c.0.clone();
                return self.serve_goto(&color, detections);
            }
        }
        for (i, p) in self.spec.sys_props.iter().enumerate() {
            if sys_val >> i & 1 == 1 && matches!(p.binding, Binding::Sys(SysBinding::Explore)) {
                return self.serve_explore();
            }
        }
        self.idle();
        TickOutcome::Continue
    }

    fn serve_goto(&mut self, color: &str, detections: &[Detection]) -> TickOutcome {
        self.target = Some(color.to_string());
        let Some(c) = self.characterization_for(color, detections) else {
            // target not on the map yet: search for it
            return self.serve_explore();
        };
        let goal = Waypoint::facing(c.approach_point.x, c.approach_point.y, c.approach_heading);
        if self.arrived(&goal) {
            self.idle();
            return TickOutcome::Continue;
        }
        if let Some(out) = self.ensure_drivable() {
            return out;
        }
        self.nav_step_or_explore(goal)
    }

    /// Reconfigure to a driving-capable configuration if the current one
    /// cannot move the cluster. Returns Some on a tick-consuming outcome.
    fn ensure_drivable(&mut self) -> Option<TickOutcome> {
        let entries = self.lib.entries_for_configuration(&self.world.config_name).ok()?;
        if entries.iter().any(|e| e.behavior_properties.contains("drive")) {
            return None;
        }
        match self.do_select_and_reconfig("drive", EnvironmentType::Free) {
            Ok(_) => Some(TickOutcome::Continue),
            Err(out) => Some(out),
        }
    }

    /// Select an entry for (property, env), reconfiguring when needed.
    /// Ok carries the selected entry's configuration and behavior name.
    fn do_select_and_reconfig(
        &mut self,
        property: &str,
        env: EnvironmentType,
    ) -> Result<(String, String), TickOutcome> {
        let current = self.world.config_name.clone();
        let plans = self.plans;
        let picked = select_filtered(self.lib, property, env, &current, &mut self.rng, |cfg| {
            plans.find(&current, cfg).is_some()
        });
        let (entry, reconfig) = match picked {
            Ok(x) => x,
            Err(e) => return Err(TickOutcome::Failed(e.to_string())),
        };
        let to = entry.configuration.clone();
        let behavior = entry.behavior.name.clone();
        if reconfig {
            let Some(plan) = self.plans.find(&current, &to) else {
                return Err(TickOutcome::Failed(format!(
                    "no reconfiguration plan from {current} to {to}"
                )));
            };
            self.push(
                MissionEventKind::ReconfigStarted,
                json!({
                    "from": current,
                    "to": to,
                    "property": property,
                    "env": env.to_string(),
                }),
            );
            let start_tick = self.world.tick;
            match execute_plan(plan, &mut self.world, self.lib) {
                Ok(_) => {
                    self.reconfigurations += 1;
                    self.push(
                        MissionEventKind::ReconfigDone,
                        json!({ "to": to, "ticks": self.world.tick - start_tick }),
                    );
                }
                Err(e) => {
                    return Err(TickOutcome::Failed(format!("reconfiguration: {e}")));
                }
            }
        }
        Ok((to, behavior))
    }

    fn serve_behavior(
        &mut self,
        property: &str,
        target: Option<&TargetRef>,
        detections: &[Detection],
    ) -> TickOutcome {
        // resolve the target color, if the demand names one
        let color: Option<String> = match target {
            Some(TargetRef::Color(c)) => Some(c.0.clone()),
            Some(TargetRef::Pending) => match self.nearest_pending(detections) {
                Some(c) => Some(c),
                None => return self.serve_explore(),
            },
            None => None,
        };
        let mut char_for_target: Option<Characterization> = None;
        if let Some(c) = &color {
            self.target = Some(c.clone());
            match self.characterization_for(c, detections) {
                Some(ch) => char_for_target = Some(ch),
                // not on the map yet: go find it
                None => return self.serve_explore(),
            }
        }
        // stage at the approach point before acting (skipped while the
        // robot is on elevated terrain, where approach points live on the
        // ground plane below it)
        if let (Some(ch), false) = (&char_for_target, self.elevated()) {
            let goal =
                Waypoint::facing(ch.approach_point.x, ch.approach_point.y, ch.approach_heading);
            if !self.arrived(&goal) {
                if let Some(out) = self.ensure_drivable() {
                    return out;
                }
                return self.nav_step_or_explore(goal);
            }
        }
        // behaviors whose point is mobility always run on open floor;
        // everything else acts in the terrain the target was classified as
        let env = if property == "drive" {
            EnvironmentType::Free
        } else {
            char_for_target
                .as_ref()
                .map(|c| c.env)
                .or_else(|| self.target.as_ref().and_then(|t| self.chars.get(t)).map(|e| e.c.env))
                .unwrap_or(EnvironmentType::Free)
        };
        let (config, behavior) = match self.do_select_and_reconfig(property, env) {
            Ok(x) => x,
            Err(out) => return out,
        };
        self.push(
            MissionEventKind::BehaviorStarted,
            json!({
                "behavior": behavior,
                "configuration": config,
                "property": property,
                "env": env.to_string(),
                "target": color,
            }),
        );
        let entry = self
            .lib
            .entries_for_configuration(&config)
            .expect("configuration exists")
            .into_iter()
            .find(|e| e.behavior.name == behavior)
            .expect("entry exists")
            .clone();
        let mut affected: Option<String> = None;
        match &entry.behavior.kind {
            BehaviorKind::Effect { effect } => {
                let carried = self
                    .world
                    .objects
                    .iter()
                    .find(|o| o.carried_by.is_some())
                    .map(|o| (o.id.clone(), o.color.0.clone()));
                let eff_target = color.as_ref().and_then(|c| {
                    let d = detections.iter().find(|d| d.color.0 == *c)?;
                    let oid = self.world_object_for(c, d.centroid);
                    Some(EffectTarget {
                        position: d.centroid,
                        height: d.height_above_ground,
                        object_id: oid,
                    })
                });
                affected = match effect {
                    crate::designlib::EffectKind::PickUp => {
                        eff_target.as_ref().and_then(|t| t.object_id.clone())
                    }
                    crate::designlib::EffectKind::Drop
                    | crate::designlib::EffectKind::HighReach => {
                        carried.as_ref().map(|(id, _)| id.clone())
                    }
                    _ => None,
                };
                if let Err(e) = self.world.apply_behavior_effect(&entry, env, eff_target.as_ref())
                {
                    return TickOutcome::Failed(format!("behavior {behavior}: {e:?}"));
                }
                // releasing an object anywhere counts as having handled it
                if matches!(
                    entry.behavior.kind,
                    BehaviorKind::Effect {
                        effect: crate::designlib::EffectKind::Drop
                            | crate::designlib::EffectKind::HighReach
                    }
                ) {
                    if let Some((_, cc)) = carried {
                        self.delivered.insert(cc);
                    }
                }
                self.idle();
            }
            BehaviorKind::Parametric { .. } => {
                for _ in 0..CRUISE_TICKS {
                    self.drive(crate::nav::DriveCommand { v: CRUISE_SPEED, omega: 0.0 });
                }
            }
            BehaviorKind::Static { script } => {
                let dur = script.last().map(|s| s.t).unwrap_or(0.0);
                for _ in 0..((dur / TICK_DT).ceil() as u32).max(1) {
                    self.idle();
                }
            }
        }
        let placed = affected.as_ref().and_then(|id| {
            self.world
                .object(id)
                .map(|o| [o.position.x, o.position.y, o.position.z])
        });
        self.push(
            MissionEventKind::BehaviorDone,
            json!({
                "behavior": behavior,
                "property": property,
                "target": color,
                "object": affected,
                "object_position": placed,
                "robot": {
                    "x": self.world.cluster_pose().x,
                    "y": self.world.cluster_pose().y,
                    "z": self.world.cluster_z(),
                },
            }),
        );
        TickOutcome::Continue
    }

    /// Undelivered detected color nearest to the robot by path distance.
    fn nearest_pending(&mut self, detections: &[Detection]) -> Option<String> {
        let colors: Vec<String> = detections
            .iter()
            .filter(|d| !self.delivered.contains(&d.color.0))
            .map(|d| d.color.0.clone())
            .collect();
        let pending_pref: Vec<String> = self
            .spec
            .env_props
            .iter()
            .filter_map(|p| match &p.binding {
                Binding::Env(EnvBinding::Pending(cs)) => Some(cs.iter().map(|c| c.0.clone())),
                _ => None,
            })
            .flatten()
            .filter(|c| colors.contains(c))
            .collect();
        if pending_pref.is_empty() {
            return None;
        }
        let proj = self.grid.project_2d(self.params.ground_z, self.params.robot_radius);
        let dist = reach_distances(&proj, self.robot());
        let mut best: Option<(f64, String)> = None;
        for c in pending_pref {
            let ch = self.characterization_for(&c, detections);
            let d = match (&ch, &dist) {
                (Some(ch), Some(dist)) => proj
                    .cell_of(ch.approach_point)
                    .map(|(x, y)| dist[proj.idx(x, y)])
                    .filter(|d| d.is_finite()),
                _ => None,
            }
            .or_else(|| {
                detections
                    .iter()
                    .find(|d| d.color.0 == c)
                    .map(|d| d.centroid.xy().dist(self.robot()))
            });
            if let Some(d) = d {
                if best.as_ref().map(|(bd, _)| d < *bd).unwrap_or(true) {
                    best = Some((d, c));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn world_object_for(&self, color: &str, near: Vec3) -> Option<String> {
        self.world
            .objects
            .iter()
            .filter(|o| o.color.0 == color && o.carried_by.is_none())
            .min_by(|a, b| {
                a.position
                    .sub(near)
                    .norm()
                    .partial_cmp(&b.position.sub(near).norm())
                    .unwrap()
            })
            .map(|o| o.id.clone())
    }

    fn tick(&mut self) -> TickOutcome {
        if self.world.tick >= self.budget {
            return TickOutcome::Failed("tick budget exhausted".into());
        }
        if let Some(cat) = self.world.roll_faults() {
            return TickOutcome::Failed(format!("{} fault", format!("{cat:?}").to_lowercase()));
        }
        let detections = self.sense_and_detect();
        let current_char =
            self.target.clone().and_then(|t| self.characterization_for(&t, &detections));
        let entries = self
            .lib
            .entries_for_configuration(&self.world.config_name)
            .expect("world configuration is in the library");
        let env_val = evaluate_propositions(
            self.spec,
            &PropContext {
                detections: &detections,
                characterization: current_char.as_ref(),
                carrying: self.world.objects.iter().any(|o| o.carried_by.is_some()),
                explored: self.explored,
                elevated: self.elevated(),
                delivered: &self.delivered,
                config_entries: &entries,
            },
        );
        let prev = self.cursor;
        let next = match self.cursor {
            None => self.aut.initial(env_val),
            Some(s) => self.aut.advance(s, env_val).map(|(n, _)| n),
        };
        let next = match next {
            Ok(n) => n,
            Err(e) => return TickOutcome::Failed(e.to_string()),
        };
        if prev != Some(next) {
            let st = &self.aut.states[next];
            self.push(
                MissionEventKind::StateTransition,
                json!({
                    "from": prev,
                    "to": next,
                    "env": self.prop_names(&self.spec.env_props, st.env_val),
                    "sys": self.prop_names(&self.spec.sys_props, st.sys_val),
                }),
            );
        }
        self.cursor = Some(next);
        let sys_val = self.aut.states[next].sys_val;
        for (i, p) in self.spec.sys_props.iter().enumerate() {
            if sys_val >> i & 1 == 1 && matches!(p.binding, Binding::Sys(SysBinding::Complete)) {
                return TickOutcome::Complete;
            }
        }
        self.realize(sys_val, &detections)
    }

    fn prop_names(&self, props: &[crate::synth::Proposition], val: u32) -> Vec<String> {
        props
            .iter()
            .enumerate()
            .filter(|(i, _)| val >> i & 1 == 1)
            .map(|(_, p)| p.name.clone())
            .collect()
    }
}

/// Synthesize the controller and run the mission loop to termination.
pub fn run_mission(
    scenario: &Scenario,
    spec: &MissionSpec,
    lib: &Library,
    plans: &PlanSet,
    seed: u64,
) -> Result<MissionState, MissionSetupError> {
    let aut = match synthesize(spec)? {
        SynthesisOutcome::Realizable(a) => a,
        SynthesisOutcome::Unrealizable(t) => return Err(MissionSetupError::Unrealizable(t)),
    };
    let world = scenario.build(lib, Some(seed))?;
    let grid = OccupancyGrid::new(world.frame.dims, world.frame.res, world.frame.origin);
    let mut exec = Exec {
        world,
        grid,
        lib,
        plans,
        spec,
        aut,
        cursor: None,
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7373_696f_6e),
        events: Vec::new(),
        sensor_cfg: SensorConfig::default(),
        params: CharacterizationParams::default(),
        budget: scenario.ticks,
        seen_colors: BTreeSet::new(),
        delivered: BTreeSet::new(),
        explored: false,
        chars: BTreeMap::new(),
        target: None,
        nav_goal: None,
        escape_goal: None,
        nav_failures: 0,
        reconfigurations: 0,
        distance: 0.0,
    };
    let result = loop {
        match exec.tick() {
            TickOutcome::Continue => {}
            TickOutcome::Complete => {
                exec.push(
                    MissionEventKind::MissionComplete,
                    json!({
                        "reconfigurations": exec.reconfigurations,
                        "distance": exec.distance,
                    }),
                );
                break MissionResult::Complete;
            }
            TickOutcome::Failed(cause) => {
                exec.push(MissionEventKind::MissionFailed, json!({ "cause": cause }));
                break MissionResult::Failed { cause };
            }
        }
    };
    Ok(MissionState {
        result,
        events: exec.events,
        ticks: exec.world.tick,
        reconfigurations: exec.reconfigurations,
        distance_traveled: exec.distance,
        final_configuration: exec.world.config_name.clone(),
        world: exec.world,
        grid: exec.grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::synth::parse_spec;
    use rand::SeedableRng;
    use std::path::Path;

    fn stock_library() -> Library {
        Library::load(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/library.toml")))
            .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn select_prefers_current_configuration() {
        let lib = stock_library();
        let (e, reconfigure) =
            select_behavior(&lib, "drop", EnvironmentType::Free, "Car", &mut rng(0)).unwrap();
        assert_eq!(e.label(), "Car.drop");
        assert!(!reconfigure);
    }

    #[test]
    fn select_reconfigures_when_current_cannot() {
        let lib = stock_library();
        let (e, reconfigure) =
            select_behavior(&lib, "climbUp", EnvironmentType::Stairs, "Scorpion", &mut rng(0))
                .unwrap();
        assert_eq!(e.label(), "Snake.climbUp");
        assert!(reconfigure);
    }

    #[test]
    fn select_reports_missing_capability() {
        let lib = stock_library();
        let err = select_behavior(&lib, "highReach", EnvironmentType::Tunnel, "Car", &mut rng(0))
            .unwrap_err();
        assert_eq!(err, NoCapableEntry { property: "highReach".into(), env: EnvironmentType::Tunnel });
    }

    #[test]
    fn select_among_candidates_is_seeded_uniform() {
        // Snake cannot drive; both Car.drive and Scorpion.drive qualify
        let lib = stock_library();
        let pick = |seed| {
            select_behavior(&lib, "drive", EnvironmentType::Free, "Snake", &mut rng(seed))
                .unwrap()
                .0
                .label()
        };
        for seed in 0..8 {
            assert_eq!(pick(seed), pick(seed), "same seed must repeat the choice");
        }
        let labels: BTreeSet<String> = (0..32).map(pick).collect();
        assert_eq!(
            labels,
            BTreeSet::from(["Car.drive".to_string(), "Scorpion.drive".to_string()])
        );
    }

    fn detection(color: &str) -> Detection {
        Detection {
            color: crate::Color::new(color),
            centroid: Vec3::new(1.0, 1.0, 0.04),
            cell_count: 1,
            height_above_ground: 0.0,
        }
    }

    #[test]
    fn proposition_bindings_follow_context() {
        let spec = parse_spec(
            "[BINDINGS]\n\
             env seen = object_seen(pink)\n\
             env onStairs = env_type_is(stairs)\n\
             env carrying = carrying()\n\
             env pending = pending(pink, green)\n\
             env explored = explored()\n\
             env canDrive = config_can(drive)\n",
        )
        .unwrap();
        let lib = stock_library();
        let car_entries = lib.entries_for_configuration("Car").unwrap();
        let snake_entries = lib.entries_for_configuration("Snake").unwrap();
        let bit = |name: &str| 1u32 << spec.env_prop_index(name).unwrap();

        let empty = BTreeSet::new();
        let base = PropContext {
            detections: &[],
            characterization: None,
            carrying: false,
            explored: false,
            elevated: false,
            delivered: &empty,
            config_entries: &car_entries,
        };
        // nothing seen: only the capability binding is live
        assert_eq!(evaluate_propositions(&spec, &base), bit("canDrive"));

        // pink mapped: seen and pending turn on together
        let dets = [detection("pink")];
        let val = evaluate_propositions(&spec, &PropContext { detections: &dets, ..base });
        assert_eq!(val, bit("seen") | bit("pending") | bit("canDrive"));

        // a delivered color no longer counts as pending
        let delivered = BTreeSet::from(["pink".to_string()]);
        let val = evaluate_propositions(
            &spec,
            &PropContext { detections: &dets, delivered: &delivered, ..base },
        );
        assert_eq!(val, bit("seen") | bit("canDrive"));

        // characterization drives env_type_is exclusively
        let c = Characterization {
            env: EnvironmentType::Stairs,
            approach_point: Vec2::new(0.5, 0.5),
            approach_heading: 0.0,
            distance: 0.4,
            object_height: 0.24,
        };
        let val = evaluate_propositions(
            &spec,
            &PropContext { characterization: Some(&c), carrying: true, explored: true, ..base },
        );
        assert_eq!(
            val,
            bit("onStairs") | bit("carrying") | bit("explored") | bit("canDrive")
        );

        // Snake offers no drive entry
        let val = evaluate_propositions(
            &spec,
            &PropContext { config_entries: &snake_entries, ..base },
        );
        assert_eq!(val, 0);
    }

    #[test]
    fn event_log_is_monotone_and_terminal() {
        let data = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data"));
        let lib = stock_library();
        let plans = PlanSet::load(&data.join("plans/plans.toml")).unwrap();
        let scenario = crate::scenario::Scenario::load(&data.join("demo3/scenario.toml")).unwrap();
        let spec =
            parse_spec(&std::fs::read_to_string(data.join("demo3/mission.spec")).unwrap()).unwrap();
        let ms = run_mission(&scenario, &spec, &lib, &plans, 0).unwrap();
        assert!(ms.events.windows(2).all(|w| w[0].tick <= w[1].tick));
        let terminal = |k: &MissionEventKind| {
            matches!(k, MissionEventKind::MissionComplete | MissionEventKind::MissionFailed)
        };
        assert!(terminal(&ms.events.last().unwrap().kind));
        assert_eq!(ms.events.iter().filter(|e| terminal(&e.kind)).count(), 1);
        assert!(ms.ticks <= scenario.ticks);
        // every started behavior names an entry rated for the env in force
        for e in &ms.events {
            if e.kind != MissionEventKind::BehaviorStarted {
                continue;
            }
            let config = e.payload["configuration"].as_str().unwrap();
            let behavior = e.payload["behavior"].as_str().unwrap();
            let env: EnvironmentType =
                serde_json::from_value(e.payload["env"].clone()).unwrap();
            let entry = lib
                .entries
                .iter()
                .find(|en| en.configuration == config && en.behavior.name == behavior)
                .unwrap();
            assert!(entry.environment_types.contains(&env), "{e:?}");
        }
    }
}
