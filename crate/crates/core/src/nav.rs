//! Grid path planning and path following for drive-capable
//! configurations: 8-connected A* over the belief map's 2D projection,
//! pure-pursuit steering, and differential-drive wheel mapping.

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::mapping::{OccupancyGrid, Projection2D};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const V_MAX: f64 = 0.15;
pub const OMEGA_MAX: f64 = 1.0;
pub const LOOKAHEAD: f64 = 0.16;
pub const GOAL_TOL: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec2,
    pub heading: Option<f64>,
}

impl Waypoint {
    pub fn at(x: f64, y: f64) -> Waypoint {
        Waypoint { position: Vec2::new(x, y), heading: None }
    }

    pub fn facing(x: f64, y: f64, heading: f64) -> Waypoint {
        Waypoint { position: Vec2::new(x, y), heading: Some(heading) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveCommand {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start cell is not traversable")]
    StartBlocked,
    #[error("no collision-free path to the goal")]
    Unreachable,
}

/// Cost-minimal 8-connected path on the bloated 2D projection. Unknown
/// columns are non-traversable. The returned waypoints are cell centers
/// from start to goal inclusive; the final waypoint carries the goal's
/// heading.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: Vec2,
    goal: &Waypoint,
    robot_radius: f64,
    ground_z: f64,
) -> Result<Vec<Waypoint>, PlanError> {
    let proj = grid.project_2d(ground_z, robot_radius);
    plan_on_projection(&proj, start, goal)
}

pub fn plan_on_projection(
    proj: &Projection2D,
    start: Vec2,
    goal: &Waypoint,
) -> Result<Vec<Waypoint>, PlanError> {
    let (sx, sy) = proj.cell_of(start).ok_or(PlanError::StartBlocked)?;
    if !proj.traversable[proj.idx(sx, sy)] {
        return Err(PlanError::StartBlocked);
    }
    let (gx, gy) = proj.cell_of(goal.position).ok_or(PlanError::Unreachable)?;
    if !proj.traversable[proj.idx(gx, gy)] {
        return Err(PlanError::Unreachable);
    }
    let n = proj.nx * proj.ny;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let h = |i: usize| -> f64 {
        // octile distance: admissible and consistent for unit/sqrt2 costs
        let (x, y) = ((i % proj.nx) as f64, (i / proj.nx) as f64);
        let dx = (x - gx as f64).abs();
        let dy = (y - gy as f64).abs();
        (dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)) * proj.res
    };
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let si = proj.idx(sx, sy);
    let gi = proj.idx(gx, gy);
    g[si] = 0.0;
    let mut open: BinaryHeap<(Reverse<u64>, usize)> = BinaryHeap::new();
    open.push((Reverse(h(si).to_bits()), si));
    while let Some((_, i)) = open.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        if i == gi {
            break;
        }
        let (x, y) = (i % proj.nx, i / proj.nx);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                if qx < 0 || qy < 0 || qx as usize >= proj.nx || qy as usize >= proj.ny {
                    continue;
                }
                let j = proj.idx(qx as usize, qy as usize);
                if !proj.traversable[j] {
                    continue;
                }
                let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 } * proj.res;
                let ng = g[i] + step;
                if ng < g[j] - 1e-12 {
                    g[j] = ng;
                    parent[j] = i;
                    open.push((Reverse((ng + h(j)).to_bits()), j));
                }
            }
        }
    }
    if g[gi].is_infinite() {
        return Err(PlanError::Unreachable);
    }
    let mut cells = vec![gi];
    let mut cur = gi;
    while cur != si {
        cur = parent[cur];
        cells.push(cur);
    }
    cells.reverse();
    let mut path: Vec<Waypoint> = cells
        .iter()
        .map(|&i| Waypoint::at(proj.center(i % proj.nx, i / proj.nx).x, proj.center(i % proj.nx, i / proj.nx).y))
        .collect();
    if let Some(last) = path.last_mut() {
        last.position = goal.position;
        last.heading = goal.heading;
    }
    Ok(path)
}

pub fn path_cost(path: &[Waypoint]) -> f64 {
    path.windows(2)
        .map(|w| w[0].position.dist(w[1].position))
        .sum()
}

/// Pure-pursuit steering toward the first waypoint at least a lookahead
/// away; speed tapers near the final waypoint, and a goal heading is
/// served by turning in place once the position tolerance is met.
pub fn follow_path(path: &[Waypoint], pose: Pose2) -> DriveCommand {
    assert!(!path.is_empty(), "follow_path requires a non-empty path");
    let goal = path.last().unwrap();
    let to_goal = goal.position.sub(pose.pos());
    if to_goal.norm() <= GOAL_TOL {
        if let Some(h) = goal.heading {
            let err = wrap_angle(h - pose.heading);
            if err.abs() > 0.02 {
                return DriveCommand { v: 0.0, omega: (3.0 * err).clamp(-OMEGA_MAX, OMEGA_MAX) };
            }
        }
        return DriveCommand::default();
    }
    let target = path
        .iter()
        .find(|w| w.position.dist(pose.pos()) >= LOOKAHEAD)
        .unwrap_or(goal);
    let local = pose.world_to_local(target.position);
    let heading_err = local.y.atan2(local.x);
    if heading_err.abs() > 1.0 {
        // grossly misaligned: rotate in place first
        return DriveCommand {
            v: 0.0,
            omega: (3.0 * heading_err).clamp(-OMEGA_MAX, OMEGA_MAX),
        };
    }
    let omega = (2.0 * heading_err).clamp(-OMEGA_MAX, OMEGA_MAX);
    let taper = (to_goal.norm() / LOOKAHEAD).min(1.0);
    let v = (V_MAX * taper * (1.0 - 0.5 * heading_err.abs())).max(0.02);
    DriveCommand { v: v.min(V_MAX), omega }
}

pub fn to_wheel_speeds(cmd: DriveCommand, track_width: f64, wheel_radius: f64) -> (f64, f64) {
    assert!(wheel_radius > 0.0);
    (
        (cmd.v - cmd.omega * track_width / 2.0) / wheel_radius,
        (cmd.v + cmd.omega * track_width / 2.0) / wheel_radius,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{reach_distances, Cell};

    const RES: f64 = 0.08;

    fn grid_from_ascii(rows: &[&str]) -> OccupancyGrid {
        // '#' = occupied column, '.' = free, ' ' = unknown; row 0 = max y
        let ny = rows.len();
        let nx = rows[0].len();
        let mut g = OccupancyGrid::new([nx, ny, 3], RES, [0.0, 0.0, 0.0]);
        for (ri, row) in rows.iter().enumerate() {
            let y = ny - 1 - ri;
            for (x, ch) in row.chars().enumerate() {
                let i = g.idx([x, y, 0]);
                match ch {
                    '#' => g.set_cell_for_test(i, Cell::Occupied(None)),
                    '.' => g.set_cell_for_test(i, Cell::Free),
                    _ => {}
                }
            }
        }
        g
    }

    #[test]
    fn straight_path_length_is_euclidean() {
        let g = grid_from_ascii(&[".........."; 10]);
        let start = Vec2::new(0.04, 0.04);
        let goal = Waypoint::at(0.76, 0.04);
        let path = plan_path(&g, start, &goal, 0.0, 0.0).unwrap();
        let cost = path_cost(&path);
        assert!((cost - 0.72).abs() < RES, "cost={cost}");
        assert_eq!(path.len(), 10);
    }

    #[test]
    fn goal_in_bloated_region_unreachable() {
        let g = grid_from_ascii(&[
            "..........",
            "..........",
            "....#.....",
            "..........",
            "..........",
        ]);
        // goal right next to the obstacle, inside the bloat radius
        let goal = Waypoint::at(0.04 + 5.0 * RES, 0.04 + 2.0 * RES);
        let err = plan_path(&g, Vec2::new(0.04, 0.04), &goal, 0.16, 0.0).unwrap_err();
        assert_eq!(err, PlanError::Unreachable);
    }

    #[test]
    fn unknown_cells_block_planning() {
        let g = grid_from_ascii(&[
            "...... ...",
            "...... ...",
            "...... ...",
        ]);
        let err = plan_path(&g, Vec2::new(0.04, 0.04), &Waypoint::at(0.76, 0.04), 0.0, 0.0)
            .unwrap_err();
        assert_eq!(err, PlanError::Unreachable);
    }

    #[test]
    fn astar_matches_dijkstra_oracle_on_random_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let (nx, ny) = (14usize, 11usize);
            let mut g = OccupancyGrid::new([nx, ny, 3], RES, [0.0, 0.0, 0.0]);
            for y in 0..ny {
                for x in 0..nx {
                    let i = g.idx([x, y, 0]);
                    let c = if rng.random::<f64>() < 0.25 {
                        Cell::Occupied(None)
                    } else {
                        Cell::Free
                    };
                    g.set_cell_for_test(i, c);
                }
            }
            let si = g.idx([0, 0, 0]);
            g.set_cell_for_test(si, Cell::Free);
            let start = Vec2::new(0.04, 0.04);
            let goal = Waypoint::at(0.04 + (nx - 1) as f64 * RES, 0.04 + (ny - 1) as f64 * RES);
            let proj = g.project_2d(0.0, 0.0);
            let planned = plan_on_projection(&proj, start, &goal);
            let oracle = reach_distances(&proj, start).map(|d| {
                let (gx, gy) = proj.cell_of(goal.position).unwrap();
                d[proj.idx(gx, gy)]
            });
            match planned {
                Ok(path) => {
                    // compare cell-step cost (ignore the final in-cell snap)
                    let cells: Vec<(usize, usize)> = path
                        .iter()
                        .map(|w| proj.cell_of(w.position).unwrap())
                        .collect();
                    let cost: f64 = cells
                        .windows(2)
                        .map(|w| {
                            let diag = w[0].0 != w[1].0 && w[0].1 != w[1].1;
                            (if diag { std::f64::consts::SQRT_2 } else { 1.0 }) * RES
                        })
                        .sum();
                    let d = oracle.unwrap();
                    assert!((cost - d).abs() < 1e-9, "cost {cost} vs oracle {d}");
                }
                Err(_) => {
                    assert!(oracle.is_none() || oracle.unwrap().is_infinite());
                }
            }
        }
    }

    #[test]
    fn path_cells_clear_of_obstacles() {
        let g = grid_from_ascii(&[
            "..........",
            "....##....",
            "....##....",
            "..........",
            "..........",
        ]);
        let r = 0.12;
        let path = plan_path(&g, Vec2::new(0.04, 0.04), &Waypoint::at(0.76, 0.36), r, 0.0).unwrap();
        let proj = g.project_2d(0.0, r);
        for w in &path {
            for y in 0..proj.ny {
                for x in 0..proj.nx {
                    if proj.occupied[proj.idx(x, y)] {
                        assert!(proj.center(x, y).dist(w.position) >= r - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn at_goal_aligned_commands_zero() {
        let path = vec![Waypoint::facing(1.0, 1.0, 0.5)];
        let cmd = follow_path(&path, Pose2::new(1.0, 1.0, 0.5));
        assert_eq!(cmd, DriveCommand::default());
    }

    #[test]
    fn goal_ahead_drives_straight() {
        let path = vec![Waypoint::at(2.0, 1.0)];
        let cmd = follow_path(&path, Pose2::new(1.0, 1.0, 0.0));
        assert_eq!(cmd.omega, 0.0);
        assert!(cmd.v > 0.0);
    }

    #[test]
    fn goal_left_turns_left() {
        let path = vec![Waypoint::at(1.0, 1.0 + LOOKAHEAD)];
        let cmd = follow_path(&path, Pose2::new(1.0, 1.0, 0.0));
        assert!(cmd.omega > 0.0);
    }

    #[test]
    fn wheel_speed_formula() {
        let (l, r) = to_wheel_speeds(DriveCommand { v: 0.1, omega: 0.5 }, 0.16, 0.04);
        assert!((l - 1.5).abs() < 1e-12);
        assert!((r - 3.5).abs() < 1e-12);
        let (l, r) = to_wheel_speeds(DriveCommand { v: 0.1, omega: 0.0 }, 0.16, 0.04);
        assert_eq!(l, r);
        let (l, r) = to_wheel_speeds(DriveCommand { v: 0.0, omega: 1.0 }, 0.16, 0.04);
        assert_eq!(l, -r);
    }
}
