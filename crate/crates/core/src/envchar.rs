//! Environment characterization: given a mapped object and the robot's
//! location, find the closest reachable approach point and classify the
//! surrounding terrain so a matching capability can be chosen.

use crate::geom::Vec2;
use crate::mapping::{reach_distances, Detection, OccupancyGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentType {
    Free,
    Tunnel,
    High,
    Stairs,
}

impl std::fmt::Display for EnvironmentType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EnvironmentType::Free => "free",
            EnvironmentType::Tunnel => "tunnel",
            EnvironmentType::High => "high",
            EnvironmentType::Stairs => "stairs",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterizationParams {
    pub robot_radius: f64,
    /// Half-angle of the approach cone around the object-to-robot bearing.
    pub cone_half_angle: f64,
    /// Standoff distance separating blocked approaches from clear ones.
    pub dist_threshold: f64,
    /// Object height from which terrain counts as elevated.
    pub high_threshold: f64,
    /// Radius around the object within which approach points are sought.
    pub region_extent: f64,
    pub ground_z: f64,
}

impl Default for CharacterizationParams {
    fn default() -> Self {
        CharacterizationParams {
            robot_radius: 0.16,
            cone_half_angle: 20f64.to_radians(),
            dist_threshold: 0.30,
            high_threshold: 0.20,
            region_extent: 2.0,
            ground_z: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Characterization {
    pub env: EnvironmentType,
    /// Closest reachable point within the approach cone.
    pub approach_point: Vec2,
    /// Heading from the approach point toward the object.
    pub approach_heading: f64,
    /// Planar distance from the approach point to the object.
    pub distance: f64,
    pub object_height: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CharacterizationError {
    #[error("no reachable approach point within the cone toward the object")]
    NoReachablePoint,
    #[error("robot is outside the traversable map")]
    RobotUnreachable,
}

/// Classify the terrain around `object` as seen from `robot`.
///
/// The approach cone points from the object toward the robot; candidate
/// points are traversable map cells connected to the robot's cell. All
/// angular tests and tie-breaks use dot/cross comparisons so results are
/// exactly equivariant under quarter-turn rotations of the scene.
pub fn characterize(
    grid: &OccupancyGrid,
    robot: Vec2,
    object: &Detection,
    params: &CharacterizationParams,
) -> Result<Characterization, CharacterizationError> {
    let proj = grid.project_2d(params.ground_z, params.robot_radius);
    let dist = reach_distances(&proj, robot).ok_or(CharacterizationError::RobotUnreachable)?;
    let obj = object.centroid.xy();
    let to_robot = robot.sub(obj);
    let cos_half = params.cone_half_angle.cos();
    let mut best: Option<(Vec2, f64, (usize, usize))> = None;
    for y in 0..proj.ny {
        for x in 0..proj.nx {
            let i = proj.idx(x, y);
            if dist[i].is_infinite() || !proj.traversable[i] {
                continue;
            }
            let p = proj.center(x, y);
            let to_p = p.sub(obj);
            let d = to_p.norm();
            if d < 1e-9 || d > params.region_extent {
                continue;
            }
            // inside the cone: angle(to_p, to_robot) <= half angle
            if to_p.dot(to_robot) < cos_half * d * to_robot.norm() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bp, bd, bcell)) => {
                    if d < bd - 1e-12 {
                        true
                    } else if d > bd + 1e-12 {
                        false
                    } else {
                        // equal distance: prefer smaller |bearing offset|
                        // (larger dot), then positive cross side (both
                        // rotation-invariant), then cell order as a guard
                        let bt = bp.sub(obj);
                        let dot_new = to_p.dot(to_robot);
                        let dot_old = bt.dot(to_robot);
                        if dot_new > dot_old + 1e-12 {
                            true
                        } else if dot_new < dot_old - 1e-12 {
                            false
                        } else {
                            let cr_new = to_robot.cross(to_p);
                            let cr_old = to_robot.cross(bt);
                            if (cr_new - cr_old).abs() > 1e-12 {
                                cr_new > cr_old
                            } else {
                                (x, y) < *bcell
                            }
                        }
                    }
                }
            };
            if better {
                best = Some((p, d, (x, y)));
            }
        }
    }
    let (q, d, _) = best.ok_or(CharacterizationError::NoReachablePoint)?;
    let h = object.height_above_ground;
    let on_ground = h < params.high_threshold / 2.0;
    let env = if d > params.dist_threshold {
        if on_ground {
            EnvironmentType::Tunnel
        } else {
            EnvironmentType::Stairs
        }
    } else if h >= params.high_threshold {
        EnvironmentType::High
    } else {
        EnvironmentType::Free
    };
    Ok(Characterization {
        env,
        approach_point: q,
        approach_heading: obj.sub(q).angle(),
        distance: d,
        object_height: h,
    })
}

/// ASCII rendering of the traversability projection with robot (R),
/// object (O) and approach point (Q) overlaid; debugging aid.
pub fn debug_map(
    grid: &OccupancyGrid,
    robot: Vec2,
    object: &Detection,
    result: Option<&Characterization>,
    params: &CharacterizationParams,
) -> String {
    let proj = grid.project_2d(params.ground_z, params.robot_radius);
    let mut rows = Vec::new();
    for y in (0..proj.ny).rev() {
        let mut line = String::new();
        for x in 0..proj.nx {
            let i = proj.idx(x, y);
            let here = |p: Vec2| proj.cell_of(p) == Some((x, y));
            let ch = if here(robot) {
                'R'
            } else if here(object.centroid.xy()) {
                'O'
            } else if result.map(|r| here(r.approach_point)).unwrap_or(false) {
                'Q'
            } else if proj.occupied[i] {
                '#'
            } else if proj.traversable[i] {
                '.'
            } else if proj.free[i] {
                'o'
            } else {
                ' '
            };
            line.push(ch);
        }
        rows.push(line);
    }
    rows.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::Cell;
    use crate::Color;

    const RES: f64 = 0.08;

    fn open_grid(n: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::new([n, n, 6], RES, [0.0, 0.0, 0.0]);
        for y in 0..n {
            for x in 0..n {
                let i = g.idx([x, y, 0]);
                g.set_cell_for_test(i, Cell::Free);
            }
        }
        g
    }

    fn put_object(g: &mut OccupancyGrid, c: [usize; 3], color: &str) -> Detection {
        let i = g.idx(c);
        g.set_cell_for_test(i, Cell::Occupied(Some(Color::new(color))));
        Detection {
            color: Color::new(color),
            centroid: g.frame().center(c),
            cell_count: 1,
            height_above_ground: c[2] as f64 * RES,
        }
    }

    #[test]
    fn open_floor_object_is_free_env() {
        let mut g = open_grid(40);
        let det = put_object(&mut g, [20, 20, 0], "green");
        let robot = Vec2::new(0.6, 1.64);
        let c = characterize(&g, robot, &det, &CharacterizationParams::default()).unwrap();
        assert_eq!(c.env, EnvironmentType::Free);
        assert!(c.distance <= 0.30, "d={}", c.distance);
    }

    #[test]
    fn walled_ground_object_is_tunnel() {
        let mut g = open_grid(40);
        // two wall slabs with a narrow gap; object in the gap
        for y in 10..=30 {
            for x in 18..=22 {
                if (12..=28).contains(&y) && x == 20 {
                    continue; // slit containing the object, too narrow after bloat
                }
                for z in 0..3 {
                    let i = g.idx([x, y, z]);
                    g.set_cell_for_test(i, Cell::Occupied(None));
                }
            }
        }
        let det = put_object(&mut g, [20, 20, 0], "pink");
        let c = characterize(&g, Vec2::new(0.6, 1.64), &det, &CharacterizationParams::default())
            .unwrap();
        assert_eq!(c.env, EnvironmentType::Tunnel);
        assert!(c.distance > 0.30);
    }

    #[test]
    fn elevated_far_object_is_stairs() {
        let mut g = open_grid(40);
        // solid platform block keeps approaches far; object sits on top
        for y in 16..=24 {
            for x in 16..=24 {
                for z in 0..3 {
                    let i = g.idx([x, y, z]);
                    g.set_cell_for_test(i, Cell::Occupied(None));
                }
            }
        }
        let det = put_object(&mut g, [20, 20, 3], "pink");
        let c = characterize(&g, Vec2::new(0.6, 1.64), &det, &CharacterizationParams::default())
            .unwrap();
        assert_eq!(c.env, EnvironmentType::Stairs);
    }

    #[test]
    fn close_tall_object_is_high() {
        let mut g = open_grid(40);
        let det = put_object(&mut g, [20, 20, 3], "pink");
        let c = characterize(&g, Vec2::new(0.6, 1.64), &det, &CharacterizationParams::default())
            .unwrap();
        assert_eq!(c.env, EnvironmentType::High);
        assert!(c.distance <= 0.30);
    }

    #[test]
    fn sealed_robot_reports_no_reachable_point() {
        // the robot is walled into a pocket farther than region_extent from
        // the object: every reachable cell is out of range of the cone
        let mut g = open_grid(40);
        for y in 26..40 {
            for x in 26..40 {
                if (30..38).contains(&x) && (30..38).contains(&y) {
                    continue; // the pocket
                }
                for z in 0..3 {
                    let i = g.idx([x, y, z]);
                    g.set_cell_for_test(i, Cell::Occupied(None));
                }
            }
        }
        let det = put_object(&mut g, [5, 5, 0], "pink");
        let robot = g.frame().center([34, 34, 0]).xy();
        assert!(robot.dist(det.centroid.xy()) > CharacterizationParams::default().region_extent);
        let err = characterize(&g, robot, &det, &CharacterizationParams::default()).unwrap_err();
        assert_eq!(err, CharacterizationError::NoReachablePoint);
    }

    #[test]
    fn approach_point_matches_exhaustive_oracle() {
        let mut g = open_grid(40);
        for y in 16..=24 {
            for x in 16..=22 {
                for z in 0..3 {
                    let i = g.idx([x, y, z]);
                    g.set_cell_for_test(i, Cell::Occupied(None));
                }
            }
        }
        let det = put_object(&mut g, [20, 20, 0], "pink");
        let params = CharacterizationParams::default();
        let robot = Vec2::new(0.6, 1.64);
        let c = characterize(&g, robot, &det, &params).unwrap();
        // oracle: brute force over every traversable-and-reachable cell
        let proj = g.project_2d(0.0, params.robot_radius);
        let dist = reach_distances(&proj, robot).unwrap();
        let obj = det.centroid.xy();
        let to_robot = robot.sub(obj);
        let mut best_d = f64::INFINITY;
        for y in 0..proj.ny {
            for x in 0..proj.nx {
                let i = proj.idx(x, y);
                if dist[i].is_infinite() {
                    continue;
                }
                let p = proj.center(x, y);
                let to_p = p.sub(obj);
                let d = to_p.norm();
                if d < 1e-9 || to_p.dot(to_robot) < params.cone_half_angle.cos() * d * to_robot.norm() {
                    continue;
                }
                best_d = best_d.min(d);
            }
        }
        assert!((c.distance - best_d).abs() < 1e-9);
    }

    #[test]
    fn quarter_turn_rotation_equivariant() {
        // rotate the whole scene 90 degrees about the grid center; the
        // classification must not change and the approach point must map
        // to the rotated approach point exactly.
        let n = 40usize;
        let center = Vec2::new(n as f64 * RES / 2.0, n as f64 * RES / 2.0);
        let rot_cell = |c: [usize; 3]| -> [usize; 3] { [n - 1 - c[1], c[0], c[2]] };
        let rot_pt = |p: Vec2| -> Vec2 {
            let d = p.sub(center);
            center.add(Vec2::new(-d.y, d.x))
        };
        let mut g1 = open_grid(n);
        let mut g2 = open_grid(n);
        let walls: Vec<[usize; 3]> = (16..=24)
            .flat_map(|y| (16..=22).flat_map(move |x| (0..3).map(move |z| [x, y, z])))
            .collect();
        for c in &walls {
            let i = g1.idx(*c);
            g1.set_cell_for_test(i, Cell::Occupied(None));
            let i = g2.idx(rot_cell(*c));
            g2.set_cell_for_test(i, Cell::Occupied(None));
        }
        let det1 = put_object(&mut g1, [20, 26, 0], "pink");
        let det2 = put_object(&mut g2, rot_cell([20, 26, 0]), "pink");
        let robot1 = g1.frame().center([7, 20, 0]).xy();
        let robot2 = rot_pt(robot1);
        let p = CharacterizationParams::default();
        let c1 = characterize(&g1, robot1, &det1, &p).unwrap();
        let c2 = characterize(&g2, robot2, &det2, &p).unwrap();
        assert_eq!(c1.env, c2.env);
        assert!((c1.distance - c2.distance).abs() < 1e-9);
        assert!(rot_pt(c1.approach_point).dist(c2.approach_point) < 1e-9);
    }
}
