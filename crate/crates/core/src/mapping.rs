//! Three-state occupancy mapping from depth frames, colored-object
//! detection, 2D traversability projection, and greedy next-best-view
//! exploration planning.

use crate::geom::{Vec2, Vec3};
use crate::voxel::{traverse, GridFrame};
use crate::worldsim::SensorFrame;
use crate::Color;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Unknown,
    Free,
    Occupied(Option<Color>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub dims: [usize; 3],
    pub res: f64,
    pub origin: [f64; 3],
    cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub color: Color,
    pub centroid: Vec3,
    pub cell_count: usize,
    /// Height of the blob's lowest cell bottom above the ground plane.
    pub height_above_ground: f64,
}

/// 2D slab projection of the grid used for navigation.
pub struct Projection2D {
    pub nx: usize,
    pub ny: usize,
    pub res: f64,
    pub origin: Vec2,
    /// Known-free and not blocked by anything in the robot-height slab.
    pub free: Vec<bool>,
    /// Occupied somewhere in the slab.
    pub occupied: Vec<bool>,
    /// Free minus obstacle bloat; the traversable set.
    pub traversable: Vec<bool>,
}

impl Projection2D {
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.nx + x
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.res;
        let fy = (p.y - self.origin.y) / self.res;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (x, y) = (fx as usize, fy as usize);
        if x < self.nx && y < self.ny {
            Some((x, y))
        } else {
            None
        }
    }

    pub fn center(&self, x: usize, y: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (x as f64 + 0.5) * self.res,
            self.origin.y + (y as f64 + 0.5) * self.res,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NbvOutcome {
    /// Chosen viewpoint and its expected unknown-cell gain.
    View { position: Vec2, heading: f64, gain: usize },
    /// No reachable candidate clears the minimum gain: exploration done.
    Complete,
    /// Reachable free space exists but no candidate cell at all.
    NoReachableCandidate,
}

/// Minimum new-cell gain for a viewpoint to be worth visiting.
pub const NBV_GAIN_MIN: usize = 10;
/// Candidate viewpoint spacing in cells.
pub const NBV_STRIDE: usize = 2;
/// Height of the slab (in meters) that must be clear for traversal.
pub const SLAB_HEIGHT: f64 = 0.24;

impl OccupancyGrid {
    pub fn new(dims: [usize; 3], res: f64, origin: [f64; 3]) -> OccupancyGrid {
        OccupancyGrid {
            dims,
            res,
            origin,
            cells: vec![Cell::Unknown; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn frame(&self) -> GridFrame {
        GridFrame {
            dims: self.dims,
            res: self.res,
            origin: Vec3::new(self.origin[0], self.origin[1], self.origin[2]),
        }
    }

    pub fn idx(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn cell(&self, c: [usize; 3]) -> &Cell {
        &self.cells[self.idx(c)]
    }

    pub fn unknown_count(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::Unknown)).count()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::Occupied(_))).count()
    }

    /// Fuse one depth frame. Cells along each ray before the hit become
    /// Free; the hit cell becomes Occupied. Occupied is sticky: a later
    /// free observation never clears it (first color observation wins too).
    pub fn integrate_frame(&mut self, frame: &SensorFrame) {
        let gf = self.frame();
        let mut hits: Vec<(usize, Option<Color>)> = Vec::new();
        let mut frees: Vec<usize> = Vec::new();
        for ray in &frame.rays {
            let limit = ray.range.unwrap_or(frame.max_range);
            let mut hit_cell: Option<usize> = None;
            traverse(&gf, frame.origin, ray.dir, limit + gf.res, |c, t| {
                let i = self.idx(c);
                if ray.range.is_some() && t >= limit - 1e-9 {
                    hit_cell = Some(i);
                    false
                } else if t >= limit {
                    false
                } else {
                    frees.push(i);
                    true
                }
            });
            if let Some(i) = hit_cell {
                hits.push((i, ray.color.clone()));
            }
        }
        for i in frees {
            if matches!(self.cells[i], Cell::Unknown) {
                self.cells[i] = Cell::Free;
            }
        }
        for (i, color) in hits {
            if !matches!(self.cells[i], Cell::Occupied(_)) {
                self.cells[i] = Cell::Occupied(color);
            }
        }
    }

    /// Occupied cells whose column lies within `radius` of `center` in the
    /// ground plane, over all heights.
    pub fn occupied_within(&self, center: Vec2, radius: f64) -> usize {
        let gf = self.frame();
        let mut n = 0;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if matches!(self.cells[self.idx([x, y, z])], Cell::Occupied(_))
                        && gf.center([x, y, z]).xy().dist(center) <= radius
                    {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    /// Mark the cells under the robot's own footprint as Free; the forward
    /// camera cannot see the floor it stands on.
    pub fn mark_footprint_free(&mut self, center: Vec2, radius: f64) {
        let gf = self.frame();
        let r_cells = (radius / self.res).ceil() as i64;
        if let Some(c) = gf.cell_of(Vec3::new(center.x, center.y, self.origin[2] + self.res / 2.0)) {
            for dy in -r_cells..=r_cells {
                for dx in -r_cells..=r_cells {
                    let x = c[0] as i64 + dx;
                    let y = c[1] as i64 + dy;
                    if x < 0 || y < 0 || x as usize >= self.dims[0] || y as usize >= self.dims[1] {
                        continue;
                    }
                    let cc = [x as usize, y as usize, c[2]];
                    if gf.center(cc).xy().dist(center) <= radius {
                        let i = self.idx(cc);
                        if matches!(self.cells[i], Cell::Unknown) {
                            self.cells[i] = Cell::Free;
                        }
                    }
                }
            }
        }
    }

    /// 6-connected blobs of same-colored Occupied cells.
    pub fn detect_objects(&self) -> Vec<Detection> {
        let gf = self.frame();
        let mut seen = vec![false; self.cells.len()];
        let mut out = Vec::new();
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let i = self.idx([x, y, z]);
                    if seen[i] {
                        continue;
                    }
                    let Cell::Occupied(Some(color)) = &self.cells[i] else { continue };
                    let color = color.clone();
                    let mut q = VecDeque::from([[x, y, z]]);
                    seen[i] = true;
                    let mut sum = Vec3::new(0.0, 0.0, 0.0);
                    let mut n = 0usize;
                    let mut min_z = usize::MAX;
                    while let Some(c) = q.pop_front() {
                        let ctr = gf.center(c);
                        sum = sum.add(ctr);
                        n += 1;
                        min_z = min_z.min(c[2]);
                        for (dx, dy, dz) in
                            [(1i64, 0i64, 0i64), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                        {
                            let nx = c[0] as i64 + dx;
                            let ny = c[1] as i64 + dy;
                            let nz = c[2] as i64 + dz;
                            if nx < 0 || ny < 0 || nz < 0 {
                                continue;
                            }
                            let nc = [nx as usize, ny as usize, nz as usize];
                            if nc[0] >= self.dims[0] || nc[1] >= self.dims[1] || nc[2] >= self.dims[2] {
                                continue;
                            }
                            let j = self.idx(nc);
                            if seen[j] {
                                continue;
                            }
                            if matches!(&self.cells[j], Cell::Occupied(Some(c2)) if *c2 == color) {
                                seen[j] = true;
                                q.push_back(nc);
                            }
                        }
                    }
                    out.push(Detection {
                        color,
                        centroid: sum.scale(1.0 / n as f64),
                        cell_count: n,
                        height_above_ground: min_z as f64 * self.res,
                    });
                }
            }
        }
        // largest blob first per color; stable order otherwise
        out.sort_by(|a, b| {
            a.color
                .0
                .cmp(&b.color.0)
                .then(b.cell_count.cmp(&a.cell_count))
        });
        out
    }

    /// Project to a 2D navigation grid: a column is free when its ground
    /// cell at `ground_z` is known Free and nothing in the robot-height
    /// slab above it is Occupied. Unknown columns are not traversable.
    pub fn project_2d(&self, ground_z: f64, robot_radius: f64) -> Projection2D {
        let z0 = ((ground_z - self.origin[2]) / self.res).round() as usize;
        let slab_cells = (SLAB_HEIGHT / self.res).round() as usize;
        let (nx, ny) = (self.dims[0], self.dims[1]);
        let mut free = vec![false; nx * ny];
        let mut occupied = vec![false; nx * ny];
        for y in 0..ny {
            for x in 0..nx {
                let i2 = y * nx + x;
                if z0 < self.dims[2] {
                    free[i2] = matches!(self.cell([x, y, z0]), Cell::Free);
                }
                for z in z0..(z0 + slab_cells).min(self.dims[2]) {
                    match self.cell([x, y, z]) {
                        Cell::Occupied(_) => {
                            occupied[i2] = true;
                            free[i2] = false;
                        }
                        Cell::Unknown if z > z0 => {}
                        _ => {}
                    }
                }
            }
        }
        // bloat occupied cells by the robot radius
        let r_cells = (robot_radius / self.res).ceil() as i64;
        let mut traversable = free.clone();
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                if !occupied[(y as usize) * nx + x as usize] {
                    continue;
                }
                for dy in -r_cells..=r_cells {
                    for dx in -r_cells..=r_cells {
                        let (qx, qy) = (x + dx, y + dy);
                        if qx < 0 || qy < 0 || qx as usize >= nx || qy as usize >= ny {
                            continue;
                        }
                        let d = ((dx * dx + dy * dy) as f64).sqrt() * self.res;
                        if d <= robot_radius {
                            traversable[(qy as usize) * nx + qx as usize] = false;
                        }
                    }
                }
            }
        }
        Projection2D {
            nx,
            ny,
            res: self.res,
            origin: Vec2::new(self.origin[0], self.origin[1]),
            free,
            occupied,
            traversable,
        }
    }

    /// Expected information gain of a viewpoint: distinct Unknown cells
    /// intersected by a coarse ray fan before the first Occupied cell.
    pub fn view_gain(
        &self,
        position: Vec2,
        heading: f64,
        sensor_z: f64,
        max_range: f64,
        stamps: &mut [u32],
        stamp: u32,
    ) -> usize {
        let gf = self.frame();
        let origin = Vec3::new(position.x, position.y, sensor_z);
        let fov_h = 60f64.to_radians();
        let fov_v = 45f64.to_radians();
        let (nh, nv) = (32usize, 12usize);
        let mut gain = 0usize;
        for iv in 0..nv {
            let pitch = fov_v * ((iv as f64 + 0.5) / nv as f64 - 0.5);
            for ih in 0..nh {
                let a = heading + fov_h * ((ih as f64 + 0.5) / nh as f64 - 0.5);
                let dir = Vec3::new(pitch.cos() * a.cos(), pitch.cos() * a.sin(), pitch.sin());
                traverse(&gf, origin, dir, max_range, |c, _| {
                    let i = self.idx(c);
                    match self.cells[i] {
                        Cell::Occupied(_) => false,
                        Cell::Unknown => {
                            if stamps[i] != stamp {
                                stamps[i] = stamp;
                                gain += 1;
                            }
                            true
                        }
                        Cell::Free => true,
                    }
                });
            }
        }
        gain
    }

    /// Greedy next-best-view: among reachable traversable cells on a coarse
    /// lattice, pick the (position, heading) with maximal unknown-cell gain;
    /// ties break toward shorter path distance, then lexicographic cell
    /// order and heading index, so the choice is deterministic.
    pub fn next_best_view(
        &self,
        robot: Vec2,
        sensor_z: f64,
        max_range: f64,
        robot_radius: f64,
        ground_z: f64,
    ) -> NbvOutcome {
        let proj = self.project_2d(ground_z, robot_radius);
        let dist = reach_distances(&proj, robot);
        let Some(dist) = dist else {
            return NbvOutcome::NoReachableCandidate;
        };
        let mut stamps = vec![0u32; self.cells.len()];
        let mut stamp = 0u32;
        let mut best: Option<(usize, f64, usize, usize, usize)> = None; // gain, dist, x, y, h
        let mut any_candidate = false;
        for y in (0..proj.ny).step_by(NBV_STRIDE) {
            for x in (0..proj.nx).step_by(NBV_STRIDE) {
                let i2 = proj.idx(x, y);
                if !proj.traversable[i2] || dist[i2].is_infinite() {
                    continue;
                }
                any_candidate = true;
                let pos = proj.center(x, y);
                for h in 0..8 {
                    let heading = h as f64 * std::f64::consts::FRAC_PI_4;
                    stamp += 1;
                    let gain = self.view_gain(pos, heading, sensor_z, max_range, &mut stamps, stamp);
                    let cand = (gain, dist[i2], x, y, h);
                    let better = match &best {
                        None => true,
                        Some((bg, bd, bx, by, bh)) => {
                            gain > *bg
                                || (gain == *bg
                                    && (cand.1 < *bd - 1e-9
                                        || ((cand.1 - *bd).abs() <= 1e-9
                                            && (x, y, h) < (*bx, *by, *bh))))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        if !any_candidate {
            return NbvOutcome::NoReachableCandidate;
        }
        match best {
            Some((gain, _, x, y, h)) if gain >= NBV_GAIN_MIN => NbvOutcome::View {
                position: proj.center(x, y),
                heading: h as f64 * std::f64::consts::FRAC_PI_4,
                gain,
            },
            _ => NbvOutcome::Complete,
        }
    }

    /// Fully-known grid built from simulation ground truth; used when a
    /// query should not depend on what has been explored so far.
    pub fn from_world(w: &crate::worldsim::WorldState) -> OccupancyGrid {
        let f = w.grid_frame();
        let mut g = OccupancyGrid::new(f.dims, f.res, [f.origin.x, f.origin.y, f.origin.z]);
        for z in 0..f.dims[2] {
            for y in 0..f.dims[1] {
                for x in 0..f.dims[0] {
                    let i = g.idx([x, y, z]);
                    g.cells[i] = match w.voxel([x, y, z]) {
                        crate::worldsim::Voxel::Empty => Cell::Free,
                        crate::worldsim::Voxel::Solid(c) => Cell::Occupied(c.clone()),
                    };
                }
            }
        }
        for o in &w.objects {
            if o.carried_by.is_some() {
                continue;
            }
            let center = Vec3::new(o.position.x, o.position.y, o.position.z + f.res / 2.0);
            if let Some(c) = f.cell_of(center) {
                let i = g.idx(c);
                if !matches!(g.cells[i], Cell::Occupied(_)) {
                    g.cells[i] = Cell::Occupied(Some(o.color.clone()));
                }
            }
        }
        g
    }

    /// Direct cell write; intended for tests and synthetic fixtures.
    pub fn set_cell_for_test(&mut self, i: usize, c: Cell) {
        self.cells[i] = c;
    }

    /// Text export, one line per non-unknown cell: `x y z state [color]`.
    pub fn export_text(&self) -> String {
        let gf = self.frame();
        let mut s = String::new();
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    let c = gf.center([x, y, z]);
                    match self.cell([x, y, z]) {
                        Cell::Unknown => {}
                        Cell::Free => {
                            s.push_str(&format!("{:.3} {:.3} {:.3} free\n", c.x, c.y, c.z));
                        }
                        Cell::Occupied(col) => {
                            let name = col.as_ref().map(|c| c.0.as_str()).unwrap_or("-");
                            s.push_str(&format!("{:.3} {:.3} {:.3} occupied {}\n", c.x, c.y, c.z, name));
                        }
                    }
                }
            }
        }
        s
    }
}

/// 8-connected shortest-path distances over traversable cells from the
/// robot's cell; None when the robot stands outside the traversable set.
pub fn reach_distances(proj: &Projection2D, robot: Vec2) -> Option<Vec<f64>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let (sx, sy) = proj.cell_of(robot)?;
    let start = proj.idx(sx, sy);
    if !proj.traversable[start] {
        return None;
    }
    let mut dist = vec![f64::INFINITY; proj.nx * proj.ny];
    dist[start] = 0.0;
    // f64 keys via total_cmp wrapper on bits: distances are non-negative
    let mut heap: BinaryHeap<(Reverse<u64>, usize)> = BinaryHeap::new();
    heap.push((Reverse(0), start));
    while let Some((Reverse(dbits), i)) = heap.pop() {
        let d = f64::from_bits(dbits);
        if d > dist[i] {
            continue;
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
                let step = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                } * proj.res;
                let nd = d + step;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push((Reverse(nd.to_bits()), j));
                }
            }
        }
    }
    Some(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{ModuleState, SensorConfig, WorldState, MODULE_SIZE};
    use crate::designlib::ModuleKind;
    use crate::geom::Pose2;

    fn world_with_wall() -> WorldState {
        let mut w = WorldState::new([40, 40, 6], MODULE_SIZE, 7);
        w.fill_box(
            Vec3::new(2.0, 0.4, 0.0),
            Vec3::new(2.08, 2.8, 0.4),
            Some(Color::new("red")),
        );
        w.modules.push(ModuleState {
            id: "s".into(),
            kind: ModuleKind::Sensor,
            pose: Pose2::new(0.8, 1.6, 0.0),
            z: 0.0,
            joints: [0.0; 4],
            attached: true,
        });
        w
    }

    #[test]
    fn integration_monotonically_reduces_unknown() {
        let w = world_with_wall();
        let mut grid = OccupancyGrid::new([40, 40, 6], MODULE_SIZE, [0.0, 0.0, 0.0]);
        let mut prev = grid.unknown_count();
        for i in 0..4 {
            let yaw = i as f64 * std::f64::consts::FRAC_PI_2;
            let frame = w.render_depth(Vec3::new(0.8, 1.6, 0.2), yaw, &SensorConfig::default());
            grid.integrate_frame(&frame);
            let now = grid.unknown_count();
            assert!(now <= prev);
            prev = now;
        }
        assert!(prev < grid.dims[0] * grid.dims[1] * grid.dims[2]);
    }

    #[test]
    fn occupied_is_sticky() {
        let w = world_with_wall();
        let mut grid = OccupancyGrid::new([40, 40, 6], MODULE_SIZE, [0.0, 0.0, 0.0]);
        let frame = w.sense(&SensorConfig::default());
        grid.integrate_frame(&frame);
        let occ_before = grid.occupied_count();
        assert!(occ_before > 0);
        // an empty-world frame from the same pose claims free along all rays
        let empty = WorldState::new([40, 40, 6], MODULE_SIZE, 7);
        let clear = empty.render_depth(frame.origin, 0.0, &SensorConfig::default());
        grid.integrate_frame(&clear);
        assert_eq!(grid.occupied_count(), occ_before);
    }

    #[test]
    fn hit_cells_match_ground_truth() {
        // every Occupied cell written by integration must be Solid in the world
        let w = world_with_wall();
        let mut grid = OccupancyGrid::new([40, 40, 6], MODULE_SIZE, [0.0, 0.0, 0.0]);
        grid.integrate_frame(&w.sense(&SensorConfig::default()));
        let gf = grid.frame();
        for z in 0..grid.dims[2] {
            for y in 0..grid.dims[1] {
                for x in 0..grid.dims[0] {
                    if matches!(grid.cell([x, y, z]), Cell::Occupied(_)) {
                        // allow one-cell skew from boundary quantization
                        let mut ok = false;
                        'n: for dz in -1i64..=1 {
                            for dy in -1i64..=1 {
                                for dx in -1i64..=1 {
                                    let (qx, qy, qz) =
                                        (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                                    if qx < 0 || qy < 0 || qz < 0 {
                                        continue;
                                    }
                                    let qc = [qx as usize, qy as usize, qz as usize];
                                    if qc[0] < grid.dims[0]
                                        && qc[1] < grid.dims[1]
                                        && qc[2] < grid.dims[2]
                                        && matches!(w.voxel(qc), crate::worldsim::Voxel::Solid(_))
                                    {
                                        ok = true;
                                        break 'n;
                                    }
                                }
                            }
                        }
                        assert!(ok, "phantom occupied cell at {:?}", gf.center([x, y, z]));
                    }
                }
            }
        }
    }

    #[test]
    fn detects_colored_blob_centroid() {
        let mut grid = OccupancyGrid::new([20, 20, 4], MODULE_SIZE, [0.0, 0.0, 0.0]);
        for c in [[5usize, 5usize, 0usize], [6, 5, 0], [5, 6, 0], [5, 5, 1]] {
            let i = grid.idx(c);
            grid.cells[i] = Cell::Occupied(Some(Color::new("pink")));
        }
        // a disconnected same-color cell forms its own blob
        let far = grid.idx([15, 15, 0]);
        grid.cells[far] = Cell::Occupied(Some(Color::new("pink")));
        let dets = grid.detect_objects();
        assert_eq!(dets.len(), 2);
        let big = &dets[0];
        assert_eq!(big.cell_count, 4);
        // oracle: mean of the four cell centers
        let gf = grid.frame();
        let expect = [[5usize, 5, 0], [6, 5, 0], [5, 6, 0], [5, 5, 1]]
            .iter()
            .fold(Vec3::new(0.0, 0.0, 0.0), |acc, &c| acc.add(gf.center(c)))
            .scale(0.25);
        assert!(big.centroid.sub(expect).norm() < 1e-12);
        assert_eq!(big.height_above_ground, 0.0);
    }

    #[test]
    fn elevated_blob_reports_height() {
        let mut grid = OccupancyGrid::new([10, 10, 6], MODULE_SIZE, [0.0, 0.0, 0.0]);
        let i = grid.idx([4, 4, 3]);
        grid.cells[i] = Cell::Occupied(Some(Color::new("pink")));
        let dets = grid.detect_objects();
        assert_eq!(dets.len(), 1);
        assert!((dets[0].height_above_ground - 3.0 * MODULE_SIZE).abs() < 1e-12);
    }

    #[test]
    fn nbv_gain_matches_brute_force_oracle() {
        let w = world_with_wall();
        let mut grid = OccupancyGrid::new([40, 40, 6], MODULE_SIZE, [0.0, 0.0, 0.0]);
        grid.integrate_frame(&w.sense(&SensorConfig::default()));
        let mut stamps = vec![0u32; grid.cells.len()];
        let pos = Vec2::new(0.8, 1.6);
        let gain = grid.view_gain(pos, 0.0, 0.2, 3.0, &mut stamps, 1);
        // oracle: recompute with an independent set-based dedupe
        let gf = grid.frame();
        let mut seen = std::collections::BTreeSet::new();
        let (nh, nv) = (32usize, 12usize);
        let fov_h = 60f64.to_radians();
        let fov_v = 45f64.to_radians();
        for iv in 0..nv {
            let pitch = fov_v * ((iv as f64 + 0.5) / nv as f64 - 0.5);
            for ih in 0..nh {
                let a = fov_h * ((ih as f64 + 0.5) / nh as f64 - 0.5);
                let dir = Vec3::new(pitch.cos() * a.cos(), pitch.cos() * a.sin(), pitch.sin());
                traverse(&gf, Vec3::new(0.8, 1.6, 0.2), dir, 3.0, |c, _| match grid.cell(c) {
                    Cell::Occupied(_) => false,
                    Cell::Unknown => {
                        seen.insert(c);
                        true
                    }
                    Cell::Free => true,
                });
            }
        }
        assert_eq!(gain, seen.len());
    }

    #[test]
    fn fully_known_map_completes() {
        let mut grid = OccupancyGrid::new([20, 20, 4], MODULE_SIZE, [0.0, 0.0, 0.0]);
        for c in grid.cells.iter_mut() {
            *c = Cell::Free;
        }
        let out = grid.next_best_view(Vec2::new(0.8, 0.8), 0.2, 3.0, 0.16, 0.0);
        assert_eq!(out, NbvOutcome::Complete);
    }

    #[test]
    fn sealed_robot_has_no_candidates() {
        let mut grid = OccupancyGrid::new([20, 20, 4], MODULE_SIZE, [0.0, 0.0, 0.0]);
        // robot cell free but ringed by occupied: nothing traversable after bloat
        for c in grid.cells.iter_mut() {
            *c = Cell::Unknown;
        }
        let i = grid.idx([10, 10, 0]);
        grid.cells[i] = Cell::Free;
        for (dx, dy) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let c = [(10 + dx) as usize, (10 + dy) as usize, 0];
            let i = grid.idx(c);
            grid.cells[i] = Cell::Occupied(None);
        }
        let out = grid.next_best_view(grid.frame().center([10, 10, 0]).xy(), 0.2, 3.0, 0.16, 0.0);
        assert_eq!(out, NbvOutcome::NoReachableCandidate);
    }
}
