//! Axis-aligned voxel grid frame and ray traversal (Amanatides & Woo).

use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFrame {
    pub dims: [usize; 3],
    pub res: f64,
    pub origin: Vec3,
}

impl GridFrame {
    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn idx(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn size_m(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f64 * self.res,
            self.dims[1] as f64 * self.res,
            self.dims[2] as f64 * self.res,
        )
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        let s = self.size_m();
        p.x >= self.origin.x
            && p.y >= self.origin.y
            && p.z >= self.origin.z
            && p.x < self.origin.x + s.x
            && p.y < self.origin.y + s.y
            && p.z < self.origin.z + s.z
    }

    pub fn cell_of(&self, p: Vec3) -> Option<[usize; 3]> {
        if !self.contains_point(p) {
            return None;
        }
        let c = [
            ((p.x - self.origin.x) / self.res) as usize,
            ((p.y - self.origin.y) / self.res) as usize,
            ((p.z - self.origin.z) / self.res) as usize,
        ];
        Some([
            c[0].min(self.dims[0] - 1),
            c[1].min(self.dims[1] - 1),
            c[2].min(self.dims[2] - 1),
        ])
    }

    pub fn center(&self, c: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.res,
            self.origin.y + (c[1] as f64 + 0.5) * self.res,
            self.origin.z + (c[2] as f64 + 0.5) * self.res,
        )
    }
}

/// Walk the cells pierced by a ray, in order, starting at `origin` and
/// stopping after `max_range` meters or when `visit` returns false.
/// `visit` receives the cell and the ray parameter at which it was entered.
pub fn traverse(
    frame: &GridFrame,
    origin: Vec3,
    dir: Vec3,
    max_range: f64,
    mut visit: impl FnMut([usize; 3], f64) -> bool,
) {
    let n = dir.norm();
    if n <= f64::EPSILON {
        return;
    }
    let dir = dir.scale(1.0 / n);

    // Clip the ray to the grid box to find the entry parameter.
    let size = frame.size_m();
    let lo = [frame.origin.x, frame.origin.y, frame.origin.z];
    let hi = [lo[0] + size.x, lo[1] + size.y, lo[2] + size.z];
    let o = [origin.x, origin.y, origin.z];
    let d = [dir.x, dir.y, dir.z];
    let mut t_enter: f64 = 0.0;
    let mut t_exit = max_range;
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if o[a] < lo[a] || o[a] >= hi[a] {
                return;
            }
        } else {
            let mut t0 = (lo[a] - o[a]) / d[a];
            let mut t1 = (hi[a] - o[a]) / d[a];
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
        }
    }
    if t_enter > t_exit {
        return;
    }

    let start = Vec3::new(
        o[0] + d[0] * (t_enter + 1e-9),
        o[1] + d[1] * (t_enter + 1e-9),
        o[2] + d[2] * (t_enter + 1e-9),
    );
    let Some(mut cell) = frame.cell_of(start) else {
        return;
    };

    let step: [isize; 3] = [
        if d[0] > 0.0 { 1 } else { -1 },
        if d[1] > 0.0 { 1 } else { -1 },
        if d[2] > 0.0 { 1 } else { -1 },
    ];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if d[a].abs() >= 1e-12 {
            let cell_lo = lo[a] + cell[a] as f64 * frame.res;
            let boundary = if d[a] > 0.0 { cell_lo + frame.res } else { cell_lo };
            t_max[a] = (boundary - o[a]) / d[a];
            t_delta[a] = frame.res / d[a].abs();
        }
    }

    let mut t = t_enter;
    loop {
        if t > max_range {
            return;
        }
        if !visit(cell, t) {
            return;
        }
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        t = t_max[a];
        let next = cell[a] as isize + step[a];
        if next < 0 || next as usize >= frame.dims[a] {
            return;
        }
        cell[a] = next as usize;
        t_max[a] += t_delta[a];
    }
}
