//! Rectangular grid map with blocked cells and 4-connected A* pathfinding.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::blackboard::Vec2;

/// Integer cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Cell {
        Cell { x, y }
    }

    pub fn center(self) -> Vec2 {
        Vec2::new(f64::from(self.x), f64::from(self.y))
    }

    pub fn manhattan(self, o: Cell) -> i32 {
        (self.x - o.x).abs() + (self.y - o.y).abs()
    }
}

/// Nearest cell to a continuous position.
pub fn cell_of(pos: Vec2) -> Cell {
    Cell::new(pos.x.round() as i32, pos.y.round() as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
}

impl GridMap {
    /// An all-walkable map.
    pub fn open(width: usize, height: usize) -> GridMap {
        GridMap { width, height, blocked: vec![false; width * height] }
    }

    /// Builds from ASCII rows: `#` blocks a cell, anything else is walkable.
    /// Rows must be nonempty and of equal length.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<GridMap, String> {
        let height = rows.len();
        if height == 0 {
            return Err("map has no rows".into());
        }
        let width = rows[0].as_ref().len();
        if width == 0 {
            return Err("map rows are empty".into());
        }
        let mut blocked = Vec::with_capacity(width * height);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(format!("map row {i} has length {} but row 0 has {width}", row.len()));
            }
            blocked.extend(row.bytes().map(|b| b == b'#'));
        }
        Ok(GridMap { width, height, blocked })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn is_walkable(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[c.y as usize * self.width + c.x as usize]
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.blocked[c.y as usize * self.width + c.x as usize]
    }

    /// Walkable cells in row-major order.
    pub fn walkable_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x as i32, y as i32);
                if self.is_walkable(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Walkable cell nearest to `c` (including `c` itself) by manhattan
    /// distance, scanning rings outward; ties resolve by scan order for
    /// determinism.
    pub fn nearest_walkable(&self, c: Cell) -> Option<Cell> {
        if self.is_walkable(c) {
            return Some(c);
        }
        let max_r = (self.width + self.height) as i32;
        for r in 1..=max_r {
            for dy in -r..=r {
                let rem = r - dy.abs();
                for dx in [-rem, rem] {
                    let cand = Cell::new(c.x + dx, c.y + dy);
                    if self.is_walkable(cand) {
                        return Some(cand);
                    }
                }
            }
        }
        None
    }

    /// 4-connected A* from `from` to `to` over walkable cells. Returns the
    /// full path including both endpoints, or None when unreachable. Ties in
    /// the open set resolve by (f, h, y, x) so equal-cost paths are stable.
    pub fn astar(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        if !self.is_walkable(from) || !self.is_walkable(to) {
            return None;
        }
        if from == to {
            return Some(vec![from]);
        }
        let idx = |c: Cell| c.y as usize * self.width + c.x as usize;
        let mut g = vec![i32::MAX; self.width * self.height];
        let mut came: Vec<u32> = vec![u32::MAX; self.width * self.height];
        let mut open: BinaryHeap<Reverse<(i32, i32, i32, i32)>> = BinaryHeap::new();
        g[idx(from)] = 0;
        open.push(Reverse((from.manhattan(to), from.manhattan(to), from.y, from.x)));
        while let Some(Reverse((f, _h, y, x))) = open.pop() {
            let cur = Cell::new(x, y);
            let cg = g[idx(cur)];
            if f > cg + cur.manhattan(to) {
                continue; // stale entry
            }
            if cur == to {
                let mut path = vec![cur];
                let mut at = cur;
                while at != from {
                    let p = came[idx(at)];
                    at = Cell::new((p % self.width as u32) as i32, (p / self.width as u32) as i32);
                    path.push(at);
                }
                path.reverse();
                return Some(path);
            }
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let next = Cell::new(cur.x + dx, cur.y + dy);
                if !self.is_walkable(next) {
                    continue;
                }
                let ng = cg + 1;
                if ng < g[idx(next)] {
                    g[idx(next)] = ng;
                    came[idx(next)] = idx(cur) as u32;
                    let h = next.manhattan(to);
                    open.push(Reverse((ng + h, h, next.y, next.x)));
                }
            }
        }
        None
    }

    /// True when the straight segment between two positions crosses no
    /// blocked cell (sampled at quarter-cell steps).
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        let dist = a.distance(b);
        let steps = (dist * 4.0).ceil() as usize;
        for i in 0..=steps {
            let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
            let p = Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            if self.is_blocked(cell_of(p)) {
                return false;
            }
        }
        true
    }

    pub(crate) fn fold_hash(&self, h: &mut crate::hash::Fnv64) {
        h.write_u64(self.width as u64);
        h.write_u64(self.height as u64);
        for &b in &self.blocked {
            h.write_u8(u8::from(b));
        }
    }
}
