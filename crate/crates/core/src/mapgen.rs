//! Seeded map generators for the random, maze, and warehouse map classes.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::GridMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Random,
    Maze,
    Warehouse,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Random => "random",
            MapKind::Maze => "maze",
            MapKind::Warehouse => "warehouse",
        }
    }
}

impl FromStr for MapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(MapKind::Random),
            "maze" => Ok(MapKind::Maze),
            "warehouse" => Ok(MapKind::Warehouse),
            other => Err(format!("unknown map kind {other:?} (expected random|maze|warehouse)")),
        }
    }
}

pub const DEFAULT_OBSTACLE_PROBABILITY: f64 = 0.2;
const MAZE_PUNCH_FRACTION: f64 = 0.1;

pub fn generate_map(kind: MapKind, width: usize, height: usize, seed: u64) -> GridMap {
    match kind {
        MapKind::Random => random_map(width, height, DEFAULT_OBSTACLE_PROBABILITY, seed),
        MapKind::Maze => maze_map(width, height, seed),
        MapKind::Warehouse => warehouse_map(width, height, seed),
    }
}

/// I.i.d. obstacles with probability `p`, then everything outside the largest
/// component is blocked.
pub fn random_map(width: usize, height: usize, p: f64, seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let passable = (0..width * height).map(|_| !rng.gen_bool(p)).collect();
    GridMap::new(width, height, passable).keep_largest_component()
}

/// Recursive division with unit-width corridors; afterwards a fraction of
/// the wall cells separating two open cells is removed to create loops.
pub fn maze_map(width: usize, height: usize, seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open = vec![true; width * height];
    divide(&mut open, width, (0, 0, width, height), &mut rng);

    let mut walls: Vec<usize> = (0..width * height)
        .filter(|&v| {
            if open[v] {
                return false;
            }
            let (x, y) = (v % width, v / width);
            let free = |dx: isize, dy: isize| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx >= 0
                    && ny >= 0
                    && (nx as usize) < width
                    && (ny as usize) < height
                    && open[ny as usize * width + nx as usize]
            };
            (free(-1, 0) && free(1, 0)) || (free(0, -1) && free(0, 1))
        })
        .collect();
    walls.shuffle(&mut rng);
    let punch = (walls.len() as f64 * MAZE_PUNCH_FRACTION).round() as usize;
    for &v in &walls[..punch] {
        open[v] = true;
    }
    GridMap::new(width, height, open).keep_largest_component()
}

// Chamber is (x, y, w, h). Walls go on odd offsets and gaps on even offsets,
// which keeps every corridor one cell wide and every chamber connected.
fn divide(open: &mut [bool], width: usize, chamber: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) {
    let (x0, y0, w, h) = chamber;
    if w < 3 && h < 3 {
        return;
    }
    let horizontal = if w < 3 {
        true
    } else if h < 3 {
        false
    } else if w == h {
        rng.gen_bool(0.5)
    } else {
        h > w
    };
    if horizontal {
        let wall = y0 + 1 + 2 * rng.gen_range(0..(h - 1) / 2);
        let gap = x0 + 2 * rng.gen_range(0..w.div_ceil(2));
        for x in x0..x0 + w {
            if x != gap {
                open[wall * width + x] = false;
            }
        }
        divide(open, width, (x0, y0, w, wall - y0), rng);
        divide(open, width, (x0, wall + 1, w, y0 + h - wall - 1), rng);
    } else {
        let wall = x0 + 1 + 2 * rng.gen_range(0..(w - 1) / 2);
        let gap = y0 + 2 * rng.gen_range(0..h.div_ceil(2));
        for y in y0..y0 + h {
            if y != gap {
                open[y * width + wall] = false;
            }
        }
        divide(open, width, (x0, y0, wall - x0, h), rng);
        divide(open, width, (wall + 1, y0, x0 + w - wall - 1, h), rng);
    }
}

/// Rows of shelf blocks separated by unit aisles, with a free border ring.
/// Shelf lengths vary per row with the seed.
pub fn warehouse_map(width: usize, height: usize, seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open = vec![true; width * height];
    let mut y = 2;
    while y + 2 < height {
        let shelf = rng.gen_range(2..=4);
        let mut x = 2;
        while x + 2 < width {
            let end = (x + shelf).min(width - 2);
            for cx in x..end {
                open[y * width + cx] = false;
            }
            x = end + 1;
        }
        y += 2;
    }
    GridMap::new(width, height, open).keep_largest_component()
}
