//! Agent-centred local observations.
//!
//! Four planes of side `2R + 1`: obstacles (out-of-map counts as obstacle),
//! other agents, goal projection, and normalized cost-to-go
//! `(dist(v, g) - dist(Q[i], g)) / 2R`, which is 1.0 on obstacles and
//! unreachable cells.

use crate::dist::DistField;
use crate::grid::{AgentId, GridMap, Vertex};
use crate::solution::Configuration;

pub const OBSTACLES: usize = 0;
pub const AGENTS: usize = 1;
pub const GOAL: usize = 2;
pub const COST_TO_GO: usize = 3;
pub const CHANNELS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTensor {
    pub radius: usize,
    /// `[channel][row][col]`, row-major.
    pub data: Vec<f32>,
}

impl ObservationTensor {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Plane value at FOV offset `(dx, dy)` from the agent.
    pub fn at(&self, channel: usize, dx: isize, dy: isize) -> f32 {
        let s = self.side();
        let r = self.radius as isize;
        self.data[channel * s * s + (dy + r) as usize * s + (dx + r) as usize]
    }
}

/// Occupancy lookup reused across agents of one configuration.
pub struct Occupancy {
    cell: Vec<u32>,
}

impl Occupancy {
    pub fn new(map: &GridMap, config: &Configuration) -> Self {
        let mut cell = vec![u32::MAX; map.cell_count()];
        for (i, &v) in config.0.iter().enumerate() {
            cell[v] = i as u32;
        }
        Occupancy { cell }
    }

    pub fn get(&self, v: Vertex) -> Option<AgentId> {
        let a = self.cell[v];
        (a != u32::MAX).then_some(a as usize)
    }
}

pub fn build_observation(
    map: &GridMap,
    config: &Configuration,
    agent: AgentId,
    dist: &DistField,
    radius: usize,
) -> ObservationTensor {
    build_observation_with(map, &Occupancy::new(map, config), config, agent, dist, radius)
}

pub fn build_observation_with(
    map: &GridMap,
    occupancy: &Occupancy,
    config: &Configuration,
    agent: AgentId,
    dist: &DistField,
    radius: usize,
) -> ObservationTensor {
    let s = 2 * radius + 1;
    let plane = s * s;
    let mut data = vec![0.0f32; CHANNELS * plane];
    let here = config[agent];
    let (cx, cy) = map.coords(here);
    let (cx, cy) = (cx as isize, cy as isize);
    let r = radius as isize;
    let norm = (2 * radius) as f32;
    let base = dist.get(here) as f32;

    for row in 0..s {
        for col in 0..s {
            let idx = row * s + col;
            let (x, y) = (cx + col as isize - r, cy + row as isize - r);
            let cell = map.vertex_at(x, y).filter(|&v| map.is_passable(v));
            match cell {
                None => {
                    data[OBSTACLES * plane + idx] = 1.0;
                    data[COST_TO_GO * plane + idx] = 1.0;
                }
                Some(v) => {
                    if occupancy.get(v).is_some_and(|j| j != agent) {
                        data[AGENTS * plane + idx] = 1.0;
                    }
                    data[COST_TO_GO * plane + idx] = if dist.is_reachable(v) {
                        (dist.get(v) as f32 - base) / norm
                    } else {
                        1.0
                    };
                }
            }
        }
    }

    let (gx, gy) = map.coords(dist.goal());
    let (dx, dy) = (gx as isize - cx, gy as isize - cy);
    let (col, row) = if dx.abs() <= r && dy.abs() <= r {
        (dx + r, dy + r)
    } else {
        let (bx, by) = boundary_toward(dx, dy, r);
        (bx + r, by + r)
    };
    data[GOAL * plane + row as usize * s + col as usize] = 1.0;

    ObservationTensor { radius, data }
}

/// FOV boundary offset whose direction makes the smallest angle with
/// `(dx, dy)`; the first in row-major order wins ties.
fn boundary_toward(dx: isize, dy: isize, r: isize) -> (isize, isize) {
    let len = ((dx * dx + dy * dy) as f64).sqrt();
    let mut best = (0, 0);
    let mut best_cos = f64::NEG_INFINITY;
    for by in -r..=r {
        for bx in -r..=r {
            if bx.abs() != r && by.abs() != r {
                continue;
            }
            let blen = ((bx * bx + by * by) as f64).sqrt();
            let cos = (bx * dx + by * dy) as f64 / (blen * len);
            if cos > best_cos + 1e-12 {
                best_cos = cos;
                best = (bx, by);
            }
        }
    }
    best
}
