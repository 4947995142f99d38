//! Per-goal BFS cost-to-go fields.

use std::collections::VecDeque;

use thiserror::Error;

use crate::grid::{GridMap, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistError {
    #[error("goal {0} is out of bounds")]
    OutOfBounds(Vertex),
    #[error("goal {0} is blocked")]
    Blocked(Vertex),
}

/// Exact shortest-path lengths to a single goal.
///
/// Unreachable cells (including blocked ones) hold [`DistField::unreachable`],
/// which equals the map's cell count and so sorts after every real distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistField {
    goal: Vertex,
    unreachable: u32,
    dist: Vec<u32>,
}

impl DistField {
    pub fn goal(&self) -> Vertex {
        self.goal
    }

    pub fn get(&self, v: Vertex) -> u32 {
        self.dist[v]
    }

    pub fn unreachable(&self) -> u32 {
        self.unreachable
    }

    pub fn is_reachable(&self, v: Vertex) -> bool {
        self.dist[v] != self.unreachable
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }
}

pub fn distance_field(map: &GridMap, goal: Vertex) -> Result<DistField, DistError> {
    if goal >= map.cell_count() {
        return Err(DistError::OutOfBounds(goal));
    }
    if !map.is_passable(goal) {
        return Err(DistError::Blocked(goal));
    }
    let unreachable = map.cell_count() as u32;
    let mut dist = vec![unreachable; map.cell_count()];
    dist[goal] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(v) = queue.pop_front() {
        let next = dist[v] + 1;
        for &u in map.neighbors(v) {
            if dist[u] == unreachable {
                dist[u] = next;
                queue.push_back(u);
            }
        }
    }
    Ok(DistField {
        goal,
        unreachable,
        dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_manhattan() {
        let map = GridMap::empty(3, 3);
        let field = distance_field(&map, 4).unwrap();
        assert_eq!(field.get(0), 2);
        assert_eq!(field.get(8), 2);
        assert_eq!(field.get(1), 1);
        assert_eq!(field.get(4), 0);
    }

    #[test]
    fn disconnected_cells_are_unreachable() {
        let map = GridMap::from_rows(&[".@.", ".@.", ".@."]).unwrap();
        let field = distance_field(&map, 0).unwrap();
        assert!(field.is_reachable(6));
        assert!(!field.is_reachable(2));
        assert_eq!(field.get(2), 9);
        assert_eq!(field.get(1), field.unreachable());
    }

    #[test]
    fn blocked_or_outside_goal_is_rejected() {
        let map = GridMap::from_rows(&[".@"]).unwrap();
        assert_eq!(distance_field(&map, 1), Err(DistError::Blocked(1)));
        assert_eq!(distance_field(&map, 2), Err(DistError::OutOfBounds(2)));
    }

    #[test]
    fn bellman_condition_holds() {
        let map = GridMap::from_rows(&["....@", ".@@.@", "...@.", "@...."]).unwrap();
        let field = distance_field(&map, 0).unwrap();
        for v in 0..map.cell_count() {
            if !field.is_reachable(v) || v == 0 {
                continue;
            }
            let best = map.neighbors(v).iter().map(|&u| field.get(u)).min().unwrap();
            assert_eq!(field.get(v), best + 1);
        }
    }
}
