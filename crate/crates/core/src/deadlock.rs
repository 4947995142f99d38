//! Deadlock detection over recent ancestors.
//!
//! After a new configuration is inserted below node N, the ancestors of N
//! (up to `d` of them) are compared against it agent by agent. An off-goal
//! agent whose location and occupied vicinity both match an ancestor is
//! added to that ancestor's unguided set. Any ancestor whose set grew has its
//! constraint tree reset and is pushed back on the open stack.

use crate::grid::{AgentId, GridMap, Vertex};
use crate::instance::Instance;
use crate::lacam::SearchNode;
use crate::solution::Configuration;

/// `(neighbor, occupant)` for each neighbor of an agent's cell, in the map's
/// fixed neighbor order. Empty neighbors carry `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Surrounding(pub Vec<(Vertex, Option<AgentId>)>);

pub fn surrounding(map: &GridMap, config: &Configuration, agent: AgentId) -> Surrounding {
    let occupant = |v: Vertex| config.0.iter().position(|&u| u == v);
    surrounding_with(map, config[agent], occupant)
}

fn surrounding_with(map: &GridMap, at: Vertex, occupant: impl Fn(Vertex) -> Option<AgentId>) -> Surrounding {
    Surrounding(map.neighbors(at).iter().map(|&v| (v, occupant(v))).collect())
}

/// Returns each ancestor whose unguided set changed with the agents added.
/// `d = 0` examines nothing.
pub fn deadlock_detection(
    nodes: &mut [SearchNode],
    node: usize,
    q_new: &Configuration,
    instance: &Instance,
    open: &mut Vec<usize>,
    d: usize,
) -> Vec<(usize, Vec<AgentId>)> {
    let map = instance.map();
    let goals = instance.goals();
    let mut occupant_new = vec![usize::MAX; map.cell_count()];
    for (i, &v) in q_new.0.iter().enumerate() {
        occupant_new[v] = i;
    }
    let lookup_new = |v: Vertex| Some(occupant_new[v]).filter(|&a| a != usize::MAX);

    let mut changed = Vec::new();
    let mut ancestor = nodes[node].parent;
    for _ in 0..d {
        let Some(ans) = ancestor else { break };
        let q_ans = &nodes[ans].config;
        let mut added = Vec::new();
        for i in 0..q_new.len() {
            if q_new[i] == goals[i] || q_new[i] != q_ans[i] || nodes[ans].unguided.contains(&i) {
                continue;
            }
            let now = surrounding_with(map, q_new[i], lookup_new);
            if now == surrounding(map, q_ans, i) {
                added.push(i);
            }
        }
        if !added.is_empty() {
            let target = &mut nodes[ans];
            target.unguided.extend(added.iter().copied());
            target.invalidate_preferences();
            target.reset_constraints();
            open.push(ans);
            changed.push((ans, added));
        }
        ancestor = nodes[ans].parent;
    }
    changed
}
