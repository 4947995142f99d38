//! Proximity communication graph with relative-position edge features.

use serde::{Deserialize, Serialize};

use crate::grid::{AgentId, GridMap};
use crate::solution::Configuration;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proximity {
    #[default]
    Chebyshev,
    Manhattan,
}

impl Proximity {
    pub fn distance(self, dx: i64, dy: i64) -> i64 {
        match self {
            Proximity::Chebyshev => dx.abs().max(dy.abs()),
            Proximity::Manhattan => dx.abs() + dy.abs(),
        }
    }
}

/// Directed edge `source → target` carrying
/// `(x_source − x_target, y_source − y_target, manhattan)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub source: AgentId,
    pub target: AgentId,
    pub feature: [f32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommGraph {
    pub agents: usize,
    pub edges: Vec<Edge>,
    /// Per target agent, indices into `edges` ordered by the feature's
    /// `(dy, dx)`. Positions are distinct, so this order depends only on
    /// geometry, never on agent labels.
    pub incoming: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn in_degree(&self, agent: AgentId) -> usize {
        self.incoming[agent].len()
    }
}

pub fn build_comm_graph(map: &GridMap, config: &Configuration, radius: usize, metric: Proximity) -> CommGraph {
    let n = config.len();
    let pos: Vec<(i64, i64)> = config
        .0
        .iter()
        .map(|&v| {
            let (x, y) = map.coords(v);
            (x as i64, y as i64)
        })
        .collect();
    let mut edges = Vec::new();
    let mut incoming = vec![Vec::new(); n];
    for target in 0..n {
        let mut local: Vec<Edge> = (0..n)
            .filter(|&s| s != target)
            .filter_map(|source| {
                let dx = pos[source].0 - pos[target].0;
                let dy = pos[source].1 - pos[target].1;
                (metric.distance(dx, dy) <= radius as i64).then_some(Edge {
                    source,
                    target,
                    feature: [dx as f32, dy as f32, (dx.abs() + dy.abs()) as f32],
                })
            })
            .collect();
        local.sort_by_key(|e| (e.feature[1] as i64, e.feature[0] as i64));
        for e in local {
            incoming[target].push(edges.len());
            edges.push(e);
        }
    }
    CommGraph {
        agents: n,
        edges,
        incoming,
    }
}
