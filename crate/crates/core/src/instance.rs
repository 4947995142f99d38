//! MAPF instances: start/goal pairs on a shared map, plus scenario I/O and
//! seeded instance generation.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dist::{distance_field, DistField};
use crate::grid::{AgentId, GridMap, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("starts and goals differ in length ({starts} vs {goals})")]
    LengthMismatch { starts: usize, goals: usize },
    #[error("agent {agent}: {which} vertex {vertex} is not a passable cell")]
    NotPassable {
        agent: AgentId,
        which: &'static str,
        vertex: Vertex,
    },
    #[error("agents {first} and {second} share {which} vertex {vertex}")]
    Duplicate {
        first: AgentId,
        second: AgentId,
        which: &'static str,
        vertex: Vertex,
    },
    #[error("need {needed} cells in one component, largest has {available}")]
    ComponentTooSmall { needed: usize, available: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("insufficient entries: requested {requested}, file has {available}")]
    InsufficientEntries { requested: usize, available: usize },
    #[error("entry {entry}: {which} ({x},{y}) is blocked or out of range")]
    BadCell {
        entry: usize,
        which: &'static str,
        x: i64,
        y: i64,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Clone, Debug)]
pub struct Instance {
    map: GridMap,
    starts: Vec<Vertex>,
    goals: Vec<Vertex>,
    fields: Vec<OnceLock<DistField>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map && self.starts == other.starts && self.goals == other.goals
    }
}

impl Instance {
    /// Validates passability and distinctness. Reachability of goals is not
    /// required here; see [`Instance::unreachable_agents`].
    pub fn new(map: GridMap, starts: Vec<Vertex>, goals: Vec<Vertex>) -> Result<Self, InstanceError> {
        if starts.len() != goals.len() {
            return Err(InstanceError::LengthMismatch {
                starts: starts.len(),
                goals: goals.len(),
            });
        }
        for (which, list) in [("start", &starts), ("goal", &goals)] {
            let mut owner = vec![usize::MAX; map.cell_count()];
            for (i, &v) in list.iter().enumerate() {
                if !map.is_passable(v) {
                    return Err(InstanceError::NotPassable {
                        agent: i,
                        which,
                        vertex: v,
                    });
                }
                if owner[v] != usize::MAX {
                    return Err(InstanceError::Duplicate {
                        first: owner[v],
                        second: i,
                        which,
                        vertex: v,
                    });
                }
                owner[v] = i;
            }
        }
        let fields = (0..starts.len()).map(|_| OnceLock::new()).collect();
        Ok(Instance {
            map,
            starts,
            goals,
            fields,
        })
    }

    pub fn from_xy(map: GridMap, starts: &[(usize, usize)], goals: &[(usize, usize)]) -> Result<Self, InstanceError> {
        let w = map.width();
        let to_v = |&(x, y): &(usize, usize)| if x < w { y * w + x } else { usize::MAX };
        let s = starts.iter().map(to_v).collect();
        let g = goals.iter().map(to_v).collect();
        Self::new(map, s, g)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn starts(&self) -> &[Vertex] {
        &self.starts
    }

    pub fn goals(&self) -> &[Vertex] {
        &self.goals
    }

    pub fn agent_count(&self) -> usize {
        self.starts.len()
    }

    /// Cost-to-go field for `agent`'s goal, computed on first use.
    pub fn dist(&self, agent: AgentId) -> &DistField {
        self.fields[agent]
            .get_or_init(|| distance_field(&self.map, self.goals[agent]).expect("goals are validated passable"))
    }

    /// Agents whose goal is not in the same component as their start.
    pub fn unreachable_agents(&self) -> Vec<AgentId> {
        (0..self.agent_count())
            .filter(|&i| !self.dist(i).is_reachable(self.starts[i]))
            .collect()
    }

    pub fn is_well_posed(&self) -> bool {
        self.unreachable_agents().is_empty()
    }

    /// Σ dist(s_i, g_i); only meaningful when well posed.
    pub fn lower_bound(&self) -> u64 {
        (0..self.agent_count())
            .map(|i| self.dist(i).get(self.starts[i]) as u64)
            .sum()
    }

    pub fn with_agents(&self, n: usize) -> Result<Instance, InstanceError> {
        Instance::new(self.map.clone(), self.starts[..n].to_vec(), self.goals[..n].to_vec())
    }

    /// Serializes as a MovingAI scen v1 file referencing `map_name`.
    pub fn to_scenario_string(&self, map_name: &str) -> String {
        let mut out = String::from("version 1\n");
        for i in 0..self.agent_count() {
            let (sx, sy) = self.map.coords(self.starts[i]);
            let (gx, gy) = self.map.coords(self.goals[i]);
            let opt = self.dist(i).get(self.starts[i]);
            out.push_str(&format!(
                "0\t{map_name}\t{}\t{}\t{sx}\t{sy}\t{gx}\t{gy}\t{opt:.8}\n",
                self.map.width(),
                self.map.height(),
                opt = opt as f64
            ));
        }
        out
    }
}

/// Loads the first `n` entries of a MovingAI scen v1 file as agents.
pub fn load_scenario(text: &str, map: &GridMap, n: usize) -> Result<Instance, ScenarioError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["version", "1"] => {}
        Some((_, l)) if l.trim_start().starts_with("version") => {
            return Err(ScenarioError::Malformed {
                line: 1,
                reason: format!("unsupported version line {l:?}"),
            })
        }
        _ => {
            return Err(ScenarioError::Malformed {
                line: 1,
                reason: "missing `version 1` header".into(),
            })
        }
    }
    let mut starts = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    let mut available = 0;
    for (line, content) in lines {
        if content.trim().is_empty() {
            continue;
        }
        let entry = available;
        available += 1;
        if starts.len() == n {
            continue;
        }
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() < 8 {
            return Err(ScenarioError::Malformed {
                line,
                reason: format!("expected 9 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<i64, ScenarioError> {
            fields[idx].trim().parse::<i64>().map_err(|_| ScenarioError::Malformed {
                line,
                reason: format!("field {} is not an integer: {:?}", idx + 1, fields[idx]),
            })
        };
        let (sx, sy, gx, gy) = (num(4)?, num(5)?, num(6)?, num(7)?);
        let cell = |x: i64, y: i64, which| {
            map.vertex_at(x as isize, y as isize)
                .filter(|&v| map.is_passable(v))
                .ok_or(ScenarioError::BadCell { entry, which, x, y })
        };
        starts.push(cell(sx, sy, "start")?);
        goals.push(cell(gx, gy, "goal")?);
    }
    if starts.len() < n {
        return Err(ScenarioError::InsufficientEntries {
            requested: n,
            available,
        });
    }
    Ok(Instance::new(map.clone(), starts, goals)?)
}

/// Samples `n` distinct starts and `n` distinct goals inside the largest
/// connected component. Pure function of `(map, n, seed)`.
pub fn generate_instance(map: &GridMap, n: usize, seed: u64) -> Result<Instance, InstanceError> {
    let component = map.largest_component();
    if component.len() < n {
        return Err(InstanceError::ComponentTooSmall {
            needed: n,
            available: component.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vertex> = component.choose_multiple(&mut rng, n).copied().collect();
    let goals: Vec<Vertex> = component.choose_multiple(&mut rng, n).copied().collect();
    Instance::new(map.clone(), starts, goals)
}
