//! Configurations, solutions, feasibility checking, and the line-oriented
//! solution interchange format.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{AgentId, GridMap, Vertex};
use crate::instance::{Instance, InstanceError};

/// Locations of all agents at one timestep.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration(pub Vec<Vertex>);

impl Configuration {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Vertex] {
        &self.0
    }

    /// True when no two agents share a vertex.
    pub fn is_collision_free(&self, cells: usize) -> bool {
        let mut seen = vec![false; cells];
        self.0
            .iter()
            .all(|&v| v < cells && !std::mem::replace(&mut seen[v], true))
    }
}

impl std::ops::Index<AgentId> for Configuration {
    type Output = Vertex;

    fn index(&self, i: AgentId) -> &Vertex {
        &self.0[i]
    }
}

/// One path per agent, all of equal length `T + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub paths: Vec<Vec<Vertex>>,
}

impl Solution {
    pub fn from_configurations(configs: &[Configuration]) -> Self {
        let n = configs.first().map_or(0, Configuration::len);
        let paths = (0..n).map(|i| configs.iter().map(|c| c[i]).collect()).collect();
        Solution { paths }
    }

    pub fn agent_count(&self) -> usize {
        self.paths.len()
    }

    /// `T`, the number of timesteps (0 for an empty or single-config solution).
    pub fn makespan(&self) -> usize {
        self.paths.first().map_or(0, |p| p.len().saturating_sub(1))
    }

    pub fn configuration(&self, t: usize) -> Configuration {
        Configuration(self.paths.iter().map(|p| p[t]).collect())
    }

    pub fn configurations(&self) -> Vec<Configuration> {
        (0..=self.makespan()).map(|t| self.configuration(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    AgentCount {
        expected: usize,
        found: usize,
    },
    LengthMismatch {
        agent: AgentId,
        expected: usize,
        found: usize,
    },
    EmptyPath {
        agent: AgentId,
    },
    BadStart {
        agent: AgentId,
        expected: Vertex,
        found: Vertex,
    },
    BadGoal {
        agent: AgentId,
        expected: Vertex,
        found: Vertex,
    },
    NotPassable {
        agent: AgentId,
        t: usize,
        vertex: Vertex,
    },
    NonAdjacentStep {
        agent: AgentId,
        t: usize,
        from: Vertex,
        to: Vertex,
    },
    VertexCollision {
        t: usize,
        agents: (AgentId, AgentId),
        vertex: Vertex,
    },
    EdgeSwap {
        t: usize,
        agents: (AgentId, AgentId),
    },
}

/// Lists every feasibility violation. An empty report means the solution is valid.
pub fn validate_solution(instance: &Instance, solution: &Solution) -> Vec<Violation> {
    let map = instance.map();
    let n = instance.agent_count();
    let mut report = Vec::new();
    if solution.agent_count() != n {
        report.push(Violation::AgentCount {
            expected: n,
            found: solution.agent_count(),
        });
        return report;
    }
    if n == 0 {
        return report;
    }
    let len = solution.paths[0].len();
    for (agent, path) in solution.paths.iter().enumerate() {
        if path.is_empty() {
            report.push(Violation::EmptyPath { agent });
        } else if path.len() != len {
            report.push(Violation::LengthMismatch {
                agent,
                expected: len,
                found: path.len(),
            });
        }
    }
    if !report.is_empty() || len == 0 {
        return report;
    }
    for agent in 0..n {
        let path = &solution.paths[agent];
        if path[0] != instance.starts()[agent] {
            report.push(Violation::BadStart {
                agent,
                expected: instance.starts()[agent],
                found: path[0],
            });
        }
        if path[len - 1] != instance.goals()[agent] {
            report.push(Violation::BadGoal {
                agent,
                expected: instance.goals()[agent],
                found: path[len - 1],
            });
        }
        for (t, &v) in path.iter().enumerate() {
            if !map.is_passable(v) {
                report.push(Violation::NotPassable { agent, t, vertex: v });
            }
        }
        for t in 1..len {
            let (from, to) = (path[t - 1], path[t]);
            if from != to && !(map.is_passable(from) && map.is_passable(to) && map.are_adjacent(from, to)) {
                report.push(Violation::NonAdjacentStep { agent, t, from, to });
            }
        }
    }
    let mut occupant = vec![usize::MAX; map.cell_count()];
    for t in 0..len {
        for agent in 0..n {
            let v = solution.paths[agent][t];
            if v >= occupant.len() {
                continue;
            }
            if occupant[v] != usize::MAX {
                report.push(Violation::VertexCollision {
                    t,
                    agents: (occupant[v], agent),
                    vertex: v,
                });
            } else {
                occupant[v] = agent;
            }
        }
        if t > 0 {
            // swap: j now stands where i was and i stands where j was
            for i in 0..n {
                let (prev, cur) = (solution.paths[i][t - 1], solution.paths[i][t]);
                if prev == cur || prev >= occupant.len() {
                    continue;
                }
                let j = occupant[prev];
                if j != usize::MAX && j > i && solution.paths[j][t - 1] == cur && solution.paths[j][t] == prev {
                    report.push(Violation::EdgeSwap { t, agents: (i, j) });
                }
            }
        }
        for agent in 0..n {
            let v = solution.paths[agent][t];
            if v < occupant.len() {
                occupant[v] = usize::MAX;
            }
        }
    }
    report
}

/// Checks that `next` is reachable from `current` in one joint step with no
/// vertex collision and no swap.
pub fn is_transition_valid(map: &GridMap, current: &Configuration, next: &Configuration) -> bool {
    if current.len() != next.len() || !next.is_collision_free(map.cell_count()) {
        return false;
    }
    let moves_ok = current
        .0
        .iter()
        .zip(&next.0)
        .all(|(&u, &v)| map.is_passable(v) && (u == v || map.are_adjacent(u, v)));
    if !moves_ok {
        return false;
    }
    let mut at = vec![usize::MAX; map.cell_count()];
    for (i, &u) in current.0.iter().enumerate() {
        at[u] = i;
    }
    current.0.iter().zip(&next.0).enumerate().all(|(i, (&u, &v))| {
        let j = at[v];
        u == v || j == usize::MAX || j == i || next[j] != u
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterchangeError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: ({x},{y}) lies outside the map")]
    OutOfMap { line: usize, x: usize, y: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

fn push_xy_list(out: &mut String, map: &GridMap, vertices: impl Iterator<Item = Vertex>) {
    for (k, v) in vertices.enumerate() {
        let (x, y) = map.coords(v);
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "({x},{y})");
    }
}

/// Writes `starts=`, `goals=`, then one `t:` line per timestep.
pub fn write_interchange(instance: &Instance, solution: &Solution) -> String {
    let map = instance.map();
    let mut out = String::from("starts=");
    push_xy_list(&mut out, map, instance.starts().iter().copied());
    out.push_str("\ngoals=");
    push_xy_list(&mut out, map, instance.goals().iter().copied());
    out.push('\n');
    for t in 0..solution.paths.first().map_or(0, Vec::len) {
        let _ = write!(out, "{t}:");
        push_xy_list(&mut out, map, solution.paths.iter().map(|p| p[t]));
        out.push('\n');
    }
    out
}

fn parse_xy_list(text: &str, line: usize, map: &GridMap) -> Result<Vec<Vertex>, InterchangeError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let bad = |reason: String| InterchangeError::Malformed { line, reason };
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| bad(format!("expected (x,y) list, found {text:?}")))?;
    inner
        .split("),(")
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| bad(format!("bad coordinate pair {pair:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| bad(format!("bad coordinate {s:?}")))
            };
            let (x, y) = (parse(x)?, parse(y)?);
            if x >= map.width() || y >= map.height() {
                return Err(InterchangeError::OutOfMap { line, x, y });
            }
            Ok(y * map.width() + x)
        })
        .collect()
}

/// Parses the interchange format back into the instance and solution it
/// describes. Feasibility is not checked; use [`validate_solution`].
pub fn read_interchange(text: &str, map: &GridMap) -> Result<(Instance, Solution), InterchangeError> {
    let mut starts = None;
    let mut goals = None;
    let mut configs: Vec<Vec<Vertex>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("starts=") {
            starts = Some(parse_xy_list(rest, line, map)?);
        } else if let Some(rest) = content.strip_prefix("goals=") {
            goals = Some(parse_xy_list(rest, line, map)?);
        } else if let Some((t, rest)) = content.split_once(':') {
            let t: usize = t.trim().parse().map_err(|_| InterchangeError::Malformed {
                line,
                reason: format!("bad timestep {t:?}"),
            })?;
            if t != configs.len() {
                return Err(InterchangeError::Malformed {
                    line,
                    reason: format!("expected timestep {}, found {t}", configs.len()),
                });
            }
            configs.push(parse_xy_list(rest, line, map)?);
        } else {
            return Err(InterchangeError::Malformed {
                line,
                reason: format!("unrecognized line {content:?}"),
            });
        }
    }
    let missing = |what: &str| InterchangeError::Malformed {
        line: 0,
        reason: format!("missing `{what}=` line"),
    };
    let starts = starts.ok_or_else(|| missing("starts"))?;
    let goals = goals.ok_or_else(|| missing("goals"))?;
    let n = starts.len();
    let instance = Instance::new(map.clone(), starts, goals)?;
    let paths = (0..n)
        .map(|i| {
            configs
                .iter()
                .map(|c| c.get(i).copied().unwrap_or(usize::MAX))
                .collect()
        })
        .collect();
    // Short rows surface as out-of-range vertices and fail validation.
    let solution = Solution { paths };
    Ok((instance, solution))
}
