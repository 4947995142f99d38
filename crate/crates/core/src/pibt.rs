//! One-step configuration generation: cost-to-go preferences, dynamic
//! priorities, and PIBT with priority inheritance and backtracking under
//! LaCAM's low-level constraints.

use std::sync::Arc;

use crate::dist::DistField;
use crate::grid::{AgentId, GridMap, Vertex};
use crate::instance::Instance;
use crate::solution::Configuration;

/// An agent's ordered one-step candidates, drawn from `neigh(Q[i]) ∪ {Q[i]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preference {
    pub agent: AgentId,
    pub candidates: Vec<Vertex>,
}

/// Every one-step target for an agent at `v`: stay plus passable neighbors.
pub fn candidate_set(map: &GridMap, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
    std::iter::once(v).chain(map.neighbors(v).iter().copied())
}

/// 64-bit mixer for deriving independent tie-break streams.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(31);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Candidates sorted ascending by cost-to-go; equal-distance candidates are
/// ordered by a hash of `(tie_seed, vertex)`.
pub fn default_preference(
    map: &GridMap,
    agent: AgentId,
    config: &Configuration,
    dist: &DistField,
    tie_seed: u64,
) -> Preference {
    let mut candidates: Vec<Vertex> = candidate_set(map, config[agent]).collect();
    candidates.sort_by_cached_key(|&v| (dist.get(v), mix_seed(tie_seed, v as u64, 0)));
    Preference { agent, candidates }
}

/// Identifies the search node a preference is requested for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeContext {
    pub node_id: usize,
    pub seed: u64,
}

/// Source of per-agent preferences. Implementations may batch work for a
/// whole configuration in [`PreferenceProvider::prepare`].
pub trait PreferenceProvider {
    fn prepare(&mut self, _instance: &Instance, _config: &Configuration, _ctx: &NodeContext) {}

    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        ctx: &NodeContext,
    ) -> Preference;
}

/// Cost-to-go preferences with seeded tie-breaking per (seed, node, agent).
#[derive(Clone, Copy, Debug, Default)]
pub struct CostToGo;

impl PreferenceProvider for CostToGo {
    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        ctx: &NodeContext,
    ) -> Preference {
        let tie = mix_seed(ctx.seed, ctx.node_id as u64, agent as u64);
        default_preference(instance.map(), agent, config, instance.dist(agent), tie)
    }
}

/// Dynamic PIBT priorities: elapsed steps off-goal plus an id fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorityState {
    pub priority: Vec<f64>,
    pub elapsed: Vec<u32>,
}

impl PriorityState {
    pub fn new(n: usize) -> Self {
        let elapsed = vec![0; n];
        PriorityState {
            priority: priorities_from(&elapsed),
            elapsed,
        }
    }

    /// Agents by descending priority.
    pub fn order(&self) -> Vec<AgentId> {
        let mut order: Vec<AgentId> = (0..self.priority.len()).collect();
        order.sort_by(|&a, &b| self.priority[b].total_cmp(&self.priority[a]));
        order
    }
}

fn priorities_from(elapsed: &[u32]) -> Vec<f64> {
    let n = elapsed.len() as f64;
    elapsed
        .iter()
        .enumerate()
        .map(|(i, &e)| e as f64 + i as f64 / (n + 1.0))
        .collect()
}

pub fn update_priorities(state: &PriorityState, config: &Configuration, goals: &[Vertex]) -> PriorityState {
    let elapsed: Vec<u32> = state
        .elapsed
        .iter()
        .enumerate()
        .map(|(i, &e)| if config[i] == goals[i] { 0 } else { e + 1 })
        .collect();
    PriorityState {
        priority: priorities_from(&elapsed),
        elapsed,
    }
}

/// A partial assignment of agents to next vertices.
///
/// Stored as a persistent linked list so that the children of a constraint
/// share its prefix; extending is O(1).
#[derive(Clone, Debug, Default)]
pub struct Constraint {
    last: Option<Arc<Link>>,
}

#[derive(Debug)]
struct Link {
    agent: AgentId,
    vertex: Vertex,
    depth: usize,
    parent: Option<Arc<Link>>,
}

impl Constraint {
    pub fn init() -> Self {
        Constraint::default()
    }

    pub fn from_assignments(assignments: &[(AgentId, Vertex)]) -> Self {
        assignments
            .iter()
            .fold(Constraint::init(), |c, &(a, v)| c.extended(a, v))
    }

    pub fn depth(&self) -> usize {
        self.last.as_ref().map_or(0, |l| l.depth)
    }

    pub fn extended(&self, agent: AgentId, vertex: Vertex) -> Self {
        Constraint {
            last: Some(Arc::new(Link {
                agent,
                vertex,
                depth: self.depth() + 1,
                parent: self.last.clone(),
            })),
        }
    }

    /// Assignments from the most recent back to the first.
    pub fn iter(&self) -> impl Iterator<Item = (AgentId, Vertex)> + '_ {
        std::iter::successors(self.last.as_deref(), |l| l.parent.as_deref()).map(|l| (l.agent, l.vertex))
    }

    /// Assignments in the order they were added.
    pub fn assignments(&self) -> Vec<(AgentId, Vertex)> {
        let mut out: Vec<_> = self.iter().collect();
        out.reverse();
        out
    }
}

impl PartialEq for Constraint {
    fn eq(&self, other: &Self) -> bool {
        self.depth() == other.depth() && self.iter().eq(other.iter())
    }
}

impl Eq for Constraint {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PibtFailure {
    /// The constraint itself is contradictory or out of reach.
    ConstraintInfeasible,
    /// The recursion exhausted every candidate for some agent.
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttemptOutcome {
    Accepted,
    Reserved,
    Swap,
    ChildFailed,
}

/// One candidate tried by the recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attempt {
    pub agent: AgentId,
    pub vertex: Vertex,
    pub outcome: AttemptOutcome,
}

const NONE: u32 = u32::MAX;

/// Reusable buffers for repeated PIBT calls on one map.
#[derive(Clone, Debug)]
pub struct PibtWorkspace {
    occupied_now: Vec<u32>,
    occupied_next: Vec<u32>,
    next: Vec<u32>,
    trace: Option<Vec<Attempt>>,
}

impl PibtWorkspace {
    pub fn new(map: &GridMap) -> Self {
        PibtWorkspace {
            occupied_now: vec![NONE; map.cell_count()],
            occupied_next: vec![NONE; map.cell_count()],
            next: Vec::new(),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[Attempt] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Runs PIBT. `order` lists agents by descending priority; `prefs[i]` is
    /// agent i's preference.
    pub fn step(
        &mut self,
        map: &GridMap,
        config: &Configuration,
        order: &[AgentId],
        prefs: &[Preference],
        constraint: &Constraint,
    ) -> Result<Configuration, PibtFailure> {
        let n = config.len();
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        self.next.clear();
        self.next.resize(n, NONE);
        for (i, &v) in config.0.iter().enumerate() {
            self.occupied_now[v] = i as u32;
        }
        let result = self.run(map, config, order, prefs, constraint);
        for &v in &config.0 {
            self.occupied_now[v] = NONE;
        }
        for &v in &self.next {
            if v != NONE {
                self.occupied_next[v as usize] = NONE;
            }
        }
        for (_, v) in constraint.iter() {
            if v < self.occupied_next.len() {
                self.occupied_next[v] = NONE;
            }
        }
        result
    }

    fn run(
        &mut self,
        map: &GridMap,
        config: &Configuration,
        order: &[AgentId],
        prefs: &[Preference],
        constraint: &Constraint,
    ) -> Result<Configuration, PibtFailure> {
        for (i, v) in constraint.iter() {
            let here = config[i];
            let reachable = v == here || (map.is_passable(v) && map.are_adjacent(here, v));
            if !reachable || self.next[i] != NONE || self.occupied_next[v] != NONE {
                return Err(PibtFailure::ConstraintInfeasible);
            }
            let j = self.occupied_now[v];
            if j != NONE && j as usize != i && self.next[j as usize] == here as u32 {
                return Err(PibtFailure::ConstraintInfeasible);
            }
            self.next[i] = v as u32;
            self.occupied_next[v] = i as u32;
        }
        for &i in order {
            if self.next[i] == NONE && !self.recurse(i, config, prefs) {
                return Err(PibtFailure::Exhausted);
            }
        }
        Ok(Configuration(self.next.iter().map(|&v| v as usize).collect()))
    }

    fn record(&mut self, agent: AgentId, vertex: Vertex, outcome: AttemptOutcome) {
        if let Some(t) = self.trace.as_mut() {
            t.push(Attempt { agent, vertex, outcome });
        }
    }

    fn recurse(&mut self, i: AgentId, config: &Configuration, prefs: &[Preference]) -> bool {
        let here = config[i];
        for k in 0..prefs[i].candidates.len() {
            let u = prefs[i].candidates[k];
            if self.occupied_next[u] != NONE {
                self.record(i, u, AttemptOutcome::Reserved);
                continue;
            }
            let j = self.occupied_now[u];
            if j != NONE && self.next[j as usize] == here as u32 {
                self.record(i, u, AttemptOutcome::Swap);
                continue;
            }
            self.occupied_next[u] = i as u32;
            self.next[i] = u as u32;
            if j != NONE && j as usize != i && self.next[j as usize] == NONE && !self.recurse(j as usize, config, prefs)
            {
                self.record(i, u, AttemptOutcome::ChildFailed);
                continue;
            }
            self.record(i, u, AttemptOutcome::Accepted);
            return true;
        }
        // nothing worked: stay put and report failure to the requester
        if self.next[i] != NONE && self.occupied_next[self.next[i] as usize] == i as u32 {
            self.occupied_next[self.next[i] as usize] = NONE;
        }
        self.next[i] = here as u32;
        self.occupied_next[here] = i as u32;
        false
    }
}

/// Convenience wrapper allocating a fresh workspace.
pub fn pibt_step(
    map: &GridMap,
    config: &Configuration,
    priorities: &PriorityState,
    prefs: &[Preference],
    constraint: &Constraint,
) -> Result<Configuration, PibtFailure> {
    PibtWorkspace::new(map).step(map, config, &priorities.order(), prefs, constraint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::distance_field;

    fn corridor_prefs(map: &GridMap, config: &Configuration, goals: &[Vertex]) -> Vec<Preference> {
        goals
            .iter()
            .enumerate()
            .map(|(i, &g)| default_preference(map, i, config, &distance_field(map, g).unwrap(), 0))
            .collect()
    }

    #[test]
    fn preference_is_ascending_cost_to_go() {
        let map = GridMap::empty(4, 1);
        let dist = distance_field(&map, 3).unwrap();
        let pref = default_preference(&map, 0, &Configuration(vec![1]), &dist, 7);
        assert_eq!(pref.candidates, vec![2, 1, 0]);
    }

    #[test]
    fn goal_comes_first_at_goal() {
        let map = GridMap::empty(3, 3);
        let dist = distance_field(&map, 4).unwrap();
        for seed in 0..20 {
            let pref = default_preference(&map, 0, &Configuration(vec![4]), &dist, seed);
            assert_eq!(pref.candidates[0], 4);
            assert_eq!(pref.candidates.len(), 5);
        }
    }

    #[test]
    fn single_agent_steps_toward_goal() {
        let map = GridMap::empty(5, 1);
        let q = Configuration(vec![2]);
        let prefs = corridor_prefs(&map, &q, &[4]);
        let out = pibt_step(&map, &q, &PriorityState::new(1), &prefs, &Constraint::init()).unwrap();
        assert_eq!(out, Configuration(vec![3]));
    }

    #[test]
    fn priorities_follow_elapsed_steps() {
        let goals = [0, 1, 2];
        let mut s = PriorityState::new(3);
        let q = Configuration(vec![5, 1, 6]);
        for _ in 0..3 {
            s = update_priorities(&s, &q, &goals);
        }
        assert_eq!(s.elapsed, vec![3, 0, 3]);
        assert_eq!(s.priority[0].floor(), 3.0);
        assert_eq!(s.priority[1], 0.25);
        assert!(s.priority[2] > s.priority[0]);
        assert_eq!(s.order(), vec![2, 0, 1]);

        let at_goal = update_priorities(&s, &Configuration(goals.to_vec()), &goals);
        assert_eq!(at_goal.priority, vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn inconsistent_constraint_is_distinguished() {
        let map = GridMap::empty(4, 1);
        let q = Configuration(vec![1, 2]);
        let prefs = corridor_prefs(&map, &q, &[3, 0]);
        let pr = PriorityState::new(2);
        let same_vertex = Constraint::from_assignments(&[(0, 2), (1, 2)]);
        assert_eq!(
            pibt_step(&map, &q, &pr, &prefs, &same_vertex),
            Err(PibtFailure::ConstraintInfeasible)
        );
        let swap = Constraint::from_assignments(&[(0, 2), (1, 1)]);
        assert_eq!(
            pibt_step(&map, &q, &pr, &prefs, &swap),
            Err(PibtFailure::ConstraintInfeasible)
        );
        let jump = Constraint::from_assignments(&[(0, 3)]);
        assert_eq!(
            pibt_step(&map, &q, &pr, &prefs, &jump),
            Err(PibtFailure::ConstraintInfeasible)
        );
    }

    #[test]
    fn workspace_is_clean_between_calls() {
        let map = GridMap::empty(4, 1);
        let q = Configuration(vec![1, 2]);
        let prefs = corridor_prefs(&map, &q, &[3, 0]);
        let order = [1, 0];
        let mut ws = PibtWorkspace::new(&map);
        let a = ws.step(&map, &q, &order, &prefs, &Constraint::init());
        let _ = ws.step(
            &map,
            &q,
            &order,
            &prefs,
            &Constraint::from_assignments(&[(0, 2), (1, 2)]),
        );
        let b = ws.step(&map, &q, &order, &prefs, &Constraint::init());
        assert_eq!(a, b);
    }
}
