//! LaCAM high-level search over configurations.
//!
//! Nodes live in an arena and are addressed by index; the open list is a
//! stack of indices and the explored table maps configurations to indices.
//! Each pop of a node's constraint tree counts as one expansion: it
//! synthesizes the constraint's children and asks PIBT for one successor.
//!
//! When a guiding preference provider is installed (a learned policy or any
//! other external heuristic), agents outside a node's unguided set follow it
//! and deadlock detection runs after every insertion. Agents inside the set
//! fall back to cost-to-go preferences.
//!
//! Explored-table hits are skipped without rewiring parents; LaCAM* style
//! reconnection would hook in at that point.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::clock::Stopwatch;
use crate::deadlock::deadlock_detection;
use crate::grid::{AgentId, Vertex};
use crate::instance::{Instance, InstanceError};
use crate::lns::{refine_with, RefineOptions};
use crate::pibt::{
    update_priorities, Constraint, CostToGo, NodeContext, PibtWorkspace, Preference, PreferenceProvider, PriorityState,
};
use crate::policy::{PolicyGuide, PolicyWeights};
use crate::solution::{Configuration, Solution};

/// Time between deadline checks, in expansions.
const CLOCK_INTERVAL: u64 = 64;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Seconds; must be positive.
    pub time_limit: f64,
    pub deadlock_depth: usize,
    pub policy: Option<Arc<PolicyWeights>>,
    pub anytime: bool,
    pub seed: u64,
    pub disable_policy: bool,
    pub disable_deadlock_detection: bool,
    /// Children start with a copy of the parent's unguided set; when false
    /// they start empty.
    pub inherit_unguided: bool,
    pub lns_k: usize,
    /// Hard cap on expansions, independent of the clock.
    pub max_expansions: Option<u64>,
    /// Cap on LNS iterations in anytime mode.
    pub max_lns_iterations: Option<u64>,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            time_limit: 10.0,
            deadlock_depth: 2,
            policy: None,
            anytime: false,
            seed: 0,
            disable_policy: false,
            disable_deadlock_detection: false,
            inherit_unguided: true,
            lns_k: 8,
            max_expansions: None,
            max_lns_iterations: None,
            trace: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("invalid instance: {0}")]
    Instance(#[from] InstanceError),
    #[error("time limit must be positive, got {0}")]
    TimeLimit(f64),
}

/// Frontier of a node's low-level constraint tree in breadth-first order.
///
/// The children of one constraint are adjacent in the queue, so they are
/// kept as a single entry and materialized one at a time when popped.
#[derive(Clone, Debug, Default)]
pub struct ConstraintTree {
    queue: VecDeque<Pending>,
    len: usize,
}

#[derive(Clone, Debug)]
enum Pending {
    One(Constraint),
    Siblings {
        parent: Constraint,
        agent: AgentId,
        next: usize,
        end: usize,
    },
}

impl ConstraintTree {
    /// A tree holding only the empty constraint.
    pub fn root() -> Self {
        let mut t = ConstraintTree::default();
        t.push_back(Constraint::init());
        t
    }

    /// Pending constraints, counting every unmaterialized sibling.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        self.queue.clear();
        self.len = 0;
    }

    pub fn push_back(&mut self, c: Constraint) {
        self.queue.push_back(Pending::One(c));
        self.len += 1;
    }

    /// Queues `parent` extended with each of `agent`'s first `count` candidates.
    pub fn push_children(&mut self, parent: &Constraint, agent: AgentId, count: usize) {
        if count == 0 {
            return;
        }
        self.queue.push_back(Pending::Siblings {
            parent: parent.clone(),
            agent,
            next: 0,
            end: count,
        });
        self.len += count;
    }

    /// Removes the front constraint; `vertex_of(agent, k)` resolves the
    /// k-th candidate of a sibling group.
    pub fn pop_front(&mut self, vertex_of: impl FnOnce(AgentId, usize) -> Vertex) -> Option<Constraint> {
        let out = match self.queue.front_mut()? {
            Pending::One(_) => match self.queue.pop_front() {
                Some(Pending::One(c)) => c,
                _ => unreachable!("front was a single constraint"),
            },
            Pending::Siblings {
                parent,
                agent,
                next,
                end,
            } => {
                let c = parent.extended(*agent, vertex_of(*agent, *next));
                *next += 1;
                if *next == *end {
                    self.queue.pop_front();
                }
                c
            }
        };
        self.len -= 1;
        Some(out)
    }
}

pub struct SearchNode {
    pub id: usize,
    pub config: Configuration,
    pub tree: ConstraintTree,
    pub parent: Option<usize>,
    pub unguided: BTreeSet<AgentId>,
    pub priorities: PriorityState,
    /// Agents by descending priority; fixes the constraint-tree agent order.
    pub order: Vec<AgentId>,
    pub depth: usize,
    prefs: Option<Vec<Preference>>,
}

impl SearchNode {
    pub fn new(
        id: usize,
        config: Configuration,
        parent: Option<usize>,
        priorities: PriorityState,
        unguided: BTreeSet<AgentId>,
        depth: usize,
    ) -> Self {
        SearchNode {
            id,
            config,
            tree: ConstraintTree::root(),
            parent,
            unguided,
            order: priorities.order(),
            priorities,
            depth,
            prefs: None,
        }
    }

    pub fn reset_constraints(&mut self) {
        self.tree = ConstraintTree::root();
    }

    pub(crate) fn invalidate_preferences(&mut self) {
        self.prefs = None;
    }

    pub fn preferences(&self) -> Option<&[Preference]> {
        self.prefs.as_deref()
    }
}

/// Search-visible events, recorded when [`SolverOptions::trace`] is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Expand { node: usize, depth: usize },
    Generated { node: usize, parent: usize },
    MarkedUnguided { node: usize, agents: Vec<AgentId> },
    ConstraintsReset { node: usize },
    Reinserted { node: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchStats {
    pub expansions: u64,
    pub generated: u64,
    pub reinsertions: u64,
    pub elapsed: f64,
    pub initial_time: Option<f64>,
    pub initial_soc: Option<u64>,
    pub lns_iterations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Solved(Solution),
    NoSolution,
    /// The deadline passed; carries the path to the explored configuration
    /// closest to the goal by summed cost-to-go.
    Timeout(Solution),
}

impl SolveOutcome {
    pub fn status(&self) -> &'static str {
        match self {
            SolveOutcome::Solved(_) => "SOLVED",
            SolveOutcome::NoSolution => "NO_SOLUTION",
            SolveOutcome::Timeout(_) => "TIMEOUT",
        }
    }

    pub fn solution(&self) -> Option<&Solution> {
        match self {
            SolveOutcome::Solved(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub outcome: SolveOutcome,
    pub stats: SearchStats,
    pub trace: Vec<TraceEvent>,
}

/// Solves with the options' policy, if any and not disabled, as the guide.
pub fn solve(instance: &Instance, options: &SolverOptions) -> Result<SolveReport, SolveError> {
    match (&options.policy, options.disable_policy) {
        (Some(weights), false) => {
            let mut guide = PolicyGuide::new(weights.clone());
            solve_with_provider(instance, options, Some(&mut guide))
        }
        _ => solve_with_provider(instance, options, None),
    }
}

/// Solves with an arbitrary guiding provider in place of a learned policy.
pub fn solve_with_provider(
    instance: &Instance,
    options: &SolverOptions,
    guide: Option<&mut dyn PreferenceProvider>,
) -> Result<SolveReport, SolveError> {
    if options.time_limit.is_nan() || options.time_limit <= 0.0 {
        return Err(SolveError::TimeLimit(options.time_limit));
    }
    // Instance construction already enforces distinct, passable endpoints.
    let mut search = Search::new(instance, options, guide);
    let outcome = search.run();
    let mut stats = search.stats.clone();
    let trace = std::mem::take(&mut search.trace);
    let outcome = match outcome {
        SolveOutcome::Solved(first) if options.anytime => {
            stats.initial_time = Some(search.clock.elapsed_secs());
            stats.initial_soc = Some(crate::metrics::sum_of_costs(instance, &first));
            let remaining = (options.time_limit - search.clock.elapsed_secs()).max(0.0);
            let refine_opts = RefineOptions {
                deadline: Some(remaining),
                seed: options.seed,
                neighborhood_size: options.lns_k,
                max_iterations: options.max_lns_iterations,
            };
            let refined = refine_with(instance, &first, &refine_opts).expect("search output is feasible");
            stats.lns_iterations = refined.iterations;
            SolveOutcome::Solved(refined.solution)
        }
        SolveOutcome::Solved(first) => {
            stats.initial_time = Some(search.clock.elapsed_secs());
            stats.initial_soc = Some(crate::metrics::sum_of_costs(instance, &first));
            SolveOutcome::Solved(first)
        }
        other => other,
    };
    stats.elapsed = search.clock.elapsed_secs();
    Ok(SolveReport { outcome, stats, trace })
}

/// Appends the children of `popped` to the node's tree: one per candidate of
/// the next agent in the node's priority order. Depth-n constraints are leaves.
pub fn update_constraints(node: &mut SearchNode, popped: &Constraint, candidate_count: impl Fn(AgentId) -> usize) {
    let k = popped.depth();
    if k >= node.order.len() {
        return;
    }
    let agent = node.order[k];
    node.tree.push_children(popped, agent, candidate_count(agent));
}

/// Configuration sequence from the root to `id`, as per-agent paths.
///
/// Panics if a parent link points outside the arena.
pub fn backtrack(nodes: &[SearchNode], id: usize) -> Solution {
    let mut configs = Vec::new();
    let mut cursor = Some(id);
    while let Some(i) = cursor {
        let node = nodes.get(i).expect("broken parent chain in search tree");
        configs.push(node.config.clone());
        cursor = node.parent;
        assert!(configs.len() <= nodes.len(), "cycle in search tree parent links");
    }
    configs.reverse();
    Solution::from_configurations(&configs)
}

pub(crate) struct Search<'a, 'g> {
    instance: &'a Instance,
    options: &'a SolverOptions,
    guide: Option<&'g mut dyn PreferenceProvider>,
    pub(crate) nodes: Vec<SearchNode>,
    pub(crate) open: Vec<usize>,
    explored: FxHashMap<Configuration, usize>,
    workspace: PibtWorkspace,
    goal: Configuration,
    clock: Stopwatch,
    stats: SearchStats,
    trace: Vec<TraceEvent>,
    best: (u64, usize),
}

impl<'a, 'g> Search<'a, 'g> {
    fn new(instance: &'a Instance, options: &'a SolverOptions, guide: Option<&'g mut dyn PreferenceProvider>) -> Self {
        Search {
            instance,
            options,
            guide,
            nodes: Vec::new(),
            open: Vec::new(),
            explored: FxHashMap::default(),
            workspace: PibtWorkspace::new(instance.map()),
            goal: Configuration(instance.goals().to_vec()),
            clock: Stopwatch::start(),
            stats: SearchStats::default(),
            trace: Vec::new(),
            best: (u64::MAX, 0),
        }
    }

    fn heuristic(&self, config: &Configuration) -> u64 {
        (0..config.len())
            .map(|i| self.instance.dist(i).get(config[i]) as u64)
            .sum()
    }

    fn deadlock_active(&self) -> bool {
        self.guide.is_some() && !self.options.disable_deadlock_detection && self.options.deadlock_depth > 0
    }

    fn insert(&mut self, node: SearchNode) -> usize {
        let id = node.id;
        let h = self.heuristic(&node.config);
        if h < self.best.0 {
            self.best = (h, id);
        }
        self.explored.insert(node.config.clone(), id);
        self.nodes.push(node);
        self.open.push(id);
        id
    }

    fn run(&mut self) -> SolveOutcome {
        let n = self.instance.agent_count();
        if !self.instance.is_well_posed() {
            return SolveOutcome::NoSolution;
        }
        let root = SearchNode::new(
            0,
            Configuration(self.instance.starts().to_vec()),
            None,
            PriorityState::new(n),
            BTreeSet::new(),
            0,
        );
        self.insert(root);

        while let Some(&top) = self.open.last() {
            if self.nodes[top].config == self.goal {
                return SolveOutcome::Solved(backtrack(&self.nodes, top));
            }
            if self.nodes[top].tree.is_empty() {
                self.open.pop();
                continue;
            }
            if self.out_of_budget() {
                return SolveOutcome::Timeout(backtrack(&self.nodes, self.best.1));
            }
            self.stats.expansions += 1;
            self.ensure_preferences(top);
            let constraint = {
                let node = &mut self.nodes[top];
                let prefs = node.prefs.take().expect("preferences prepared");
                let c = node
                    .tree
                    .pop_front(|a, k| prefs[a].candidates[k])
                    .expect("tree checked non-empty");
                update_constraints(node, &c, |a| prefs[a].candidates.len());
                node.prefs = Some(prefs);
                c
            };
            if self.options.trace {
                self.trace.push(TraceEvent::Expand {
                    node: top,
                    depth: constraint.depth(),
                });
            }
            let Some(q_new) = self.configuration_generator(top, &constraint) else {
                continue;
            };
            if self.explored.contains_key(&q_new) {
                continue;
            }
            let parent = &self.nodes[top];
            let unguided = if self.options.inherit_unguided {
                parent.unguided.clone()
            } else {
                BTreeSet::new()
            };
            let child = SearchNode::new(
                self.nodes.len(),
                q_new.clone(),
                Some(top),
                update_priorities(&parent.priorities, &q_new, self.instance.goals()),
                unguided,
                parent.depth + 1,
            );
            let child_id = self.insert(child);
            self.stats.generated += 1;
            // The child now sits above its parent on the stack; the parent's
            // preferences are rebuilt if the search comes back to it.
            self.nodes[top].invalidate_preferences();
            if self.options.trace {
                self.trace.push(TraceEvent::Generated {
                    node: child_id,
                    parent: top,
                });
            }
            if self.deadlock_active() {
                let marked = deadlock_detection(
                    &mut self.nodes,
                    top,
                    &q_new,
                    self.instance,
                    &mut self.open,
                    self.options.deadlock_depth,
                );
                self.stats.reinsertions += marked.len() as u64;
                if self.options.trace {
                    for (node, agents) in marked {
                        self.trace.push(TraceEvent::MarkedUnguided { node, agents });
                        self.trace.push(TraceEvent::ConstraintsReset { node });
                        self.trace.push(TraceEvent::Reinserted { node });
                    }
                }
            }
        }
        SolveOutcome::NoSolution
    }

    fn out_of_budget(&self) -> bool {
        let e = self.stats.expansions;
        if self.options.max_expansions.is_some_and(|cap| e >= cap) {
            return true;
        }
        e.is_multiple_of(CLOCK_INTERVAL) && e > 0 && self.clock.elapsed_secs() >= self.options.time_limit
    }

    fn ensure_preferences(&mut self, id: usize) {
        if self.nodes[id].prefs.is_some() {
            return;
        }
        let node = &self.nodes[id];
        let ctx = NodeContext {
            node_id: id,
            seed: self.options.seed,
        };
        let n = node.config.len();
        let guided = self.guide.is_some() && node.unguided.len() < n;
        if guided {
            self.guide
                .as_deref_mut()
                .expect("guide present")
                .prepare(self.instance, &node.config, &ctx);
        }
        let prefs = (0..n)
            .map(|i| match self.guide.as_deref_mut() {
                Some(g) if !node.unguided.contains(&i) => g.preference(self.instance, i, &node.config, &ctx),
                _ => CostToGo.preference(self.instance, i, &node.config, &ctx),
            })
            .collect();
        self.nodes[id].prefs = Some(prefs);
    }

    /// Runs PIBT at node `id` under `constraint`; `None` on failure.
    fn configuration_generator(&mut self, id: usize, constraint: &Constraint) -> Option<Configuration> {
        self.ensure_preferences(id);
        let node = &self.nodes[id];
        let prefs = node.prefs.as_deref().expect("preferences prepared");
        let out = self
            .workspace
            .step(self.instance.map(), &node.config, &node.order, prefs, constraint)
            .ok()?;
        debug_assert!(crate::solution::is_transition_valid(
            self.instance.map(),
            &node.config,
            &out
        ));
        Some(out)
    }
}
