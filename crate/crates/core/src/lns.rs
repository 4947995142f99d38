//! Anytime large-neighborhood refinement.
//!
//! Each iteration picks a subset of agents, removes their paths, and
//! re-plans them one at a time (random order) with space-time A* against all
//! remaining paths as moving obstacles. Agents park at their goal after their
//! last move, so a re-planned agent may only finish at its goal once nobody
//! else will pass through it later. The candidate replaces the incumbent only
//! when its sum-of-costs is strictly lower.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use crate::clock::Stopwatch;
use crate::grid::{AgentId, Vertex};
use crate::instance::Instance;
use crate::metrics::{agent_cost, compute_metrics, InfeasibleSolution};
use crate::solution::Solution;

/// Consecutive non-improving iterations after which an unbounded run stops.
pub const DEFAULT_STALL_LIMIT: u64 = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionKind {
    Random,
    FailureBased,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub agents: Vec<AgentId>,
    pub kind: SelectionKind,
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    /// Seconds; `None` means no deadline.
    pub deadline: Option<f64>,
    pub seed: u64,
    pub neighborhood_size: usize,
    pub max_iterations: Option<u64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            deadline: None,
            seed: 0,
            neighborhood_size: 8,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub solution: Solution,
    pub iterations: u64,
    /// SoC of the input followed by the SoC after each accepted iteration.
    pub soc_trace: Vec<u64>,
}

/// Refines until `deadline` seconds have passed (infinite allowed: the run
/// then ends at the lower bound or after [`DEFAULT_STALL_LIMIT`] stalls).
pub fn refine(
    instance: &Instance,
    solution: &Solution,
    deadline: f64,
    seed: u64,
) -> Result<Solution, InfeasibleSolution> {
    let opts = RefineOptions {
        deadline: deadline.is_finite().then_some(deadline),
        seed,
        ..RefineOptions::default()
    };
    Ok(refine_with(instance, solution, &opts)?.solution)
}

pub fn refine_with(
    instance: &Instance,
    solution: &Solution,
    opts: &RefineOptions,
) -> Result<RefineResult, InfeasibleSolution> {
    let metrics = compute_metrics(instance, solution)?;
    let clock = Stopwatch::start();
    let n = instance.agent_count();
    let mut best = solution.clone();
    let mut best_soc = metrics.soc;
    let lower_bound = metrics.lower_bound;
    let mut trace = vec![best_soc];
    let mut iterations = 0;
    let mut stall = 0;
    if n == 0 || opts.deadline.is_some_and(|d| d <= 0.0) {
        return Ok(RefineResult {
            solution: best,
            iterations,
            soc_trace: trace,
        });
    }
    let k = opts.neighborhood_size.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x4C4E_5300);
    let mut planner = SpaceTimePlanner::default();
    loop {
        if best_soc == lower_bound {
            break;
        }
        if opts.max_iterations.is_some_and(|m| iterations >= m) {
            break;
        }
        match opts.deadline {
            Some(d) if clock.elapsed_secs() >= d => break,
            None if opts.max_iterations.is_none() && stall >= DEFAULT_STALL_LIMIT => break,
            _ => {}
        }
        let kind = if iterations % 2 == 0 {
            SelectionKind::Random
        } else {
            SelectionKind::FailureBased
        };
        iterations += 1;
        let hood = select_neighborhood(instance, &best, k, kind, &mut rng);
        match repair(instance, &best, &hood, &mut planner, &mut rng) {
            Some(candidate) => {
                let soc = crate::metrics::sum_of_costs(instance, &candidate);
                if soc < best_soc {
                    debug_assert!(crate::solution::validate_solution(instance, &candidate).is_empty());
                    best = candidate;
                    best_soc = soc;
                    trace.push(soc);
                    stall = 0;
                } else {
                    stall += 1;
                }
            }
            None => stall += 1,
        }
    }
    Ok(RefineResult {
        solution: best,
        iterations,
        soc_trace: trace,
    })
}

pub fn select_neighborhood(
    instance: &Instance,
    solution: &Solution,
    k: usize,
    kind: SelectionKind,
    rng: &mut impl Rng,
) -> Neighborhood {
    let n = instance.agent_count();
    let mut agents: Vec<AgentId> = (0..n).collect();
    agents.shuffle(rng);
    if kind == SelectionKind::FailureBased {
        let gap = |i: AgentId| {
            agent_cost(&solution.paths[i], instance.goals()[i]) - instance.dist(i).get(instance.starts()[i]) as u64
        };
        // stable sort keeps the shuffle as the tie-break
        agents.sort_by_key(|&i| Reverse(gap(i)));
    }
    agents.truncate(k);
    Neighborhood { agents, kind }
}

/// Re-plans the neighborhood agents; `None` if some agent has no path.
fn repair(
    instance: &Instance,
    incumbent: &Solution,
    hood: &Neighborhood,
    planner: &mut SpaceTimePlanner,
    rng: &mut impl Rng,
) -> Option<Solution> {
    let n = instance.agent_count();
    let goals = instance.goals();
    let mut in_hood = vec![false; n];
    for &a in &hood.agents {
        in_hood[a] = true;
    }
    let mut paths: Vec<Option<Vec<Vertex>>> = (0..n)
        .map(|i| {
            (!in_hood[i]).then(|| {
                let p = &incumbent.paths[i];
                p[..=agent_cost(p, goals[i]) as usize].to_vec()
            })
        })
        .collect();
    let pair = match hood.agents[..] {
        [a, b] => {
            let fixed: Vec<&[Vertex]> = paths.iter().flatten().map(Vec::as_slice).collect();
            plan_pair(instance, [a, b], &fixed).map(|[pa, pb]| (a, b, pa, pb))
        }
        _ => None,
    };
    if let Some((a, b, pa, pb)) = pair {
        paths[a] = Some(pa);
        paths[b] = Some(pb);
    } else {
        let mut order = hood.agents.clone();
        order.shuffle(rng);
        for &a in &order {
            let fixed: Vec<&[Vertex]> = paths.iter().flatten().map(Vec::as_slice).collect();
            let path = planner.plan(instance, a, &fixed, rng.gen())?;
            paths[a] = Some(path);
        }
    }
    let paths: Vec<Vec<Vertex>> = paths.into_iter().map(|p| p.expect("every agent planned")).collect();
    let horizon = paths.iter().map(Vec::len).max().unwrap_or(1);
    let paths = paths
        .into_iter()
        .map(|mut p| {
            let last = *p.last().expect("paths are non-empty");
            p.resize(horizon, last);
            p
        })
        .collect();
    Some(Solution { paths })
}

/// Search states one planning call may generate before giving up; keeps
/// memory bounded when incumbent paths are very long.
pub const PLAN_STATE_LIMIT: usize = 1_000_000;

/// Who occupies which vertex when, for the fixed paths of one repair step.
/// Moving segments are indexed sparsely; parked agents by vertex.
struct Occupancy {
    moving: FxHashMap<(Vertex, usize), u32>,
    parked: FxHashMap<Vertex, (u32, usize)>,
}

impl Occupancy {
    fn new(fixed: &[&[Vertex]]) -> Self {
        let total = fixed.iter().map(|p| p.len()).sum();
        let mut moving = FxHashMap::with_capacity_and_hasher(total, Default::default());
        let mut parked = FxHashMap::default();
        for (j, p) in fixed.iter().enumerate() {
            let last = p.len() - 1;
            for (t, &v) in p[..last].iter().enumerate() {
                moving.insert((v, t), j as u32);
            }
            parked.insert(p[last], (j as u32, last));
        }
        Occupancy { moving, parked }
    }

    fn at(&self, t: usize, v: Vertex) -> Option<u32> {
        if let Some(&j) = self.moving.get(&(v, t)) {
            return Some(j);
        }
        match self.parked.get(&v) {
            Some(&(j, from)) if t >= from => Some(j),
            _ => None,
        }
    }
}

#[derive(Default)]
struct SpaceTimePlanner {
    last_visit: Vec<Option<usize>>,
}

impl SpaceTimePlanner {
    /// Shortest path for `agent` avoiding `fixed` paths (each parked at its
    /// last vertex forever). Equal-cost paths are broken by `noise_seed`.
    /// `None` if no path exists or the state limit is hit.
    fn plan(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        fixed: &[&[Vertex]],
        noise_seed: u64,
    ) -> Option<Vec<Vertex>> {
        let map = instance.map();
        let cells = map.cell_count();
        let start = instance.starts()[agent];
        let goal = instance.goals()[agent];
        let dist = instance.dist(agent);
        if !dist.is_reachable(start) {
            return None;
        }
        let static_from = fixed.iter().map(|p| p.len() - 1).max().unwrap_or(0);
        let occ = Occupancy::new(fixed);
        if occ.parked.contains_key(&goal) {
            // someone parks on our goal forever
            return None;
        }
        self.last_visit.clear();
        self.last_visit.resize(cells, None);
        for p in fixed {
            for (t, &v) in p.iter().enumerate() {
                self.last_visit[v] = Some(self.last_visit[v].map_or(t, |o| o.max(t)));
            }
        }
        let goal_free_after = self.last_visit[goal];
        let horizon = static_from + cells + 1;

        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        // Past `static_from` the obstacles no longer move, so all later
        // timesteps collapse into one layer.
        let key = |v: Vertex, t: usize| (v, t.min(static_from + 1));
        let mut best: FxHashMap<(Vertex, usize), (usize, (Vertex, usize))> = FxHashMap::default();
        let mut heap = BinaryHeap::new();
        best.insert(key(start, 0), (0, (usize::MAX, 0)));
        heap.push((Reverse(dist.get(start) as usize), 0usize, rng.gen::<u32>(), start));
        while let Some((_, t, _, v)) = heap.pop() {
            if best[&key(v, t)].0 != t {
                continue;
            }
            if v == goal && goal_free_after.is_none_or(|last| last < t) {
                let mut path = Vec::with_capacity(t + 1);
                let mut cur = key(v, t);
                loop {
                    path.push(cur.0);
                    let (_, parent) = best[&cur];
                    if parent.0 == usize::MAX {
                        break;
                    }
                    cur = parent;
                }
                path.reverse();
                debug_assert_eq!(path.len(), t + 1);
                return Some(path);
            }
            if t >= horizon || best.len() >= PLAN_STATE_LIMIT {
                continue;
            }
            let nt = t + 1;
            for u in std::iter::once(v).chain(map.neighbors(v).iter().copied()) {
                if occ.at(nt, u).is_some() {
                    continue;
                }
                if u != v {
                    if let Some(other) = occ.at(t, u) {
                        if occ.at(nt, v) == Some(other) {
                            continue;
                        }
                    }
                }
                let k = key(u, nt);
                if best.get(&k).is_some_and(|&(g, _)| g <= nt) {
                    continue;
                }
                best.insert(k, (nt, key(v, t)));
                let f = nt + dist.get(u) as usize;
                heap.push((Reverse(f), nt, rng.gen::<u32>(), u));
            }
        }
        None
    }
}

type PairKey = (Vertex, Vertex, u8, usize);

/// Exact minimum stop-time cost paths for two agents moving jointly among
/// `fixed` paths. Each agent may declare itself finished while on its goal
/// (provided no fixed path visits the goal later); finished agents never
/// move again and every step costs one per unfinished agent. `None` if no
/// joint plan exists or the state limit is hit.
fn plan_pair(instance: &Instance, agents: [AgentId; 2], fixed: &[&[Vertex]]) -> Option<[Vec<Vertex>; 2]> {
    let map = instance.map();
    let occ = Occupancy::new(fixed);
    let goals = agents.map(|a| instance.goals()[a]);
    if goals.iter().any(|g| occ.parked.contains_key(g)) {
        return None;
    }
    let dists = agents.map(|a| instance.dist(a));
    let starts = agents.map(|a| instance.starts()[a]);
    if (0..2).any(|k| !dists[k].is_reachable(starts[k])) {
        return None;
    }
    let mut goal_last = [None; 2];
    for p in fixed {
        for (t, &v) in p.iter().enumerate() {
            for k in 0..2 {
                if v == goals[k] {
                    goal_last[k] = Some(goal_last[k].map_or(t, |o: usize| o.max(t)));
                }
            }
        }
    }
    let static_from = fixed.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    let layer = |t: usize| t.min(static_from + 1);
    let h = |v: [Vertex; 2], done: u8| -> usize {
        (0..2)
            .filter(|&k| done & (1 << k) == 0)
            .map(|k| dists[k].get(v[k]) as usize)
            .sum()
    };
    let blocked = |t: usize, from: Vertex, to: Vertex| {
        occ.at(t + 1, to).is_some() || (to != from && occ.at(t, to).is_some_and(|j| occ.at(t + 1, from) == Some(j)))
    };

    // key -> (cost, time, parent key)
    let mut best: FxHashMap<PairKey, (usize, usize, Option<PairKey>)> = FxHashMap::default();
    let mut heap = BinaryHeap::new();
    let root = (starts[0], starts[1], 0u8, 0usize);
    best.insert(root, (0, 0, None));
    heap.push(Reverse((h(starts, 0), 0usize, root)));
    while let Some(Reverse((_, g, key))) = heap.pop() {
        let (g_best, t, _) = best[&key];
        if g_best != g {
            continue;
        }
        let (va, vb, done, _) = key;
        if done == 3 {
            return Some(unwind_pair(&best, key));
        }
        let mut relax = |nk: PairKey, ng: usize, nt: usize, heap: &mut BinaryHeap<_>| {
            if best.len() >= PLAN_STATE_LIMIT && !best.contains_key(&nk) {
                return;
            }
            if best.get(&nk).is_none_or(|&(og, _, _)| ng < og) {
                best.insert(nk, (ng, nt, Some(key)));
                heap.push(Reverse((ng + h([nk.0, nk.1], nk.2), ng, nk)));
            }
        };
        for k in 0..2 {
            let here = [va, vb][k];
            if done & (1 << k) == 0 && here == goals[k] && goal_last[k].is_none_or(|last| last < t) {
                relax((va, vb, done | (1 << k), layer(t)), g, t, &mut heap);
            }
        }
        let moves = |k: usize, v: Vertex| -> Vec<Vertex> {
            if done & (1 << k) != 0 {
                vec![v]
            } else {
                std::iter::once(v).chain(map.neighbors(v).iter().copied()).collect()
            }
        };
        let step = 2 - done.count_ones() as usize;
        for ua in moves(0, va) {
            if blocked(t, va, ua) {
                continue;
            }
            for &ub in &moves(1, vb) {
                if ub == ua || (ua == vb && ub == va) || blocked(t, vb, ub) {
                    continue;
                }
                relax((ua, ub, done, layer(t + 1)), g + step, t + 1, &mut heap);
            }
        }
    }
    None
}

fn unwind_pair(best: &FxHashMap<PairKey, (usize, usize, Option<PairKey>)>, goal: PairKey) -> [Vec<Vertex>; 2] {
    let mut states = Vec::new();
    let mut cur = Some(goal);
    while let Some(k) = cur {
        let (_, t, parent) = best[&k];
        states.push((t, k.0, k.1));
        cur = parent;
    }
    states.reverse();
    // finishing does not advance time; keep one entry per timestep
    states.dedup_by_key(|s| s.0);
    [
        states.iter().map(|s| s.1).collect(),
        states.iter().map(|s| s.2).collect(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMap;
    use crate::solution::validate_solution;

    #[test]
    fn optimal_single_agent_unchanged() {
        let inst = Instance::new(GridMap::empty(4, 1), vec![0], vec![3]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 1, 2, 3]],
        };
        assert_eq!(refine(&inst, &sol, f64::INFINITY, 1).unwrap(), sol);
    }

    #[test]
    fn pair_search_passes_in_corridor() {
        // the agents must trade places through a one-cell corridor using the side pocket
        let map = GridMap::from_rows(&["....", "@@.@", "@..@"]).unwrap();
        let inst = Instance::new(map, vec![6, 1], vec![0, 10]).unwrap();
        let [a, b] = plan_pair(&inst, [0, 1], &[]).unwrap();
        let len = a.len().max(b.len());
        let pad = |mut p: Vec<Vertex>| {
            p.resize(len, *p.last().unwrap());
            p
        };
        let sol = Solution {
            paths: vec![pad(a), pad(b)],
        };
        assert!(validate_solution(&inst, &sol).is_empty());
        assert_eq!(crate::metrics::sum_of_costs(&inst, &sol), 9);
    }

    #[test]
    fn zero_deadline_is_identity() {
        let inst = Instance::new(GridMap::empty(3, 3), vec![0], vec![2]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 3, 4, 5, 2]],
        };
        assert_eq!(refine(&inst, &sol, 0.0, 1).unwrap(), sol);
    }

    #[test]
    fn detour_is_straightened() {
        let inst = Instance::new(GridMap::empty(3, 3), vec![0, 8], vec![2, 8]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 3, 4, 5, 2], vec![8, 8, 8, 8, 8]],
        };
        let out = refine(&inst, &sol, f64::INFINITY, 3).unwrap();
        assert!(validate_solution(&inst, &out).is_empty());
        assert_eq!(crate::metrics::sum_of_costs(&inst, &out), 2);
        assert_eq!(out.makespan(), 2);
    }

    #[test]
    fn infeasible_input_rejected() {
        let inst = Instance::new(GridMap::empty(3, 1), vec![0], vec![2]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 2]],
        };
        assert!(refine(&inst, &sol, 1.0, 0).is_err());
    }

    #[test]
    fn planner_waits_for_passing_agent() {
        // agent 1 walks 0 -> 3 along the corridor's row; agent 0 wants to
        // cross its path at cell 1 and must not collide or swap
        let map = GridMap::from_rows(&["....", ".@@@"]).unwrap();
        let inst = Instance::new(map, vec![4, 0], vec![1, 3]).unwrap();
        let fixed = [vec![0, 1, 2, 3]];
        let fixed_refs: Vec<&[Vertex]> = fixed.iter().map(Vec::as_slice).collect();
        let mut planner = SpaceTimePlanner::default();
        let path = planner.plan(&inst, 0, &fixed_refs, 9).unwrap();
        let sol = Solution {
            paths: {
                let mut p0 = path.clone();
                let mut p1 = fixed[0].clone();
                let h = p0.len().max(p1.len());
                p0.resize(h, *path.last().unwrap());
                p1.resize(h, 3);
                vec![p0, p1]
            },
        };
        assert!(validate_solution(&inst, &sol).is_empty(), "{sol:?}");
    }
}
