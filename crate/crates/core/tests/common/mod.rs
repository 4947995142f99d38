//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the solver's search, planner, or inference code;
//! only plain data types (maps, instances, weights) are shared.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use lagat::pibt::{NodeContext, Preference, PreferenceProvider};
use lagat::policy::ObservationTensor;
use lagat::{AgentId, Configuration, GridMap, Instance, PolicyWeights, Vertex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 4-neighbors computed straight from the passability mask.
pub fn neighbors(map: &GridMap, v: Vertex) -> Vec<Vertex> {
    let (w, h) = (map.width() as i64, map.height() as i64);
    let (x, y) = ((v as i64) % w, (v as i64) / w);
    [(0, -1), (0, 1), (-1, 0), (1, 0)]
        .iter()
        .map(|(dx, dy)| (x + dx, y + dy))
        .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < w && ny < h)
        .map(|(nx, ny)| (ny * w + nx) as usize)
        .filter(|&u| map.passable_mask()[u])
        .collect()
}

/// All-pairs shortest path lengths by Floyd–Warshall; `None` = unreachable.
pub fn all_pairs(map: &GridMap) -> Vec<Vec<Option<u32>>> {
    let n = map.cell_count();
    let mut d = vec![vec![None; n]; n];
    for v in 0..n {
        if !map.passable_mask()[v] {
            continue;
        }
        d[v][v] = Some(0);
        for u in neighbors(map, v) {
            d[v][u] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k] else { continue };
            for j in 0..n {
                if let Some(kj) = d[k][j] {
                    if d[i][j].map_or(true, |c| ik + kj < c) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

/// Every joint successor of `q`: each agent stays or moves to a neighbor,
/// no shared vertex, no swapped pair.
pub fn joint_successors(map: &GridMap, q: &[Vertex], frozen: &[bool]) -> Vec<Vec<Vertex>> {
    let options: Vec<Vec<Vertex>> = q
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut o = vec![v];
            if !frozen.get(i).copied().unwrap_or(false) {
                o.extend(neighbors(map, v));
            }
            o
        })
        .collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(q.len());
    fn rec(i: usize, options: &[Vec<Vertex>], q: &[Vertex], cur: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
        if i == options.len() {
            out.push(cur.clone());
            return;
        }
        for &v in &options[i] {
            if cur.contains(&v) {
                continue;
            }
            if (0..i).any(|j| cur[j] == q[i] && v == q[j]) {
                continue;
            }
            cur.push(v);
            rec(i + 1, options, q, cur, out);
            cur.pop();
        }
    }
    rec(0, &options, q, &mut cur, &mut out);
    out
}

/// Breadth-first search over joint configurations: is the goal reachable?
pub fn joint_bfs_solvable(instance: &Instance) -> bool {
    let map = instance.map();
    let start = instance.starts().to_vec();
    let goal = instance.goals().to_vec();
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    while let Some(q) = queue.pop_front() {
        if q == goal {
            return true;
        }
        for nq in joint_successors(map, &q, &[]) {
            if seen.insert(nq.clone()) {
                queue.push_back(nq);
            }
        }
    }
    false
}

/// Optimal stop-time sum-of-costs by Dijkstra over (configuration, finished
/// set). A finished agent sits on its goal for good; every step costs one
/// per unfinished agent.
pub fn joint_optimal_soc(instance: &Instance) -> Option<u64> {
    let map = instance.map();
    let n = instance.agent_count();
    let goal = instance.goals().to_vec();
    let full = (1u32 << n) - 1;
    let mut best: HashMap<(Vec<Vertex>, u32), u64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let start = (instance.starts().to_vec(), 0u32);
    best.insert(start.clone(), 0);
    heap.push(Reverse((0u64, start.0, start.1)));
    while let Some(Reverse((c, q, mask))) = heap.pop() {
        if best.get(&(q.clone(), mask)).is_some_and(|&b| b < c) {
            continue;
        }
        if mask == full {
            return Some(c);
        }
        let mut push = |nq: Vec<Vertex>, nmask: u32, nc: u64, heap: &mut BinaryHeap<_>| {
            let key = (nq, nmask);
            if best.get(&key).map_or(true, |&b| nc < b) {
                best.insert(key.clone(), nc);
                heap.push(Reverse((nc, key.0, key.1)));
            }
        };
        for i in 0..n {
            if mask & (1 << i) == 0 && q[i] == goal[i] {
                push(q.clone(), mask | (1 << i), c, &mut heap);
            }
        }
        let frozen: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let step = (n as u32 - mask.count_ones()) as u64;
        for nq in joint_successors(map, &q, &frozen) {
            push(nq, mask, c + step, &mut heap);
        }
    }
    None
}

/// Violations found by direct re-checking; empty means feasible.
pub fn brute_force_violations(instance: &Instance, paths: &[Vec<Vertex>]) -> Vec<String> {
    let map = instance.map();
    let mut out = Vec::new();
    if paths.len() != instance.agent_count() {
        return vec!["agent count".into()];
    }
    let t_len = paths[0].len();
    if t_len == 0 {
        return vec!["empty".into()];
    }
    for (i, p) in paths.iter().enumerate() {
        if p.len() != t_len {
            out.push(format!("length {i}"));
            continue;
        }
        if p[0] != instance.starts()[i] {
            out.push(format!("start {i}"));
        }
        if p[t_len - 1] != instance.goals()[i] {
            out.push(format!("goal {i}"));
        }
        for t in 0..t_len {
            if !map.passable_mask()[p[t]] {
                out.push(format!("blocked {i}@{t}"));
            }
            if t > 0 && p[t] != p[t - 1] && !neighbors(map, p[t - 1]).contains(&p[t]) {
                out.push(format!("jump {i}@{t}"));
            }
        }
    }
    if !out.is_empty() {
        return out;
    }
    for t in 0..t_len {
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                if paths[i][t] == paths[j][t] {
                    out.push(format!("vertex {i},{j}@{t}"));
                }
                if t > 0 && paths[i][t] == paths[j][t - 1] && paths[j][t] == paths[i][t - 1] {
                    out.push(format!("swap {i},{j}@{t}"));
                }
            }
        }
    }
    out
}

/// Stop-time cost by scanning forward for the first time after which the
/// agent never leaves its goal.
pub fn brute_force_cost(path: &[Vertex], goal: Vertex) -> u64 {
    (0..path.len())
        .find(|&t| path[t..].iter().all(|&v| v == goal))
        .unwrap_or(path.len()) as u64
}

/// A random open map with each cell blocked with probability `p`.
pub fn random_open_map(r: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> GridMap {
    GridMap::new(w, h, (0..w * h).map(|_| !r.gen_bool(p)).collect())
}

/// Random instance on a random small map, with arbitrary (possibly
/// disconnected) endpoints.
pub fn small_instance(r: &mut ChaCha8Rng, max_side: usize, max_agents: usize) -> Instance {
    loop {
        let w = r.gen_range(1..=max_side);
        let h = r.gen_range(1..=max_side);
        let map = random_open_map(r, w, h, 0.25);
        let free: Vec<Vertex> = (0..map.cell_count()).filter(|&v| map.passable_mask()[v]).collect();
        let n = r.gen_range(1..=max_agents);
        if free.len() < n {
            continue;
        }
        let pick = |r: &mut ChaCha8Rng| {
            let mut f = free.clone();
            let mut out = Vec::new();
            for _ in 0..n {
                let k = r.gen_range(0..f.len());
                out.push(f.swap_remove(k));
            }
            out
        };
        let starts = pick(r);
        let goals = pick(r);
        return Instance::new(map, starts, goals).expect("distinct passable endpoints");
    }
}

/// Prefers the candidate farthest from the goal.
pub struct AlwaysWorst;

impl PreferenceProvider for AlwaysWorst {
    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        _ctx: &NodeContext,
    ) -> Preference {
        let d = instance.dist(agent);
        let here = config[agent];
        let mut c = vec![here];
        c.extend(neighbors(instance.map(), here));
        c.sort_by_key(|&v| (Reverse(d.get(v)), v));
        Preference { agent, candidates: c }
    }
}

/// Always steps to the lowest-index neighbor; agents settle into a
/// two-cell back-and-forth.
pub struct Oscillator;

impl PreferenceProvider for Oscillator {
    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        _ctx: &NodeContext,
    ) -> Preference {
        let here = config[agent];
        let mut c = neighbors(instance.map(), here);
        c.sort();
        c.push(here);
        Preference { agent, candidates: c }
    }
}

/// Fixed first choice per (agent, vertex); the rest follow in index order.
pub struct Scripted(pub HashMap<(AgentId, Vertex), Vertex>);

impl PreferenceProvider for Scripted {
    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        _ctx: &NodeContext,
    ) -> Preference {
        let here = config[agent];
        let mut c = vec![here];
        c.extend(neighbors(instance.map(), here));
        c.sort();
        if let Some(&first) = self.0.get(&(agent, here)) {
            c.retain(|&v| v != first);
            c.insert(0, first);
        }
        Preference { agent, candidates: c }
    }
}

/// Straight-line f64 evaluation of the policy network, one agent at a time.
/// Builds its own communication graph from positions under the Chebyshev
/// rule and sums neighbors in whatever order they are enumerated.
pub fn oracle_forward(
    weights: &PolicyWeights,
    obs: &[ObservationTensor],
    positions: &[(i64, i64)],
    r_comm: i64,
) -> (Vec<[f64; 5]>, Vec<Vec<Vec<(usize, f64)>>>) {
    let m = &weights.meta;
    let t = |name: &str| -> Vec<f64> { weights.tensor(name).unwrap().data.iter().map(|&v| v as f64).collect() };
    let n = obs.len();
    let side = 2 * m.r_obs + 1;

    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    for o in obs {
        let mut act: Vec<f64> = o.data.iter().map(|&v| v as f64).collect();
        let mut hw = side;
        for k in 0..m.cnn_channels.len() - 1 {
            let (cin, cout) = (m.cnn_channels[k], m.cnn_channels[k + 1]);
            let w = t(&format!("cnn.{k}.weight"));
            let b = t(&format!("cnn.{k}.bias"));
            let ho = hw - 2;
            let mut next = vec![0.0; cout * ho * ho];
            for oc in 0..cout {
                for y in 0..ho {
                    for xx in 0..ho {
                        let mut s = b[oc];
                        for ic in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    s +=
                                        w[((oc * cin + ic) * 3 + ky) * 3 + kx] * act[(ic * hw + y + ky) * hw + xx + kx];
                                }
                            }
                        }
                        next[(oc * ho + y) * ho + xx] = s.max(0.0);
                    }
                }
            }
            act = next;
            hw = ho;
        }
        let c = *m.cnn_channels.last().unwrap();
        let pooled = (0..c)
            .map(|ch| {
                act[ch * hw * hw..(ch + 1) * hw * hw]
                    .iter()
                    .copied()
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        x.push(pooled);
    }

    let matvec = |w: &[f64], rows: usize, cols: usize, v: &[f64]| -> Vec<f64> {
        (0..rows)
            .map(|r| (0..cols).map(|c| w[r * cols + c] * v[c]).sum())
            .collect()
    };
    let phi = |dx: f64, dy: f64| -> Vec<f64> {
        let (w0, b0, w1, b1) = (
            t("edge_mlp.0.weight"),
            t("edge_mlp.0.bias"),
            t("edge_mlp.1.weight"),
            t("edge_mlp.1.bias"),
        );
        let om = [dx, dy, dx.abs() + dy.abs()];
        let h: Vec<f64> = matvec(&w0, m.edge_hidden, 3, &om)
            .iter()
            .zip(&b0)
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        matvec(&w1, m.edge_dim, m.edge_hidden, &h)
            .iter()
            .zip(&b1)
            .map(|(a, b)| a + b)
            .collect()
    };

    let d = m.embed_dim;
    let mut attention = Vec::new();
    for l in 0..m.layers {
        let wr = t(&format!("gnn.{l}.w_root"));
        let wn = t(&format!("gnn.{l}.w_node"));
        let we = t(&format!("gnn.{l}.w_edge"));
        let tn = t(&format!("gnn.{l}.theta_node"));
        let te = t(&format!("gnn.{l}.theta_edge"));
        let mut next = Vec::with_capacity(n);
        let mut layer_att = Vec::with_capacity(n);
        for i in 0..n {
            let nbrs: Vec<usize> = (0..n)
                .filter(|&j| {
                    j != i
                        && (positions[j].0 - positions[i].0)
                            .abs()
                            .max((positions[j].1 - positions[i].1).abs())
                            <= r_comm
                })
                .collect();
            let feats: Vec<Vec<f64>> = nbrs
                .iter()
                .map(|&j| {
                    phi(
                        (positions[j].0 - positions[i].0) as f64,
                        (positions[j].1 - positions[i].1) as f64,
                    )
                })
                .collect();
            let logits: Vec<f64> = nbrs
                .iter()
                .zip(&feats)
                .map(|(&j, w)| {
                    let a_n = matvec(&tn, d, d, &x[j]);
                    let a_e = matvec(&te, d, m.edge_dim, w);
                    let a: f64 = (0..d).map(|r| x[i][r] * (a_n[r] + a_e[r])).sum();
                    if a >= 0.0 {
                        a
                    } else {
                        m.leaky_slope * a
                    }
                })
                .collect();
            let mx = logits.iter().copied().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|a| (a - mx).exp()).sum();
            let alpha: Vec<f64> = logits.iter().map(|a| (a - mx).exp() / z).collect();
            let mut msg = vec![0.0; d];
            for (k, &j) in nbrs.iter().enumerate() {
                let mn = matvec(&wn, d, d, &x[j]);
                let me = matvec(&we, d, m.edge_dim, &feats[k]);
                for r in 0..d {
                    msg[r] += alpha[k] * (mn[r] + me[r]);
                }
            }
            let root = matvec(&wr, d, d, &x[i]);
            next.push((0..d).map(|r| (root[r] + msg[r]).max(0.0)).collect::<Vec<f64>>());
            layer_att.push(nbrs.into_iter().zip(alpha).collect());
        }
        x = next;
        attention.push(layer_att);
    }

    let (w0, b0, w1, b1) = (
        t("decoder.0.weight"),
        t("decoder.0.bias"),
        t("decoder.1.weight"),
        t("decoder.1.bias"),
    );
    let probs = x
        .iter()
        .map(|xi| {
            let h: Vec<f64> = matvec(&w0, m.decoder_hidden, d, xi)
                .iter()
                .zip(&b0)
                .map(|(a, b)| (a + b).max(0.0))
                .collect();
            let lg: Vec<f64> = matvec(&w1, 5, m.decoder_hidden, &h)
                .iter()
                .zip(&b1)
                .map(|(a, b)| a + b)
                .collect();
            let mx = lg.iter().copied().fold(f64::MIN, f64::max);
            let z: f64 = lg.iter().map(|a| (a - mx).exp()).sum();
            let mut p = [0.0; 5];
            for k in 0..5 {
                p[k] = (lg[k] - mx).exp() / z;
            }
            p
        })
        .collect();
    (probs, attention)
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}
