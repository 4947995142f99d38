//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated type glue beyond `wasm-bindgen`'s string passing.
//! There is no wall clock in the browser build, so searches are bounded by
//! expansion and iteration budgets instead of seconds.

use lagat::{
    compute_metrics, generate_instance, generate_map, refine_with, solve, GridMap, Instance, MapKind, RefineOptions,
    Solution, SolveOutcome, SolverOptions,
};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

type Xy = (usize, usize);

#[derive(Debug, Serialize, Deserialize)]
pub struct Scene {
    /// Map rows, `.` free and `@` blocked.
    pub rows: Vec<String>,
    pub starts: Vec<Xy>,
    pub goals: Vec<Xy>,
}

impl Scene {
    fn instance(&self) -> Result<Instance, String> {
        let rows: Vec<&str> = self.rows.iter().map(String::as_str).collect();
        let map = GridMap::from_rows(&rows).map_err(|e| e.to_string())?;
        Instance::from_xy(map, &self.starts, &self.goals).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct SolveRequest {
    pub deadlock_depth: usize,
    pub anytime: bool,
    pub seed: u64,
    pub max_expansions: u64,
    pub lns_iterations: u64,
}

impl Default for SolveRequest {
    fn default() -> Self {
        SolveRequest {
            deadlock_depth: 2,
            anytime: false,
            seed: 0,
            max_expansions: 200_000,
            lns_iterations: 200,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Plan {
    pub status: &'static str,
    pub paths: Vec<Vec<Xy>>,
    pub soc: Option<u64>,
    pub lower_bound: u64,
    pub makespan: Option<u64>,
    pub expansions: u64,
    pub reinsertions: u64,
    pub initial_soc: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct Refined {
    pub paths: Vec<Vec<Xy>>,
    pub iterations: u64,
    pub soc_trace: Vec<u64>,
}

fn to_xy(map: &GridMap, sol: &Solution) -> Vec<Vec<Xy>> {
    sol.paths
        .iter()
        .map(|p| p.iter().map(|&v| map.coords(v)).collect())
        .collect()
}

fn from_xy(map: &GridMap, paths: &[Vec<Xy>]) -> Result<Solution, String> {
    let paths = paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|&(x, y)| {
                    map.vertex_at(x as isize, y as isize)
                        .ok_or_else(|| format!("({x},{y}) is off the map"))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(Solution { paths })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// Generates a map of `kind` (random, maze, warehouse) and an instance on it.
pub fn generate_scene(kind: &str, width: usize, height: usize, agents: usize, seed: u64) -> Result<Scene, String> {
    let kind: MapKind = kind.parse()?;
    if width == 0 || height == 0 || width * height > 128 * 128 {
        return Err(format!("size {width}x{height} outside 1..=128 per side"));
    }
    let map = generate_map(kind, width, height, seed);
    let inst = generate_instance(&map, agents, seed).map_err(|e| e.to_string())?;
    let rows = map.to_map_string().lines().skip(4).map(str::to_owned).collect();
    Ok(Scene {
        rows,
        starts: inst.starts().iter().map(|&v| map.coords(v)).collect(),
        goals: inst.goals().iter().map(|&v| map.coords(v)).collect(),
    })
}

pub fn solve_scene(scene: &Scene, req: &SolveRequest) -> Result<Plan, String> {
    let inst = scene.instance()?;
    let options = SolverOptions {
        // the budgets below bound the run; the clock does not tick in the browser
        time_limit: f64::MAX,
        deadlock_depth: req.deadlock_depth,
        anytime: req.anytime,
        seed: req.seed,
        disable_deadlock_detection: req.deadlock_depth == 0,
        max_expansions: Some(req.max_expansions),
        max_lns_iterations: Some(req.lns_iterations),
        ..SolverOptions::default()
    };
    let report = solve(&inst, &options).map_err(|e| e.to_string())?;
    let (paths, metrics) = match &report.outcome {
        SolveOutcome::Solved(sol) => (
            to_xy(inst.map(), sol),
            Some(compute_metrics(&inst, sol).map_err(|e| e.to_string())?),
        ),
        SolveOutcome::Timeout(partial) => (to_xy(inst.map(), partial), None),
        SolveOutcome::NoSolution => (Vec::new(), None),
    };
    Ok(Plan {
        status: report.outcome.status(),
        paths,
        soc: metrics.as_ref().map(|m| m.soc),
        lower_bound: inst.lower_bound(),
        makespan: metrics.as_ref().map(|m| m.makespan),
        expansions: report.stats.expansions,
        reinsertions: report.stats.reinsertions,
        initial_soc: report.stats.initial_soc,
    })
}

pub fn refine_scene(scene: &Scene, paths: &[Vec<Xy>], iterations: u64, seed: u64) -> Result<Refined, String> {
    let inst = scene.instance()?;
    let sol = from_xy(inst.map(), paths)?;
    let opts = RefineOptions {
        seed,
        max_iterations: Some(iterations),
        ..RefineOptions::default()
    };
    let out = refine_with(&inst, &sol, &opts).map_err(|e| e.to_string())?;
    Ok(Refined {
        paths: to_xy(inst.map(), &out.solution),
        iterations: out.iterations,
        soc_trace: out.soc_trace,
    })
}

fn parse<'a, T: Deserialize<'a>>(what: &str, s: &'a str) -> Result<T, JsValue> {
    serde_json::from_str(s).map_err(|e| JsValue::from_str(&format!("{what}: {e}")))
}

#[wasm_bindgen]
pub fn generate(kind: &str, width: usize, height: usize, agents: usize, seed: u64) -> Result<String, JsValue> {
    generate_scene(kind, width, height, agents, seed)
        .map(|s| json(&s))
        .map_err(|e| JsValue::from_str(&e))
}

/// `scene` as produced by [`generate`]; `request` may be `{}` for defaults.
#[wasm_bindgen(js_name = solve)]
pub fn solve_js(scene: &str, request: &str) -> Result<String, JsValue> {
    let scene: Scene = parse("scene", scene)?;
    let req: SolveRequest = parse("request", request)?;
    solve_scene(&scene, &req)
        .map(|p| json(&p))
        .map_err(|e| JsValue::from_str(&e))
}

/// `paths` as in a solved plan.
#[wasm_bindgen]
pub fn refine(scene: &str, paths: &str, iterations: u64, seed: u64) -> Result<String, JsValue> {
    let scene: Scene = parse("scene", scene)?;
    let paths: Vec<Vec<Xy>> = parse("paths", paths)?;
    refine_scene(&scene, &paths, iterations, seed)
        .map(|r| json(&r))
        .map_err(|e| JsValue::from_str(&e))
}
