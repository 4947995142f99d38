//! Suite discovery, parallel execution, and tabular reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lagat::{compute_metrics, load_scenario, solve, GridMap, SolveOutcome};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BenchConfig, ResolvedSolver};
use crate::stats::{ci95_half_width, mean};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("reading suite {path}: {source}")]
    Suite { path: PathBuf, source: std::io::Error },
    #[error("suite {0} contains no .scen files")]
    EmptySuite(PathBuf),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// One scenario file of a suite, with its map resolved (or the reason it
/// could not be).
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub id: String,
    pub map_name: String,
    pub loaded: Result<(GridMap, String), String>,
}

impl SuiteEntry {
    pub fn entry_count(&self) -> usize {
        match &self.loaded {
            Ok((_, text)) => text.lines().skip(1).filter(|l| !l.trim().is_empty()).count(),
            Err(_) => 0,
        }
    }
}

/// Map file referenced by the first entry of a scen file.
fn referenced_map(text: &str) -> Option<&str> {
    let line = text.lines().skip(1).find(|l| !l.trim().is_empty())?;
    line.split('\t').nth(1).map(str::trim).filter(|s| !s.is_empty())
}

fn load_entry(scen: &Path) -> SuiteEntry {
    let id = scen.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let text = match fs::read_to_string(scen) {
        Ok(t) => t,
        Err(e) => {
            return SuiteEntry {
                id,
                map_name: String::new(),
                loaded: Err(format!("{}: {e}", scen.display())),
            }
        }
    };
    let Some(map_name) = referenced_map(&text).map(str::to_owned) else {
        return SuiteEntry {
            id,
            map_name: String::new(),
            loaded: Err(format!("{}: no entries", scen.display())),
        };
    };
    let map_path = scen.parent().unwrap_or(Path::new(".")).join(&map_name);
    let loaded = fs::read_to_string(&map_path)
        .map_err(|e| format!("{}: {e}", map_path.display()))
        .and_then(|m| GridMap::parse(&m).map_err(|e| format!("{}: {e}", map_path.display())))
        .map(|map| (map, text));
    SuiteEntry { id, map_name, loaded }
}

/// Every `*.scen` under `dir` (not recursive), sorted by file name.
pub fn load_suite(dir: &Path) -> Result<Vec<SuiteEntry>, BenchError> {
    let read = fs::read_dir(dir).map_err(|source| BenchError::Suite {
        path: dir.to_owned(),
        source,
    })?;
    let mut scens: Vec<PathBuf> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scen"))
        .collect();
    scens.sort();
    if scens.is_empty() {
        return Err(BenchError::EmptySuite(dir.to_owned()));
    }
    Ok(scens.iter().map(|p| load_entry(p)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub map: String,
    pub agents: usize,
    pub solver: String,
    pub seed: u64,
    /// SOLVED, NO_SOLUTION, TIMEOUT, or ERROR for rows that could not run.
    pub status: String,
    pub soc: Option<u64>,
    pub lower_bound: Option<u64>,
    pub soc_over_lb: Option<f64>,
    pub makespan: Option<u64>,
    pub initial_soc: Option<u64>,
    pub expansions: Option<u64>,
    pub error: Option<String>,
}

/// Wall-clock figures, kept apart from [`RunRecord`] so that `runs.csv`
/// stays reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub instance: String,
    pub agents: usize,
    pub solver: String,
    pub seed: u64,
    pub status: String,
    pub initial_time: Option<f64>,
    pub final_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub map: String,
    pub agents: usize,
    pub solver: String,
    pub runs: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub soc_mean: Option<f64>,
    pub soc_ci95: Option<f64>,
    pub soc_over_lb_mean: Option<f64>,
    pub soc_over_lb_ci95: Option<f64>,
    pub makespan_mean: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    /// Convention note carried into the JSON output.
    pub soc_over_lb_note: &'static str,
    pub runs: Vec<RunRecord>,
    pub timings: Vec<TimingRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub errors: usize,
}

struct Job<'a> {
    entry: &'a SuiteEntry,
    agents: usize,
    solver: &'a ResolvedSolver,
    seed: u64,
}

fn error_row(job: &Job, message: String) -> (RunRecord, TimingRecord) {
    (
        RunRecord {
            instance: job.entry.id.clone(),
            map: job.entry.map_name.clone(),
            agents: job.agents,
            solver: job.solver.name.clone(),
            seed: job.seed,
            status: "ERROR".into(),
            soc: None,
            lower_bound: None,
            soc_over_lb: None,
            makespan: None,
            initial_soc: None,
            expansions: None,
            error: Some(message),
        },
        TimingRecord {
            instance: job.entry.id.clone(),
            agents: job.agents,
            solver: job.solver.name.clone(),
            seed: job.seed,
            status: "ERROR".into(),
            initial_time: None,
            final_time: None,
        },
    )
}

fn run_job(job: &Job) -> (RunRecord, TimingRecord) {
    let (map, text) = match &job.entry.loaded {
        Ok(x) => x,
        Err(e) => return error_row(job, e.clone()),
    };
    let instance = match load_scenario(text, map, job.agents) {
        Ok(i) => i,
        Err(e) => return error_row(job, e.to_string()),
    };
    let mut options = job.solver.options.clone();
    options.seed = job.seed;
    let report = match solve(&instance, &options) {
        Ok(r) => r,
        Err(e) => return error_row(job, e.to_string()),
    };
    let status = report.outcome.status().to_string();
    let metrics = match &report.outcome {
        SolveOutcome::Solved(sol) => match compute_metrics(&instance, sol) {
            Ok(m) => Some(m),
            Err(e) => return error_row(job, format!("solver returned an infeasible solution: {e}")),
        },
        _ => None,
    };
    let solved = metrics.is_some();
    let run = RunRecord {
        instance: job.entry.id.clone(),
        map: job.entry.map_name.clone(),
        agents: job.agents,
        solver: job.solver.name.clone(),
        seed: job.seed,
        status: status.clone(),
        soc: metrics.as_ref().map(|m| m.soc),
        lower_bound: Some(instance.lower_bound()),
        soc_over_lb: metrics.as_ref().map(|m| m.soc_over_lb),
        makespan: metrics.as_ref().map(|m| m.makespan),
        initial_soc: report.stats.initial_soc.filter(|_| solved),
        expansions: Some(report.stats.expansions),
        error: None,
    };
    let timing = TimingRecord {
        instance: job.entry.id.clone(),
        agents: job.agents,
        solver: job.solver.name.clone(),
        seed: job.seed,
        status,
        initial_time: report.stats.initial_time,
        final_time: Some(report.stats.elapsed),
    };
    (run, timing)
}

/// Groups by (map, agents, solver). ERROR rows are left out entirely;
/// unsolved rows count toward `runs` but not toward the cost means.
pub fn aggregate(runs: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, usize, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.status != "ERROR") {
        groups
            .entry((r.map.clone(), r.agents, r.solver.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((map, agents, solver), rows)| {
            let solved: Vec<&&RunRecord> = rows.iter().filter(|r| r.status == "SOLVED").collect();
            let soc: Vec<f64> = solved.iter().filter_map(|r| r.soc).map(|s| s as f64).collect();
            let ratio: Vec<f64> = solved.iter().filter_map(|r| r.soc_over_lb).collect();
            let span: Vec<f64> = solved.iter().filter_map(|r| r.makespan).map(|s| s as f64).collect();
            AggregateRow {
                map,
                agents,
                solver,
                runs: rows.len(),
                solved: solved.len(),
                success_rate: solved.len() as f64 / rows.len() as f64,
                soc_mean: mean(&soc),
                soc_ci95: ci95_half_width(&soc),
                soc_over_lb_mean: mean(&ratio),
                soc_over_lb_ci95: ci95_half_width(&ratio),
                makespan_mean: mean(&span),
            }
        })
        .collect()
}

/// Runs every (scenario, agent count, solver, seed) row on a pool of
/// `threads` workers (rayon's default when `None`). Output order follows
/// input order regardless of scheduling.
pub fn run_benchmark(
    suite: &[SuiteEntry],
    config: &BenchConfig,
    solvers: &[ResolvedSolver],
    threads: Option<usize>,
) -> Result<BenchReport, BenchError> {
    let mut jobs = Vec::new();
    for entry in suite {
        let counts = config.agents.clone().unwrap_or_else(|| vec![entry.entry_count()]);
        for &agents in &counts {
            for solver in solvers {
                for &seed in &config.seeds {
                    jobs.push(Job {
                        entry,
                        agents,
                        solver,
                        seed,
                    });
                }
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let rows: Vec<(RunRecord, TimingRecord)> = pool.install(|| jobs.par_iter().map(run_job).collect());
    let (runs, timings): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let errors = runs.iter().filter(|r| r.status == "ERROR").count();
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        soc_over_lb_note: "soc_over_lb is 1.0 when the lower bound is 0",
        aggregates: aggregate(&runs),
        runs,
        timings,
        errors,
    })
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))
}

pub fn read_runs_csv(bytes: &[u8]) -> Result<Vec<RunRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Writes `runs.csv`, `timings.csv`, `aggregates.csv` and `summary.json`.
pub fn write_report(report: &BenchReport, out: &Path) -> Result<(), BenchError> {
    let write = |name: &str, bytes: &[u8]| {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|source| BenchError::Write { path, source })
    };
    fs::create_dir_all(out).map_err(|source| BenchError::Write {
        path: out.to_owned(),
        source,
    })?;
    write("runs.csv", &to_csv(&report.runs)?)?;
    write("timings.csv", &to_csv(&report.timings)?)?;
    write("aggregates.csv", &to_csv(&report.aggregates)?)?;
    write("summary.json", serde_json::to_string_pretty(report)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(map: &str, status: &str, soc: Option<u64>) -> RunRecord {
        RunRecord {
            instance: "i".into(),
            map: map.into(),
            agents: 2,
            solver: "s".into(),
            seed: 0,
            status: status.into(),
            soc,
            lower_bound: Some(4),
            soc_over_lb: soc.map(|s| s as f64 / 4.0),
            makespan: soc.map(|s| s / 2),
            initial_soc: soc,
            expansions: Some(1),
            error: None,
        }
    }

    #[test]
    fn timeout_counts_against_success_only() {
        let rows = vec![run("m", "SOLVED", Some(8)), run("m", "TIMEOUT", None)];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].runs, 2);
        assert_eq!(agg[0].success_rate, 0.5);
        assert_eq!(agg[0].soc_mean, Some(8.0));
    }

    #[test]
    fn error_rows_not_aggregated() {
        let rows = vec![run("m", "ERROR", None)];
        assert!(aggregate(&rows).is_empty());
    }

    #[test]
    fn map_of_first_entry() {
        assert_eq!(
            referenced_map("version 1\n0\ta.map\t1\t1\t0\t0\t0\t0\t0\n"),
            Some("a.map")
        );
        assert_eq!(referenced_map("version 1\n"), None);
    }
}
