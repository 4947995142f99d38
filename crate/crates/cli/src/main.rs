use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lagat::{
    compute_metrics, load_scenario, read_interchange, solve, write_interchange, GridMap, MapKind, SolverOptions,
};
use lagat_cli::bench::{load_suite, run_benchmark, write_report};
use lagat_cli::config::{read_policy, BenchConfig};
use lagat_cli::{exit, exit_code, generate_suite, parse_size, thread_cap, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "lagat",
    version,
    about = "Grid multi-agent pathfinding solver and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write the plan in the interchange format.
    Solve {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scen: PathBuf,
        #[arg(long)]
        agents: usize,
        /// Policy weight file.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        deadlock_depth: usize,
        /// Keep refining with LNS until the time limit.
        #[arg(long)]
        anytime: bool,
        #[arg(long, default_value_t = 10.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_policy: bool,
        #[arg(long)]
        no_deadlock_detection: bool,
        #[arg(long, default_value_t = 8)]
        lns_k: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check a plan for feasibility and print its metrics.
    Validate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Generate a map and a set of scenarios on it.
    Gen {
        #[arg(long)]
        kind: MapKind,
        /// WxH
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario of a suite directory under a solver matrix.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_map(path: &PathBuf) -> Result<GridMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    GridMap::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve {
            map,
            scen,
            agents,
            policy,
            deadlock_depth,
            anytime,
            time_limit,
            seed,
            no_policy,
            no_deadlock_detection,
            lns_k,
            output,
        } => {
            let grid = read_map(&map)?;
            let text = fs::read_to_string(&scen).with_context(|| format!("reading {}", scen.display()))?;
            let instance =
                load_scenario(&text, &grid, agents).with_context(|| format!("loading {}", scen.display()))?;
            let policy = match (policy, no_policy) {
                (Some(p), false) => Some(read_policy(&p)?),
                _ => None,
            };
            let options = SolverOptions {
                time_limit,
                deadlock_depth,
                policy,
                anytime,
                seed,
                disable_policy: no_policy,
                disable_deadlock_detection: no_deadlock_detection,
                lns_k,
                ..SolverOptions::default()
            };
            let report = solve(&instance, &options)?;
            let mut line = format!(
                "status={} expansions={} time={:.3}",
                report.outcome.status(),
                report.stats.expansions,
                report.stats.elapsed
            );
            if let Some(sol) = report.outcome.solution() {
                let m = compute_metrics(&instance, sol)?;
                fs::write(&output, write_interchange(&instance, sol))
                    .with_context(|| format!("writing {}", output.display()))?;
                line += &format!(
                    " soc={} lower_bound={} soc_over_lb={:.4} makespan={}",
                    m.soc, m.lower_bound, m.soc_over_lb, m.makespan
                );
            }
            println!("{line}");
            Ok(exit_code(&report.outcome))
        }
        Command::Validate { map, solution } => {
            let grid = read_map(&map)?;
            let text = fs::read_to_string(&solution).with_context(|| format!("reading {}", solution.display()))?;
            let (instance, sol) =
                read_interchange(&text, &grid).with_context(|| format!("parsing {}", solution.display()))?;
            match compute_metrics(&instance, &sol) {
                Ok(m) => {
                    println!(
                        "valid soc={} lower_bound={} soc_over_lb={:.4} makespan={}",
                        m.soc, m.lower_bound, m.soc_over_lb, m.makespan
                    );
                    Ok(exit::SOLVED)
                }
                Err(e) => {
                    println!("invalid: {} violations", e.0.len());
                    for v in &e.0 {
                        println!("  {v:?}");
                    }
                    Ok(exit::INVALID)
                }
            }
        }
        Command::Gen {
            kind,
            size,
            agents,
            count,
            seed,
            out,
        } => {
            for path in generate_suite(kind, size, agents, count, seed, &out)? {
                println!("{}", path.display());
            }
            Ok(exit::SOLVED)
        }
        Command::Bench { suite, config, out } => {
            let cfg = BenchConfig::load(&config)?;
            let solvers = cfg.resolve(config.parent().unwrap_or(std::path::Path::new(".")))?;
            let entries = load_suite(&suite)?;
            let threads = thread_cap(std::env::var(THREADS_ENV).ok().as_deref());
            let report = run_benchmark(&entries, &cfg, &solvers, threads)?;
            write_report(&report, &out)?;
            for e in report.runs.iter().filter_map(|r| r.error.as_ref().map(|m| (r, m))) {
                eprintln!(
                    "row {} agents={} solver={} seed={}: {}",
                    e.0.instance, e.0.agents, e.0.solver, e.0.seed, e.1
                );
            }
            println!(
                "{} runs ({} errors), {} aggregate rows -> {}",
                report.runs.len(),
                report.errors,
                report.aggregates.len(),
                out.display()
            );
            Ok(exit::SOLVED)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FAILURE as u8)
        }
    }
}
