//! Library half of the `lagat` binary: benchmark configuration, suite
//! execution, report writing and instance generation.

pub mod bench;
pub mod config;
pub mod stats;

use std::fs;
use std::path::{Path, PathBuf};

use lagat::{generate_instance, generate_map, InstanceError, MapKind, SolveOutcome};

/// Process exit status per solve outcome. Usage errors exit 2 (clap) and
/// other failures exit 1.
pub mod exit {
    pub const SOLVED: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const NO_SOLUTION: i32 = 3;
    pub const TIMEOUT: i32 = 4;
    pub const INVALID: i32 = 5;
}

pub fn exit_code(outcome: &SolveOutcome) -> i32 {
    match outcome {
        SolveOutcome::Solved(_) => exit::SOLVED,
        SolveOutcome::NoSolution => exit::NO_SOLUTION,
        SolveOutcome::Timeout(_) => exit::TIMEOUT,
    }
}

pub const THREADS_ENV: &str = "LAGAT_THREADS";

/// Worker cap from `LAGAT_THREADS`; `None` when unset, empty, or not a
/// positive integer.
pub fn thread_cap(value: Option<&str>) -> Option<usize> {
    value?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

/// Parses `WxH`.
pub fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err(format!("size must be positive, got {s:?}"));
    }
    Ok((w, h))
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("scenario {index}: {source}")]
    Instance { index: usize, source: InstanceError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Writes one map `<kind>-<W>x<H>-s<seed>.map` and `count` scenarios
/// sharing it, `<stem>-<i>.scen`. Returns the written paths, map first.
pub fn generate_suite(
    kind: MapKind,
    (width, height): (usize, usize),
    agents: usize,
    count: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>, GenError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| GenError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let map = generate_map(kind, width, height, seed);
    let stem = format!("{}-{width}x{height}-s{seed}", kind.name());
    let map_name = format!("{stem}.map");
    let map_path = out.join(&map_name);
    fs::write(&map_path, map.to_map_string()).map_err(io(&map_path))?;
    let mut written = vec![map_path];
    for index in 0..count {
        let inst_seed = seed.wrapping_mul(1_000_003).wrapping_add(index as u64 + 1);
        let inst = generate_instance(&map, agents, inst_seed).map_err(|source| GenError::Instance { index, source })?;
        let path = out.join(format!("{stem}-{index:03}.scen"));
        fs::write(&path, inst.to_scenario_string(&map_name)).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
