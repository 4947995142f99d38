//! Multi-agent pathfinding on 4-connected grids: LaCAM configuration search
//! driven by PIBT, guided by a graph-attention policy with a deadlock
//! override, and refined by large-neighborhood search.
//!
//! ```
//! use lagat::{generate_instance, solve, GridMap, SolverOptions};
//!
//! let map = GridMap::empty(8, 8);
//! let instance = generate_instance(&map, 6, 1).unwrap();
//! let report = solve(&instance, &SolverOptions::default()).unwrap();
//! assert_eq!(report.outcome.status(), "SOLVED");
//! ```

pub mod clock;
pub mod deadlock;
pub mod dist;
pub mod grid;
pub mod instance;
pub mod lacam;
pub mod lns;
pub mod mapgen;
pub mod metrics;
pub mod pibt;
pub mod policy;
pub mod solution;

pub use dist::{distance_field, DistError, DistField};
pub use grid::{Action, AgentId, GridMap, MapParseError, Vertex};
pub use instance::{generate_instance, load_scenario, Instance, InstanceError, ScenarioError};
pub use lacam::{
    solve, solve_with_provider, SearchStats, SolveError, SolveOutcome, SolveReport, SolverOptions, TraceEvent,
};
pub use lns::{refine, refine_with, RefineOptions, RefineResult};
pub use mapgen::{generate_map, MapKind};
pub use metrics::{compute_metrics, sum_of_costs, InfeasibleSolution, Metrics};
pub use pibt::{pibt_step, Constraint, Preference, PreferenceProvider};
pub use policy::{load_weights, ActionDistribution, PolicyGuide, PolicyMeta, PolicyWeights};
pub use solution::{read_interchange, validate_solution, write_interchange, Configuration, Solution, Violation};
