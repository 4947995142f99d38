//! Solution quality metrics.
//!
//! An agent's cost is the first timestep from which it stays at its goal for
//! the rest of the solution. Sum-of-costs adds these up; the lower bound is
//! Σ dist(s_i, g_i). When the lower bound is zero, SoC/LB is reported as 1.0.

use thiserror::Error;

use crate::grid::Vertex;
use crate::instance::Instance;
use crate::solution::{validate_solution, Solution, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("solution is infeasible ({} violations, first: {:?})", .0.len(), .0.first())]
pub struct InfeasibleSolution(pub Vec<Violation>);

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub agent_costs: Vec<u64>,
    pub soc: u64,
    pub lower_bound: u64,
    pub soc_over_lb: f64,
    /// Latest per-agent cost; equals `T` for solutions without trailing
    /// all-at-goal timesteps.
    pub makespan: u64,
}

pub fn agent_cost(path: &[Vertex], goal: Vertex) -> u64 {
    let parked = path.iter().rev().take_while(|&&v| v == goal).count();
    (path.len() - parked) as u64
}

pub fn sum_of_costs(instance: &Instance, solution: &Solution) -> u64 {
    solution
        .paths
        .iter()
        .zip(instance.goals())
        .map(|(p, &g)| agent_cost(p, g))
        .sum()
}

pub fn compute_metrics(instance: &Instance, solution: &Solution) -> Result<Metrics, InfeasibleSolution> {
    let violations = validate_solution(instance, solution);
    if !violations.is_empty() {
        return Err(InfeasibleSolution(violations));
    }
    let agent_costs: Vec<u64> = solution
        .paths
        .iter()
        .zip(instance.goals())
        .map(|(p, &g)| agent_cost(p, g))
        .collect();
    let soc = agent_costs.iter().sum();
    let lower_bound = instance.lower_bound();
    let soc_over_lb = if lower_bound == 0 {
        1.0
    } else {
        soc as f64 / lower_bound as f64
    };
    Ok(Metrics {
        makespan: agent_costs.iter().copied().max().unwrap_or(0),
        agent_costs,
        soc,
        lower_bound,
        soc_over_lb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMap;

    #[test]
    fn stop_time_cost() {
        // (a, b, g, g)
        assert_eq!(agent_cost(&[0, 1, 2, 2], 2), 2);
        // (g, x, g) counts the excursion
        assert_eq!(agent_cost(&[2, 1, 2], 2), 2);
        assert_eq!(agent_cost(&[2, 2, 2], 2), 0);
    }

    #[test]
    fn all_at_goal_normalizes_to_one() {
        let inst = Instance::new(GridMap::empty(2, 2), vec![0, 3], vec![0, 3]).unwrap();
        let sol = Solution {
            paths: vec![vec![0], vec![3]],
        };
        let m = compute_metrics(&inst, &sol).unwrap();
        assert_eq!(m.soc, 0);
        assert_eq!(m.lower_bound, 0);
        assert_eq!(m.soc_over_lb, 1.0);
        assert_eq!(m.makespan, 0);
    }

    #[test]
    fn infeasible_rejected() {
        let inst = Instance::new(GridMap::empty(3, 1), vec![0], vec![2]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 2]],
        };
        assert!(compute_metrics(&inst, &sol).is_err());
    }

    #[test]
    fn two_agent_metrics() {
        let inst = Instance::new(GridMap::empty(4, 1), vec![0, 3], vec![1, 3]).unwrap();
        let sol = Solution {
            paths: vec![vec![0, 1, 1], vec![3, 3, 3]],
        };
        let m = compute_metrics(&inst, &sol).unwrap();
        assert_eq!(m.agent_costs, vec![1, 0]);
        assert_eq!(m.soc, 1);
        assert_eq!(m.soc_over_lb, 1.0);
        assert_eq!(m.makespan, 1);
    }
}
