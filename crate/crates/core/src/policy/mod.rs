//! Learned graph-attention policy: observations, communication graph,
//! weights, batched inference, and conversion of the action distribution
//! into one-step preferences.

pub mod forward;
pub mod graph;
pub mod observation;
pub mod weights;

use std::sync::Arc;

use crate::dist::DistField;
use crate::grid::{Action, AgentId, GridMap};
use crate::instance::Instance;
use crate::pibt::{NodeContext, Preference, PreferenceProvider};
use crate::solution::Configuration;

pub use forward::{ForwardDetail, ForwardError, PolicyNet};
pub use graph::{build_comm_graph, CommGraph, Edge, Proximity};
pub use observation::{build_observation, ObservationTensor};
pub use weights::{load_weights, PolicyMeta, PolicyWeights, WeightsError};

/// Probabilities over `(stay, up, down, left, right)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution(pub [f64; 5]);

impl ActionDistribution {
    pub fn probability(&self, action: Action) -> f64 {
        self.0[action.index()]
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-6
    }
}

/// Feasible targets sorted by probability (descending), then cost-to-go
/// under `tiebreak`, then action order.
pub fn policy_preference(
    dist: &ActionDistribution,
    agent: AgentId,
    config: &Configuration,
    map: &GridMap,
    tiebreak: &DistField,
) -> Preference {
    let here = config[agent];
    let mut options: Vec<(f64, u32, usize, usize)> = Action::ALL
        .iter()
        .filter_map(|&a| {
            map.step(here, a)
                .map(|v| (dist.probability(a), tiebreak.get(v), a.index(), v))
        })
        .collect();
    options.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Preference {
        agent,
        candidates: options.into_iter().map(|o| o.3).collect(),
    }
}

/// Builds every agent's observation and the communication graph for one
/// configuration. Agent `i`'s goal field comes from the instance.
pub fn policy_inputs(
    instance: &Instance,
    config: &Configuration,
    meta: &PolicyMeta,
) -> (Vec<ObservationTensor>, CommGraph) {
    let map = instance.map();
    let occ = observation::Occupancy::new(map, config);
    let obs = (0..config.len())
        .map(|i| observation::build_observation_with(map, &occ, config, i, instance.dist(i), meta.r_obs))
        .collect();
    (obs, build_comm_graph(map, config, meta.r_comm, meta.proximity))
}

/// Action distributions for all agents of `config` in one batched pass.
pub fn evaluate(
    net: &PolicyNet,
    weights: &PolicyWeights,
    instance: &Instance,
    config: &Configuration,
) -> Vec<ActionDistribution> {
    let (obs, graph) = policy_inputs(instance, config, &weights.meta);
    net.forward(&obs, &graph)
        .expect("inputs built from the same metadata")
        .into_iter()
        .map(ActionDistribution)
        .collect()
}

/// Preference provider backed by the learned policy. One forward pass per
/// configuration; the result is kept until a different configuration is
/// prepared.
pub struct PolicyGuide {
    weights: Arc<PolicyWeights>,
    net: PolicyNet,
    cached: Option<(Configuration, Vec<ActionDistribution>)>,
    forward_passes: u64,
}

impl PolicyGuide {
    pub fn new(weights: Arc<PolicyWeights>) -> Self {
        let net = PolicyNet::new(&weights);
        PolicyGuide {
            weights,
            net,
            cached: None,
            forward_passes: 0,
        }
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes
    }

    fn distributions(&mut self, instance: &Instance, config: &Configuration) -> &[ActionDistribution] {
        let fresh = !matches!(&self.cached, Some((q, _)) if q == config);
        if fresh {
            let d = evaluate(&self.net, &self.weights, instance, config);
            self.forward_passes += 1;
            self.cached = Some((config.clone(), d));
        }
        &self.cached.as_ref().expect("just filled").1
    }
}

impl PreferenceProvider for PolicyGuide {
    fn prepare(&mut self, instance: &Instance, config: &Configuration, _ctx: &NodeContext) {
        self.distributions(instance, config);
    }

    fn preference(
        &mut self,
        instance: &Instance,
        agent: AgentId,
        config: &Configuration,
        _ctx: &NodeContext,
    ) -> Preference {
        let d = self.distributions(instance, config)[agent];
        policy_preference(&d, agent, config, instance.map(), instance.dist(agent))
    }
}
