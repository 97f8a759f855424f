//! Environment and policy-class generators.

pub mod chain;
pub mod desk;
pub mod pq;
pub mod random;
pub mod windy;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::mdp::{Policy, PolicyClass, TabularMdp};

pub use chain::{flipped_forward_class, slip_chain};
pub use pq::{make_pq_lower_bound, PqInstance};
pub use random::{deviation_probability, make_random_tabular, RandomParams, RandomTabular};
pub use windy::{make_windy_chain, windy_mdp, WindyChain, WindyParams};

/// A scenario family with its parameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    WindyChain {
        #[serde(flatten)]
        params: WindyParams,
        seed: u64,
    },
    RandomTabular {
        #[serde(flatten)]
        params: RandomParams,
        seed: u64,
    },
    /// Random tabular suite with distinct source and target demonstrators.
    OffPolicyPair {
        states: usize,
        actions: usize,
        horizon: usize,
        class_size: usize,
        corruption: f64,
        seed: u64,
    },
    PqLowerBound {
        d: usize,
        epsilon: f64,
        #[serde(default)]
        delta: Option<f64>,
        seed: u64,
    },
    /// The two-state reference chain; the target pushes R back with
    /// probability `wind`.
    Desk {
        #[serde(default)]
        wind: f64,
    },
}

/// Everything needed to sample data, fit and evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub source: TabularMdp,
    pub target: TabularMdp,
    pub class: PolicyClass,
    /// Labels source demonstrations.
    pub demonstrator: Policy,
    /// Takes over after a handoff in the target.
    pub expert: Policy,
    /// Family-specific extras (expert id, misspecification gaps, ...).
    pub info: Value,
}

impl ScenarioSpec {
    pub fn generate(&self) -> Result<ScenarioBundle> {
        match self {
            ScenarioSpec::WindyChain { params, seed } => {
                let w = make_windy_chain(params, *seed)?;
                Ok(ScenarioBundle {
                    source: w.source,
                    target: w.target,
                    class: w.class,
                    demonstrator: w.expert.clone(),
                    expert: w.expert,
                    info: json!({ "expert_id": w.expert_id }),
                })
            }
            ScenarioSpec::RandomTabular { params, seed } => Ok(random_bundle(make_random_tabular(params, *seed)?)),
            ScenarioSpec::OffPolicyPair { states, actions, horizon, class_size, corruption, seed } => {
                let params = RandomParams {
                    states: *states,
                    actions: *actions,
                    horizon: *horizon,
                    class_size: *class_size,
                    corruption: *corruption,
                    offpolicy: true,
                };
                Ok(random_bundle(make_random_tabular(&params, *seed)?))
            }
            ScenarioSpec::PqLowerBound { d, epsilon, delta, seed } => {
                let p = make_pq_lower_bound(*d, *epsilon, *delta, *seed)?;
                let expert = p.class.policies()[p.expert_id].clone();
                Ok(ScenarioBundle {
                    info: json!({ "expert_id": p.expert_id, "num_states": p.num_states, "Delta": p.delta,
                                  "expert_sigma": p.sigmas[p.expert_id] }),
                    source: p.source,
                    target: p.target,
                    class: p.class,
                    demonstrator: expert.clone(),
                    expert,
                })
            }
            ScenarioSpec::Desk { wind } => Ok(ScenarioBundle {
                source: desk::desk_chain(),
                target: desk::desk_chain_windy(*wind),
                class: desk::desk_class(),
                demonstrator: desk::always_r(),
                expert: desk::always_r(),
                info: json!({ "expert_id": 0 }),
            }),
        }
    }
}

fn random_bundle(b: RandomTabular) -> ScenarioBundle {
    let offpolicy = b.target_demonstrator.is_some();
    let expert = b.target_demonstrator.clone().unwrap_or_else(|| b.demonstrator.clone());
    let gap = if offpolicy { "delta_off" } else { "delta" };
    ScenarioBundle {
        info: json!({ "expert_id": b.expert_id, gap: b.delta }),
        source: b.source,
        target: b.target,
        class: b.class,
        demonstrator: b.demonstrator,
        expert,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_roundtrip() {
        let text = r#"{"family":"windy_chain","length":4,"horizon":5,"wind":0.4,"class_size":8,"lag_min":2,
            "expert_forward":0.98,"lagging_forward":0.02,"perturb_prob":0.5,"seed":3}"#;
        let spec: ScenarioSpec = serde_json::from_str(text).unwrap();
        let again: ScenarioSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again);
        assert_eq!(spec.generate().unwrap(), again.generate().unwrap());
        let desk: ScenarioSpec = serde_json::from_str(r#"{"family":"desk","wind":0.5}"#).unwrap();
        assert_eq!(desk.generate().unwrap().class.len(), 3);
    }
}
