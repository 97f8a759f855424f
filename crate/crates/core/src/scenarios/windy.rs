//! Windy chain: a tabular stand-in for a shifted control task.
//!
//! States `0..length`, start at 0, goal `length - 1` absorbing. Action 0
//! steps back, action 1 steps forward. In the target environment a forward
//! move is pushed back one state with probability `wind`. Per-step cost is
//! the distance to the goal scaled so that a trajectory costs at most 1.
//!
//! The class holds a near-deterministic forward expert and perturbed copies
//! of it that give up (mostly step back) on "lagging" rows, states at least
//! `lag_min` behind where the expert would be by that step. Without wind
//! those rows are rarely reached, so source data barely separates the
//! perturbations from the expert; wind makes them common.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::mdp::{Policy, PolicyClass, TabularMdp};
use crate::rng::{uniform, SeedStream};

pub const BACK: usize = 0;
pub const FORWARD: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindyParams {
    pub length: usize,
    pub horizon: usize,
    pub wind: f64,
    pub class_size: usize,
    pub lag_min: usize,
    /// Forward probability of the expert on every row.
    pub expert_forward: f64,
    /// Forward probability of a perturbed row.
    pub lagging_forward: f64,
    /// Chance that a given lagging row is perturbed.
    pub perturb_prob: f64,
}

impl WindyParams {
    pub fn new(length: usize, horizon: usize, wind: f64) -> Self {
        WindyParams {
            length,
            horizon,
            wind,
            class_size: 32,
            lag_min: 3,
            expert_forward: 0.98,
            lagging_forward: 0.02,
            perturb_prob: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.length < 2 || self.horizon < 1 {
            return config("windy chain needs length >= 2 and horizon >= 1");
        }
        for (name, v) in [
            ("wind", self.wind),
            ("expert_forward", self.expert_forward),
            ("lagging_forward", self.lagging_forward),
            ("perturb_prob", self.perturb_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return config(format!("{name} must lie in [0,1], got {v}"));
            }
        }
        if self.class_size < 1 {
            return config("class_size must be at least 1");
        }
        Ok(())
    }

    /// Row `(h, s)` trails the expert's nominal position by `lag_min` or more.
    pub fn is_lagging(&self, h: usize, s: usize) -> bool {
        s + self.lag_min <= h.min(self.length - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindyChain {
    pub source: TabularMdp,
    pub target: TabularMdp,
    pub expert: Policy,
    pub expert_id: usize,
    pub class: PolicyClass,
}

/// Chain dynamics for a given wind.
pub fn windy_mdp(length: usize, horizon: usize, wind: f64) -> Result<TabularMdp> {
    if length < 2 || horizon < 1 {
        return config("windy chain needs length >= 2 and horizon >= 1");
    }
    let goal = length - 1;
    let kernel: Vec<Vec<Vec<f64>>> = (0..length)
        .map(|s| {
            let mut back = vec![0.0; length];
            let mut fwd = vec![0.0; length];
            if s == goal {
                back[goal] = 1.0;
                fwd[goal] = 1.0;
            } else {
                back[s.saturating_sub(1)] = 1.0;
                fwd[s + 1] += 1.0 - wind;
                fwd[s.saturating_sub(1)] += wind;
            }
            vec![back, fwd]
        })
        .collect();
    let scale = 1.0 / (goal as f64 * horizon as f64);
    let costs = (0..horizon)
        .map(|_| (0..length).map(|s| vec![(goal - s) as f64 * scale; 2]).collect())
        .collect();
    let mut init = vec![0.0; length];
    init[0] = 1.0;
    TabularMdp::new(init, vec![kernel; horizon - 1], costs, 1.0)
}

fn forward_policy(params: &WindyParams, forward: impl Fn(usize, usize) -> f64) -> Result<Policy> {
    let table = (0..params.horizon)
        .map(|h| {
            (0..params.length)
                .map(|s| {
                    let p = forward(h, s);
                    vec![1.0 - p, p]
                })
                .collect()
        })
        .collect();
    Policy::stochastic(table)
}

/// Source (no wind), target (given wind), expert and class.
pub fn make_windy_chain(params: &WindyParams, seed: u64) -> Result<WindyChain> {
    params.validate()?;
    let source = windy_mdp(params.length, params.horizon, 0.0)?;
    let target = windy_mdp(params.length, params.horizon, params.wind)?;
    let expert = forward_policy(params, |_, _| params.expert_forward)?;
    let stream = SeedStream::new(seed).child("windy");
    let mut rng = stream.child("expert_id").rng();
    let expert_id = ((uniform(&mut rng) * params.class_size as f64) as usize).min(params.class_size - 1);
    let mut policies = Vec::with_capacity(params.class_size);
    for i in 0..params.class_size {
        if i == expert_id {
            policies.push(expert.clone());
            continue;
        }
        let mut rng = stream.child("perturbation").index(i as u64).rng();
        let mut flags = vec![vec![false; params.length]; params.horizon];
        for (h, row) in flags.iter_mut().enumerate() {
            for (s, f) in row.iter_mut().enumerate() {
                // Draw for every row so the stream layout is shape-only.
                let u = uniform(&mut rng);
                *f = params.is_lagging(h, s) && u < params.perturb_prob;
            }
        }
        policies.push(forward_policy(params, |h, s| {
            if flags[h][s] {
                params.lagging_forward
            } else {
                params.expert_forward
            }
        })?);
    }
    Ok(WindyChain { source, target, expert, expert_id, class: PolicyClass::new(policies)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::enumerate_trajectory_distribution;

    #[test]
    fn no_wind_is_no_shift() {
        let w = make_windy_chain(&WindyParams::new(4, 5, 0.0), 1).unwrap();
        assert_eq!(w.source, w.target);
        assert_eq!(w.class.policies()[w.expert_id], w.expert);
    }

    #[test]
    fn full_wind_hurts_the_expert() {
        let w = make_windy_chain(&WindyParams::new(4, 5, 1.0), 1).unwrap();
        let cost = |m: &TabularMdp| {
            enumerate_trajectory_distribution(m, &w.expert, None).unwrap().expectation(|o| o.cost(m))
        };
        assert!(cost(&w.target) > cost(&w.source));
        assert_eq!(w.source.cost_cap(), 1.0);
        assert!(w.source.max_trajectory_cost() <= 1.0 + 1e-12);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = WindyParams::new(6, 8, 0.3);
        assert_eq!(make_windy_chain(&p, 7).unwrap(), make_windy_chain(&p, 7).unwrap());
    }

    #[test]
    fn lagging_rows() {
        let p = WindyParams::new(6, 8, 0.3);
        assert!(!p.is_lagging(2, 0));
        assert!(p.is_lagging(3, 0));
        assert!(p.is_lagging(7, 2));
        assert!(!p.is_lagging(7, 3));
    }
}
