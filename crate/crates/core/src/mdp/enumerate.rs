use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::TabularMdp;
use super::policy::Policy;
use crate::error::{Error, Result};
use crate::stopping::StopTime;

/// Default cap on the number of enumerated support entries.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 10_000_000;

/// A finite history: a full trajectory (`actions.len() == states.len()`) or
/// a prefix stopped at `s_tau` (`actions.len() == states.len() - 1`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Outcome {
    /// 1-based stop step, or `H + 1` for a full trajectory.
    pub fn tau(&self, horizon: usize) -> usize {
        if self.actions.len() == self.states.len() {
            horizon + 1
        } else {
            self.states.len()
        }
    }

    /// Cost accrued on the recorded actions.
    pub fn cost(&self, mdp: &TabularMdp) -> f64 {
        self.states.iter().zip(&self.actions).enumerate().map(|(h, (&s, &a))| mdp.cost(h, s, a)).sum()
    }
}

/// Exact law over finite histories, sorted by outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistribution {
    entries: Vec<(Outcome, f64)>,
}

impl TrajectoryDistribution {
    /// Merges duplicate outcomes and drops zero mass.
    pub fn from_entries(entries: impl IntoIterator<Item = (Outcome, f64)>) -> Self {
        let mut map: BTreeMap<Outcome, f64> = BTreeMap::new();
        for (o, p) in entries {
            if p > 0.0 {
                *map.entry(o).or_insert(0.0) += p;
            }
        }
        TrajectoryDistribution { entries: map.into_iter().collect() }
    }

    pub fn entries(&self) -> &[(Outcome, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn prob_of(&self, outcome: &Outcome) -> f64 {
        self.entries.binary_search_by(|(o, _)| o.cmp(outcome)).map_or(0.0, |i| self.entries[i].1)
    }

    pub fn expectation(&self, f: impl Fn(&Outcome) -> f64) -> f64 {
        self.entries.iter().map(|(o, p)| p * f(o)).sum()
    }

    /// Law of the state sequence alone.
    pub fn state_marginal(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut map = BTreeMap::new();
        for (o, p) in &self.entries {
            *map.entry(o.states.clone()).or_insert(0.0) += p;
        }
        map
    }

    /// Total variation between the state-sequence marginals.
    pub fn state_tv(&self, other: &TrajectoryDistribution) -> f64 {
        let (a, b) = (self.state_marginal(), other.state_marginal());
        let mut keys: Vec<&Vec<usize>> = a.keys().chain(b.keys()).collect();
        keys.sort();
        keys.dedup();
        0.5 * keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
    }

    /// Largest absolute probability difference over the union of supports.
    pub fn max_abs_diff(&self, other: &TrajectoryDistribution) -> f64 {
        let mut worst = 0.0f64;
        for (o, p) in &self.entries {
            worst = worst.max((p - other.prob_of(o)).abs());
        }
        for (o, q) in &other.entries {
            worst = worst.max((q - self.prob_of(o)).abs());
        }
        worst
    }

    /// Bhattacharyya affinity Σ √(P(T) Q(T)) over shared outcomes.
    pub fn affinity(&self, other: &TrajectoryDistribution) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += (self.entries[i].1 * other.entries[j].1).sqrt();
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// What happens once the stopping rule fires.
#[derive(Debug, Clone, Copy)]
pub enum Continuation<'a> {
    /// The history ends at `s_tau`.
    Truncate,
    /// Control passes to the given policy for the remaining steps.
    Switch(&'a Policy),
}

/// One support point of an enumerated law together with its stop step and
/// the cost accrued on its recorded actions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub outcome: Outcome,
    pub prob: f64,
    pub tau: usize,
    pub cost: f64,
}

struct Walker<'a> {
    mdp: &'a TabularMdp,
    base: &'a Policy,
    stop: &'a dyn StopTime,
    continuation: Continuation<'a>,
    budget: usize,
    out: Vec<WeightedPath>,
}

impl Walker<'_> {
    fn emit(&mut self, states: &[usize], actions: &[usize], prob: f64, tau: usize, cost: f64) -> Result<()> {
        if self.out.len() >= self.budget {
            return Err(Error::EnumerationTooLarge { budget: self.budget });
        }
        self.out.push(WeightedPath {
            outcome: Outcome { states: states.to_vec(), actions: actions.to_vec() },
            prob,
            tau,
            cost,
        });
        Ok(())
    }

    fn walk(&mut self, states: &mut Vec<usize>, actions: &mut Vec<usize>, prob: f64, mut tau: usize, cost: f64) -> Result<()> {
        let horizon = self.mdp.horizon();
        let h = states.len() - 1;
        let s = states[h];
        if tau > horizon && self.stop.first_trigger(states).is_some() {
            tau = h + 1;
        }
        let policy = match (tau <= horizon, self.continuation) {
            (false, _) => self.base,
            (true, Continuation::Switch(p)) => p,
            (true, Continuation::Truncate) => return self.emit(states, actions, prob, tau, cost),
        };
        let row = policy.row(h, s);
        for (a, &pa) in row.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            actions.push(a);
            let c = cost + self.mdp.cost(h, s, a);
            if h + 1 == horizon {
                self.emit(states, actions, prob * pa, tau, c)?;
            } else {
                for (next, &ps) in self.mdp.transition(h, s, a).iter().enumerate() {
                    if ps <= 0.0 {
                        continue;
                    }
                    states.push(next);
                    self.walk(states, actions, prob * pa * ps, tau, c)?;
                    states.pop();
                }
            }
            actions.pop();
        }
        Ok(())
    }
}

/// Enumerates every positive-probability history of `base` on `mdp` with
/// the given stopping rule and continuation.
pub fn enumerate_paths(
    mdp: &TabularMdp,
    base: &Policy,
    stop: &dyn StopTime,
    continuation: Continuation<'_>,
    budget: usize,
) -> Result<Vec<WeightedPath>> {
    base.check_shape(mdp)?;
    if let Continuation::Switch(p) = continuation {
        p.check_shape(mdp)?;
    }
    let mut walker = Walker { mdp, base, stop, continuation, budget, out: Vec::new() };
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 > 0.0 {
            walker.walk(&mut vec![s0], &mut Vec::new(), p0, mdp.horizon() + 1, 0.0)?;
        }
    }
    Ok(walker.out)
}

/// Exact law of `(mdp, policy)`, stopped by `stop_rule` when given.
pub fn enumerate_trajectory_distribution(
    mdp: &TabularMdp,
    policy: &Policy,
    stop_rule: Option<&dyn StopTime>,
) -> Result<TrajectoryDistribution> {
    enumerate_with_budget(mdp, policy, stop_rule, DEFAULT_ENUMERATION_BUDGET)
}

pub fn enumerate_with_budget(
    mdp: &TabularMdp,
    policy: &Policy,
    stop_rule: Option<&dyn StopTime>,
    budget: usize,
) -> Result<TrajectoryDistribution> {
    let never = crate::stopping::Never;
    let stop = stop_rule.unwrap_or(&never);
    let paths = enumerate_paths(mdp, policy, stop, Continuation::Truncate, budget)?;
    Ok(TrajectoryDistribution::from_entries(paths.into_iter().map(|p| (p.outcome, p.prob))))
}
