//! Random tabular suites: realizable, corrupted and off-policy variants.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::mdp::{enumerate_paths, Continuation, Policy, PolicyClass, TabularMdp, DEFAULT_ENUMERATION_BUDGET};
use crate::rng::{uniform, SeedStream};
use crate::stopping::Deviation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomParams {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub class_size: usize,
    /// Chance that each `(h, s)` entry of the demonstrator differs from the
    /// in-class expert.
    #[serde(default)]
    pub corruption: f64,
    /// Emit distinct source and target demonstrators.
    #[serde(default)]
    pub offpolicy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomTabular {
    pub source: TabularMdp,
    pub target: TabularMdp,
    pub class: PolicyClass,
    /// In-class policy the demonstrators are derived from.
    pub expert_id: usize,
    /// Labels the source data (and evaluates the target unless off-policy).
    pub demonstrator: Policy,
    /// Target-side demonstrator in off-policy mode.
    pub target_demonstrator: Option<Policy>,
    /// `min_π max{d_M(π), d_N(π)}` where `d_E(π)` is the chance that `π`
    /// deviates from the relevant demonstrator along its own trajectory.
    pub delta: f64,
}

fn random_row(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| uniform(rng) + 1e-3).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn random_mdp(p: &RandomParams, stream: SeedStream) -> Result<TabularMdp> {
    let mut rng = stream.rng();
    let init = random_row(p.states, &mut rng);
    let transitions = (0..p.horizon.saturating_sub(1))
        .map(|_| (0..p.states).map(|_| (0..p.actions).map(|_| random_row(p.states, &mut rng)).collect()).collect())
        .collect();
    let scale = 1.0 / p.horizon as f64;
    let costs = (0..p.horizon)
        .map(|_| (0..p.states).map(|_| (0..p.actions).map(|_| uniform(&mut rng) * scale).collect()).collect())
        .collect();
    TabularMdp::new(init, transitions, costs, 1.0)
}

fn random_table(p: &RandomParams, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    (0..p.horizon)
        .map(|_| (0..p.states).map(|_| ((uniform(rng) * p.actions as f64) as usize).min(p.actions - 1)).collect())
        .collect()
}

/// Replaces each entry with a different uniformly chosen action with
/// probability `rate`.
fn corrupt(table: &[Vec<usize>], actions: usize, rate: f64, stream: SeedStream) -> Vec<Vec<usize>> {
    let mut rng = stream.rng();
    table
        .iter()
        .map(|row| {
            row.iter()
                .map(|&a| {
                    let (u, v) = (uniform(&mut rng), uniform(&mut rng));
                    if actions > 1 && u < rate {
                        let shift = 1 + ((v * (actions - 1) as f64) as usize).min(actions - 2);
                        (a + shift) % actions
                    } else {
                        a
                    }
                })
                .collect()
        })
        .collect()
}

/// `Pr_{mdp, demonstrator}[π deviates from the demonstrator before H + 1]`.
pub fn deviation_probability(mdp: &TabularMdp, demonstrator: &Policy, policy: &Policy) -> Result<f64> {
    let stop = Deviation { a: policy, b: demonstrator };
    let paths = enumerate_paths(mdp, demonstrator, &stop, Continuation::Truncate, DEFAULT_ENUMERATION_BUDGET)?;
    Ok(paths.iter().filter(|p| p.tau <= mdp.horizon()).fold(0.0, |acc, p| acc + p.prob).clamp(0.0, 1.0))
}

pub fn make_random_tabular(p: &RandomParams, seed: u64) -> Result<RandomTabular> {
    if p.states < 1 || p.actions < 1 || p.horizon < 1 || p.class_size < 1 {
        return config("random tabular sizes must be positive");
    }
    if !(0.0..=1.0).contains(&p.corruption) {
        return config(format!("corruption must lie in [0,1], got {}", p.corruption));
    }
    let stream = SeedStream::new(seed).child("random_tabular");
    let source = random_mdp(p, stream.child("source"))?;
    let target = random_mdp(p, stream.child("target"))?;
    let mut rng = stream.child("class").rng();
    let tables: Vec<Vec<Vec<usize>>> = (0..p.class_size).map(|_| random_table(p, &mut rng)).collect();
    let expert_id = ((uniform(&mut stream.child("expert").rng()) * p.class_size as f64) as usize).min(p.class_size - 1);
    let class = PolicyClass::new(
        tables.iter().map(|t| Policy::deterministic(p.actions, t.clone())).collect::<Result<Vec<_>>>()?,
    )?;
    let demonstrator =
        Policy::deterministic(p.actions, corrupt(&tables[expert_id], p.actions, p.corruption, stream.child("corrupt_source")))?;
    let target_demonstrator = if p.offpolicy {
        Some(Policy::deterministic(
            p.actions,
            corrupt(&tables[expert_id], p.actions, p.corruption, stream.child("corrupt_target")),
        )?)
    } else {
        None
    };
    let target_demo = target_demonstrator.as_ref().unwrap_or(&demonstrator);
    let mut delta = f64::INFINITY;
    for pi in class.policies() {
        let worst = deviation_probability(&source, &demonstrator, pi)?.max(deviation_probability(&target, target_demo, pi)?);
        delta = delta.min(worst);
    }
    Ok(RandomTabular { source, target, class, expert_id, demonstrator, target_demonstrator, delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(corruption: f64, offpolicy: bool) -> RandomParams {
        RandomParams { states: 3, actions: 2, horizon: 3, class_size: 6, corruption, offpolicy }
    }

    #[test]
    fn realizable_has_zero_gap() {
        let b = make_random_tabular(&params(0.0, false), 5).unwrap();
        assert_eq!(b.class.policies()[b.expert_id], b.demonstrator);
        assert_eq!(b.delta, 0.0);
    }

    #[test]
    fn full_corruption_is_the_anti_expert() {
        let b = make_random_tabular(&params(1.0, false), 5).unwrap();
        let e = &b.class.policies()[b.expert_id];
        for h in 0..3 {
            for s in 0..3 {
                assert_ne!(e.action(h, s), b.demonstrator.action(h, s));
            }
        }
        assert_eq!(deviation_probability(&b.source, &b.demonstrator, e).unwrap(), 1.0);
    }

    #[test]
    fn offpolicy_mode_and_determinism() {
        let a = make_random_tabular(&params(0.3, true), 11).unwrap();
        assert!(a.target_demonstrator.is_some());
        assert!((0.0..=1.0).contains(&a.delta));
        assert_eq!(a, make_random_tabular(&params(0.3, true), 11).unwrap());
    }
}
