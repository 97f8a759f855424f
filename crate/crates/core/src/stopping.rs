//! Validator-induced stopping times and selective execution.
//!
//! Stopping rules read only the pre-action state prefix: whether the rule
//! has fired by step `h` is a function of `s_1..s_h`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::enumerate::Outcome;
use crate::mdp::trajectory::simulate;
use crate::mdp::{Policy, PolicyClass, TabularMdp, Trajectory};
use crate::rng::SeedStream;

/// A stopping time over state prefixes.
pub trait StopTime: Sync {
    /// 1-based step at which the rule fires on `states` (any prefix length),
    /// or `None` if it has not fired within the prefix.
    fn first_trigger(&self, states: &[usize]) -> Option<usize>;

    /// Stop time of a full state trajectory, `H + 1` when the rule never fires.
    fn stop_time(&self, states: &[usize]) -> usize {
        self.first_trigger(states).unwrap_or(states.len() + 1)
    }
}

/// τ ≡ H + 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct Never;

impl StopTime for Never {
    fn first_trigger(&self, _: &[usize]) -> Option<usize> {
        None
    }
}

/// τ ≡ k (1-based).
#[derive(Debug, Clone, Copy)]
pub struct AtStep(pub usize);

impl StopTime for AtStep {
    fn first_trigger(&self, states: &[usize]) -> Option<usize> {
        (self.0 >= 1 && states.len() >= self.0).then_some(self.0)
    }
}

/// First step at which two policies act differently.
#[derive(Debug, Clone, Copy)]
pub struct Deviation<'a> {
    pub a: &'a Policy,
    pub b: &'a Policy,
}

impl StopTime for Deviation<'_> {
    fn first_trigger(&self, states: &[usize]) -> Option<usize> {
        states.iter().enumerate().find(|(h, &s)| self.a.disagrees(self.b, *h, s)).map(|(h, _)| h + 1)
    }
}

/// Pointwise minimum of several stopping times.
pub struct Earliest<'a>(pub Vec<&'a dyn StopTime>);

impl StopTime for Earliest<'_> {
    fn first_trigger(&self, states: &[usize]) -> Option<usize> {
        self.0.iter().filter_map(|r| r.first_trigger(states)).min()
    }
}

/// Stopping time given by a closure.
pub struct FnStop<F>(pub F);

impl<F: Fn(&[usize]) -> Option<usize> + Sync> StopTime for FnStop<F> {
    fn first_trigger(&self, states: &[usize]) -> Option<usize> {
        (self.0)(states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingMode {
    /// Stop at the first step where some validator's action differs from
    /// the base's.
    FirstDisagreement,
    /// Stop at the first step where some single validator's cumulative
    /// squared Hellinger distance to the base strictly exceeds θ.
    Hellinger(f64),
}

/// Validator-induced stopping rule over ids of a policy class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub base_id: usize,
    pub validator_ids: Vec<usize>,
    pub mode: StoppingMode,
    /// Per-step committees: when present, only `step_validator_ids[h]` is
    /// consulted at step `h` and `validator_ids` is ignored. In Hellinger
    /// mode each step is then judged on its own distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_validator_ids: Option<Vec<Vec<usize>>>,
}

impl StoppingRule {
    pub fn new(base_id: usize, validator_ids: Vec<usize>, mode: StoppingMode) -> Self {
        StoppingRule { base_id, validator_ids, mode, step_validator_ids: None }
    }

    pub fn per_step(base_id: usize, committees: Vec<Vec<usize>>, mode: StoppingMode) -> Self {
        StoppingRule { base_id, validator_ids: Vec::new(), mode, step_validator_ids: Some(committees) }
    }

    pub fn validate(&self, class: &PolicyClass) -> Result<()> {
        class.get(self.base_id)?;
        if let StoppingMode::Hellinger(theta) = self.mode {
            if !(theta > 0.0) {
                return invalid(format!("theta must be positive, got {theta}"));
            }
        }
        for &v in &self.validator_ids {
            class.get(v)?;
        }
        if let Some(steps) = &self.step_validator_ids {
            if steps.len() != class.horizon() {
                return invalid("per-step committees must cover every step");
            }
            for &v in steps.iter().flatten() {
                class.get(v)?;
            }
        }
        Ok(())
    }

    /// Every validator id referenced by the rule, sorted and deduplicated.
    pub fn all_validators(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = match &self.step_validator_ids {
            Some(steps) => steps.iter().flatten().copied().collect(),
            None => self.validator_ids.clone(),
        };
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn bind<'a>(&'a self, class: &'a PolicyClass) -> Result<BoundRule<'a>> {
        self.validate(class)?;
        Ok(BoundRule { rule: self, class })
    }
}

/// A stopping rule resolved against its policy class.
#[derive(Debug, Clone, Copy)]
pub struct BoundRule<'a> {
    rule: &'a StoppingRule,
    class: &'a PolicyClass,
}

impl BoundRule<'_> {
    fn policy(&self, id: usize) -> &Policy {
        &self.class.policies()[id]
    }
}

impl StopTime for BoundRule<'_> {
    fn first_trigger(&self, states: &[usize]) -> Option<usize> {
        let base = self.policy(self.rule.base_id);
        match (&self.rule.step_validator_ids, self.rule.mode) {
            (Some(steps), StoppingMode::FirstDisagreement) => states
                .iter()
                .enumerate()
                .find(|(h, &s)| steps[*h].iter().any(|&v| self.policy(v).disagrees(base, *h, s)))
                .map(|(h, _)| h + 1),
            (Some(steps), StoppingMode::Hellinger(theta)) => states
                .iter()
                .enumerate()
                .find(|(h, &s)| steps[*h].iter().any(|&v| self.policy(v).step_hellinger_sq(base, *h, s) > theta))
                .map(|(h, _)| h + 1),
            (None, StoppingMode::FirstDisagreement) => states
                .iter()
                .enumerate()
                .find(|(h, &s)| self.rule.validator_ids.iter().any(|&v| self.policy(v).disagrees(base, *h, s)))
                .map(|(h, _)| h + 1),
            (None, StoppingMode::Hellinger(theta)) => {
                let mut budgets = vec![0.0f64; self.rule.validator_ids.len()];
                for (h, &s) in states.iter().enumerate() {
                    for (b, &v) in budgets.iter_mut().zip(&self.rule.validator_ids) {
                        *b += self.policy(v).step_hellinger_sq(base, h, s);
                        if *b > theta {
                            return Some(h + 1);
                        }
                    }
                }
                None
            }
        }
    }
}

/// Stop time of a full state trajectory under `rule`.
pub fn stop_time(rule: &StoppingRule, class: &PolicyClass, state_traj: &[usize]) -> Result<usize> {
    if state_traj.len() != class.horizon() {
        return invalid(format!("state trajectory has length {}, horizon is {}", state_traj.len(), class.horizon()));
    }
    Ok(rule.bind(class)?.stop_time(state_traj))
}

/// Base policy paired with its stopping rule. Serializes as the rule; the
/// base is recovered from the class on load.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectivePolicy {
    base: Policy,
    rule: StoppingRule,
}

impl SelectivePolicy {
    pub fn new(rule: StoppingRule, class: &PolicyClass) -> Result<Self> {
        rule.validate(class)?;
        Ok(SelectivePolicy { base: class.policies()[rule.base_id].clone(), rule })
    }

    pub fn base(&self) -> &Policy {
        &self.base
    }

    pub fn rule(&self) -> &StoppingRule {
        &self.rule
    }

    pub fn with_mode(&self, mode: StoppingMode) -> Self {
        SelectivePolicy { base: self.base.clone(), rule: StoppingRule { mode, ..self.rule.clone() } }
    }

    pub fn from_json(text: &str, class: &PolicyClass) -> Result<Self> {
        SelectivePolicy::new(serde_json::from_str(text)?, class)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rule).expect("rule serializes")
    }
}

/// Outcome of a selective rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveRun {
    /// History ending at `s_tau` (or the full trajectory when τ = H + 1).
    pub prefix: Outcome,
    pub tau: usize,
    pub stopped_cost: f64,
}

/// Outcome of a switched rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedRun {
    pub trajectory: Trajectory,
    pub tau: usize,
    pub full_cost: f64,
}

fn check(mdp: &TabularMdp, sel: &SelectivePolicy, class: &PolicyClass) -> Result<()> {
    sel.base.check_shape(mdp)?;
    class.check_shape(mdp)?;
    if class.policies()[sel.rule.base_id] != sel.base {
        return Err(Error::Config("selective base differs from the class member it names".into()));
    }
    Ok(())
}

/// Runs the base policy until the rule fires; cost stops accruing at τ.
pub fn run_selective(mdp: &TabularMdp, sel: &SelectivePolicy, class: &PolicyClass, seed: u64) -> Result<SelectiveRun> {
    check(mdp, sel, class)?;
    let rule = sel.rule.bind(class)?;
    let r = simulate(mdp, &sel.base, None, &|p| rule.first_trigger(p).is_some(), &mut SeedStream::new(seed).rng());
    Ok(SelectiveRun { prefix: Outcome { states: r.states, actions: r.actions }, tau: r.tau, stopped_cost: r.cost })
}

/// Runs the base policy before τ and the expert from τ on.
pub fn run_switched(
    mdp: &TabularMdp,
    sel: &SelectivePolicy,
    expert: &Policy,
    class: &PolicyClass,
    seed: u64,
) -> Result<SwitchedRun> {
    check(mdp, sel, class)?;
    expert.check_shape(mdp)?;
    let rule = sel.rule.bind(class)?;
    let r = simulate(mdp, &sel.base, Some(expert), &|p| rule.first_trigger(p).is_some(), &mut SeedStream::new(seed).rng());
    Ok(SwitchedRun { trajectory: Trajectory::labeled(r.states, r.actions), tau: r.tau, full_cost: r.cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::{desk_chain, desk_class, L, R};

    #[test]
    fn desk_examples() {
        let class = desk_class();
        let rule = StoppingRule::new(0, vec![1], StoppingMode::FirstDisagreement);
        assert_eq!(stop_time(&rule, &class, &[0, 1]).unwrap(), 1);
        let empty = StoppingRule::new(0, vec![], StoppingMode::FirstDisagreement);
        assert_eq!(stop_time(&empty, &class, &[0, 1]).unwrap(), 3);
        let own = StoppingRule::new(0, vec![0], StoppingMode::Hellinger(0.5));
        assert_eq!(stop_time(&own, &class, &[0, 0]).unwrap(), 3);
        assert!(stop_time(&rule, &class, &[0]).is_err());
    }

    #[test]
    fn selective_and_switched_desk() {
        let m = desk_chain();
        let class = desk_class();
        let sel = SelectivePolicy::new(StoppingRule::new(0, vec![1], StoppingMode::FirstDisagreement), &class).unwrap();
        let run = run_selective(&m, &sel, &class, 9).unwrap();
        assert_eq!((run.tau, run.stopped_cost), (1, 0.0));
        assert_eq!(run.prefix, Outcome { states: vec![0], actions: vec![] });

        let sw = SelectivePolicy::new(StoppingRule::new(1, vec![0], StoppingMode::FirstDisagreement), &class).unwrap();
        let expert = Policy::constant(2, 2, 2, R).unwrap();
        let out = run_switched(&m, &sw, &expert, &class, 4).unwrap();
        assert_eq!(out.tau, 1);
        assert_eq!(out.full_cost, 1.0);
        assert_eq!(out.trajectory, Trajectory::labeled(vec![0, 1], vec![R, R]));

        let never = SelectivePolicy::new(StoppingRule::new(1, vec![], StoppingMode::FirstDisagreement), &class).unwrap();
        let full = run_selective(&m, &never, &class, 4).unwrap();
        assert_eq!((full.tau, full.stopped_cost), (3, 2.0));
        assert_eq!(full.prefix.actions, vec![L, L]);
    }

    #[test]
    fn rule_json_format() {
        let r = StoppingRule::new(2, vec![0, 1], StoppingMode::Hellinger(0.5));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"base_id":2,"validator_ids":[0,1],"mode":{"hellinger":0.5}}"#
        );
        let d: StoppingRule =
            serde_json::from_str(r#"{"base_id":0,"validator_ids":[],"mode":"first_disagreement"}"#).unwrap();
        assert_eq!(d.mode, StoppingMode::FirstDisagreement);
        assert!(StoppingRule::new(0, vec![], StoppingMode::Hellinger(0.0)).validate(&desk_class()).is_err());
    }

    #[test]
    fn hellinger_budget_is_strict_and_per_validator() {
        let a = Policy::uniform_row(3, 1, vec![1.0, 0.0]).unwrap();
        let b = Policy::uniform_row(3, 1, vec![0.5, 0.5]).unwrap();
        let class = PolicyClass::new(vec![a, b.clone(), b]).unwrap();
        let step = 1.0 - 0.5f64.sqrt();
        let at = |theta: f64, v: Vec<usize>| stop_time(&StoppingRule::new(0, v, StoppingMode::Hellinger(theta)), &class, &[0, 0, 0]).unwrap();
        assert_eq!(at(step * 0.999, vec![1]), 1);
        assert_eq!(at(2.0 * step - 1e-12, vec![1]), 2);
        assert_eq!(at(3.0 * step + 1e-9, vec![1]), 4);
        // Two validators do not pool their budgets.
        assert_eq!(at(1.5 * step, vec![1, 2]), 2);
    }
}
