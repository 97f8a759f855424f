use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{log_loss, PolicyClass, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VersionSpaceKind {
    ExactConsistency,
    LogLossBall { gamma: f64, base_loss: f64 },
}

/// Subset of a policy class retained by the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionSpace {
    /// Sorted class ids.
    pub member_ids: Vec<usize>,
    pub kind: VersionSpaceKind,
}

impl VersionSpace {
    pub fn contains(&self, id: usize) -> bool {
        self.member_ids.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    /// The whole class, as if no data had been seen.
    pub fn full(class: &PolicyClass) -> Self {
        VersionSpace { member_ids: (0..class.len()).collect(), kind: VersionSpaceKind::ExactConsistency }
    }
}

fn labels(t: &Trajectory) -> Result<&[usize]> {
    t.actions.as_deref().ok_or(Error::MissingActions)
}

pub(crate) fn require_deterministic(class: &PolicyClass) -> Result<()> {
    if !class.is_deterministic() {
        return invalid("operation needs a deterministic policy class");
    }
    Ok(())
}

pub(crate) fn require_stochastic(class: &PolicyClass) -> Result<()> {
    if class.is_deterministic() {
        return invalid("operation needs a stochastic policy class");
    }
    Ok(())
}

fn consistent(class: &PolicyClass, id: usize, train: &[Trajectory], step: Option<usize>) -> Result<bool> {
    let p = &class.policies()[id];
    for t in train {
        let a = labels(t)?;
        for (h, (&s, &act)) in t.states.iter().zip(a).enumerate() {
            if step.is_some_and(|k| k != h) {
                continue;
            }
            if p.action(h, s) != Some(act) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Ids agreeing with every recorded `(h, s, a)`.
pub fn exact_version_space(class: &PolicyClass, train: &[Trajectory]) -> Result<VersionSpace> {
    require_deterministic(class)?;
    let mut ids = Vec::new();
    for id in 0..class.len() {
        if consistent(class, id, train, None)? {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(Error::Realizability("no policy agrees with every recorded action".into()));
    }
    Ok(VersionSpace { member_ids: ids, kind: VersionSpaceKind::ExactConsistency })
}

/// Ids agreeing with the recorded actions at step `h` only.
pub fn step_version_space(class: &PolicyClass, train: &[Trajectory], h: usize) -> Result<VersionSpace> {
    require_deterministic(class)?;
    let mut ids = Vec::new();
    for id in 0..class.len() {
        if consistent(class, id, train, Some(h))? {
            ids.push(id);
        }
    }
    if ids.is_empty() {
        return Err(Error::Realizability(format!("no policy agrees with the recorded actions at step {}", h + 1)));
    }
    Ok(VersionSpace { member_ids: ids, kind: VersionSpaceKind::ExactConsistency })
}

/// Log-loss of every member, in id order.
pub fn class_log_losses(class: &PolicyClass, train: &[Trajectory]) -> Result<Vec<f64>> {
    class.policies().iter().map(|p| log_loss(p, train)).collect()
}

/// Loss minimizer; ties go to the smallest id.
pub fn mle_policy(class: &PolicyClass, train: &[Trajectory]) -> Result<usize> {
    require_stochastic(class)?;
    argmin_finite(&class_log_losses(class, train)?)
}

fn argmin_finite(losses: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if l.is_finite() && best.map_or(true, |b| l < losses[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::NoSupport)
}

/// Ids whose loss is within `gamma` of the minimum. Infinite-loss policies
/// are always excluded; `gamma = +inf` keeps every finite-loss policy.
pub fn logloss_version_space(class: &PolicyClass, train: &[Trajectory], gamma: f64) -> Result<VersionSpace> {
    require_stochastic(class)?;
    if gamma.is_nan() || gamma < 0.0 {
        return invalid(format!("gamma must be nonnegative, got {gamma}"));
    }
    let losses = class_log_losses(class, train)?;
    let base = argmin_finite(&losses)?;
    let base_loss = losses[base];
    let member_ids = losses
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.is_finite() && l <= base_loss + gamma)
        .map(|(i, _)| i)
        .collect();
    Ok(VersionSpace { member_ids, kind: VersionSpaceKind::LogLossBall { gamma, base_loss } })
}

/// Fraction of training trajectories on which the policy departs from the
/// recorded actions at some step.
pub fn empirical_disagreement_rate(policy: usize, train: &[Trajectory], class: &PolicyClass) -> Result<f64> {
    require_deterministic(class)?;
    if train.is_empty() {
        return Err(Error::EmptyInput("disagreement rate needs training data".into()));
    }
    let p = class.get(policy)?;
    let mut bad = 0usize;
    for t in train {
        let a = labels(t)?;
        if t.states.iter().zip(a).enumerate().any(|(h, (&s, &act))| p.action(h, s) != Some(act)) {
            bad += 1;
        }
    }
    Ok(bad as f64 / train.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Policy;
    use crate::scenarios::desk::{desk_class, R};

    fn expert_traj() -> Trajectory {
        Trajectory::labeled(vec![0, 1], vec![R, R])
    }

    #[test]
    fn exact_space_examples() {
        let class = desk_class();
        assert_eq!(exact_version_space(&class, &[]).unwrap().member_ids, vec![0, 1, 2]);
        assert_eq!(exact_version_space(&class, &[expert_traj()]).unwrap().member_ids, vec![0]);
        let only_l = PolicyClass::new(vec![class.policies()[1].clone()]).unwrap();
        assert!(matches!(exact_version_space(&only_l, &[expert_traj()]), Err(Error::Realizability(_))));
        assert!(exact_version_space(&class, &[expert_traj().strip()]).is_err());
    }

    fn bernoulli_class() -> PolicyClass {
        PolicyClass::new(vec![
            Policy::uniform_row(2, 2, vec![0.1, 0.9]).unwrap(),
            Policy::uniform_row(2, 2, vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn mle_and_ball() {
        let class = bernoulli_class();
        let data = vec![expert_traj(); 10];
        assert_eq!(mle_policy(&class, &data).unwrap(), 0);
        // Per-trajectory losses: 2·(−ln 0.9) ≈ 0.2107 and 2·ln 2 ≈ 1.3863.
        let gap = 2.0 * 2f64.ln() + 2.0 * 0.9f64.ln();
        assert!((gap - 1.175_573).abs() < 1e-6);
        assert_eq!(logloss_version_space(&class, &data, 1.0).unwrap().member_ids, vec![0]);
        assert_eq!(logloss_version_space(&class, &data, 1.2).unwrap().member_ids, vec![0, 1]);
        assert_eq!(logloss_version_space(&class, &data, 0.0).unwrap().member_ids, vec![0]);
        let twin = PolicyClass::new(vec![class.policies()[1].clone(), class.policies()[1].clone()]).unwrap();
        assert_eq!(mle_policy(&twin, &data).unwrap(), 0);
        assert_eq!(logloss_version_space(&twin, &data, 0.0).unwrap().member_ids, vec![0, 1]);
    }

    #[test]
    fn infinite_losses() {
        let class = PolicyClass::new(vec![
            Policy::uniform_row(2, 2, vec![1.0, 0.0]).unwrap(),
            Policy::uniform_row(2, 2, vec![0.5, 0.5]).unwrap(),
        ])
        .unwrap();
        let data = vec![expert_traj()];
        let ball = logloss_version_space(&class, &data, f64::INFINITY).unwrap();
        assert_eq!(ball.member_ids, vec![1]);
        let dead = PolicyClass::new(vec![class.policies()[0].clone()]).unwrap();
        assert!(matches!(mle_policy(&dead, &data), Err(Error::NoSupport)));
    }

    #[test]
    fn disagreement_rates() {
        let class = desk_class();
        let data = vec![expert_traj()];
        assert_eq!(empirical_disagreement_rate(0, &data, &class).unwrap(), 0.0);
        assert_eq!(empirical_disagreement_rate(1, &data, &class).unwrap(), 1.0);
        assert_eq!(empirical_disagreement_rate(2, &data, &class).unwrap(), 1.0);
        assert!(empirical_disagreement_rate(0, &[expert_traj().strip()], &class).is_err());
    }
}
