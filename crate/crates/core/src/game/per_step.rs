use serde::{Deserialize, Serialize};

use super::distribution::ValidatorDistribution;
use super::hedge::{ceil_tol, sparse_validator_dist, NoRegretConfig};
use super::version_space::{exact_version_space, require_deterministic, step_version_space};
use crate::error::{config, Error, Result};
use crate::mdp::{PolicyClass, Trajectory};
use crate::rng::SeedStream;
use crate::stopping::{StoppingMode, StoppingRule};

/// Seed for the committee game at step index `step` (0 for trajectory-level
/// fits), so a one-step per-step fit replays the trajectory-level one.
pub(crate) fn game_seed(seed: u64, step: usize) -> u64 {
    SeedStream::new(seed).child("game").index(step as u64).key()
}

pub(crate) fn ensemble_stream(seed: u64, step: usize) -> SeedStream {
    SeedStream::new(seed).child("ensemble").index(step as u64)
}

/// Ensemble size `⌈log₂(c/δ)⌉`.
pub fn ensemble_draws(c: f64, delta: f64) -> usize {
    ceil_tol((c / delta).log2()).max(1)
}

/// Per-step committees built from step-wise version spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStepSelectors {
    pub base_id: usize,
    /// Committee consulted at each step, sorted and deduplicated.
    pub committees: Vec<Vec<usize>>,
    pub distributions: Vec<ValidatorDistribution>,
    pub draws_per_step: usize,
    pub step_space_sizes: Vec<usize>,
}

impl PerStepSelectors {
    pub fn rule(&self) -> StoppingRule {
        StoppingRule::per_step(self.base_id, self.committees.clone(), StoppingMode::FirstDisagreement)
    }
}

/// Treats each step as its own one-step problem: the step-h space keeps
/// policies that match the recorded actions at step h, and its game runs
/// on the step-h test states. Each step uses confidence `δ/H`, split as in
/// the trajectory-level fit (`δ/(5H)` for the game, `⌈log₂(5H/δ)⌉` draws).
pub fn per_step_selectors(
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    rho: f64,
    xi: f64,
    delta: f64,
    cfg: &NoRegretConfig,
) -> Result<PerStepSelectors> {
    require_deterministic(class)?;
    if !(delta > 0.0 && delta < 1.0) {
        return config(format!("delta must lie in (0,1), got {delta}"));
    }
    let horizon = class.horizon();
    let base_id = exact_version_space(class, train)?.member_ids[0];
    let step_delta = delta / horizon as f64;
    let draws = ensemble_draws(5.0, step_delta);
    let mut committees = Vec::with_capacity(horizon);
    let mut distributions = Vec::with_capacity(horizon);
    let mut sizes = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let space = step_version_space(class, train, h)?;
        // One-step view of the class: step h's rows only.
        let step_class = PolicyClass::new(
            class
                .policies()
                .iter()
                .map(|p| {
                    let row = (0..class.num_states()).map(|s| p.action(h, s).expect("deterministic")).collect();
                    crate::mdp::Policy::deterministic(class.num_actions(), vec![row])
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let step_test: Vec<Trajectory> = test
            .iter()
            .map(|t| {
                t.states
                    .get(h)
                    .map(|&s| Trajectory::unlabeled(vec![s]))
                    .ok_or_else(|| Error::Validation("test trajectory shorter than the horizon".into()))
            })
            .collect::<Result<_>>()?;
        let step_cfg = NoRegretConfig { seed: game_seed(cfg.seed, h), ..*cfg };
        let dist = sparse_validator_dist(
            &space,
            base_id,
            &step_test,
            rho,
            xi,
            step_delta / 5.0,
            StoppingMode::FirstDisagreement,
            &step_class,
            &step_cfg,
        )?;
        let union = dist.draw_union(draws, ensemble_stream(cfg.seed, h));
        committees.push(union);
        distributions.push(dist);
        sizes.push(space.len());
    }
    Ok(PerStepSelectors { base_id, committees, distributions, draws_per_step: draws, step_space_sizes: sizes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_arithmetic() {
        assert_eq!(ensemble_draws(5.0, 0.625), 3);
        assert_eq!(ensemble_draws(5.0, 0.2), 5);
        assert_eq!(ensemble_draws(4.0, 0.25), 4);
    }
}
