use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::TabularMdp;
use super::policy::Policy;
use crate::error::{invalid, Error, Result};
use crate::rng::{categorical, uniform, SeedStream};

/// A full-horizon rollout; `actions` is absent for unlabeled data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
}

impl Trajectory {
    pub fn labeled(states: Vec<usize>, actions: Vec<usize>) -> Self {
        Trajectory { states, actions: Some(actions) }
    }

    pub fn unlabeled(states: Vec<usize>) -> Self {
        Trajectory { states, actions: None }
    }

    /// Drops the actions.
    pub fn strip(&self) -> Self {
        Trajectory { states: self.states.clone(), actions: None }
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.states.len() != mdp.horizon() {
            return invalid(format!("trajectory has {} states, horizon is {}", self.states.len(), mdp.horizon()));
        }
        if self.states.iter().any(|&s| s >= mdp.num_states()) {
            return invalid("state index out of range");
        }
        if let Some(a) = &self.actions {
            if a.len() != mdp.horizon() || a.iter().any(|&x| x >= mdp.num_actions()) {
                return invalid("action sequence has the wrong length or an out-of-range index");
            }
        }
        Ok(())
    }
}

/// Sum of costs over steps `1..tau` (1-based), i.e. 0-based steps `< tau - 1`.
pub fn prefix_cost(mdp: &TabularMdp, traj: &Trajectory, tau: usize) -> Result<f64> {
    let actions = traj.actions.as_ref().ok_or(Error::MissingActions)?;
    if tau == 0 || tau > mdp.horizon() + 1 {
        return invalid(format!("tau {tau} outside [1, {}]", mdp.horizon() + 1));
    }
    Ok(traj.states.iter().zip(actions).take(tau - 1).enumerate().map(|(h, (&s, &a))| mdp.cost(h, s, a)).sum())
}

/// Result of one simulated episode. `tau` is 1-based with `H + 1` meaning
/// the rule never fired.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Rollout {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub tau: usize,
    pub cost: f64,
}

/// Runs `base` until `stop` fires on the pre-action state prefix, then either
/// truncates (`after = None`) or hands control to `after`.
///
/// Draw order is fixed per step (one uniform for the action, one for the
/// transition), so runs that share a stream are coupled step by step.
pub(crate) fn simulate<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    base: &Policy,
    after: Option<&Policy>,
    stop: &dyn Fn(&[usize]) -> bool,
    rng: &mut R,
) -> Rollout {
    let horizon = mdp.horizon();
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut tau = horizon + 1;
    let mut cost = 0.0;
    states.push(categorical(mdp.initial_dist(), uniform(rng)));
    for h in 0..horizon {
        let s = states[h];
        if tau > horizon && stop(&states) {
            tau = h + 1;
        }
        let policy = match (tau <= horizon, after) {
            (false, _) => base,
            (true, Some(p)) => p,
            (true, None) => break,
        };
        let a = policy.sample_action(h, s, uniform(rng));
        actions.push(a);
        cost += mdp.cost(h, s, a);
        if h + 1 < horizon {
            states.push(categorical(mdp.transition(h, s, a), uniform(rng)));
        }
    }
    Rollout { states, actions, tau, cost }
}

/// Draws a labeled trajectory; the same seed yields the same trajectory.
pub fn sample_trajectory(mdp: &TabularMdp, policy: &Policy, seed: u64) -> Result<Trajectory> {
    policy.check_shape(mdp)?;
    let r = simulate(mdp, policy, None, &|_| false, &mut SeedStream::new(seed).rng());
    Ok(Trajectory::labeled(r.states, r.actions))
}

/// `count` labeled trajectories on per-index substreams of `stream`.
pub fn sample_dataset(mdp: &TabularMdp, policy: &Policy, count: usize, stream: SeedStream) -> Result<Vec<Trajectory>> {
    (0..count).map(|i| sample_trajectory(mdp, policy, stream.index(i as u64).key())).collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, data: &[Trajectory]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in data {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
