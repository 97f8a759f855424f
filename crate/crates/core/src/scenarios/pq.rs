//! One-step hard instance for selective learning under arbitrary shift.
//!
//! States `0..N` with `N = d / (2ε)`; the source law is uniform over all
//! states, the target law uniform over the first `d`. A sign vector
//! `σ ∈ {−1, 1}^d` defines a policy taking action 1 with probability
//! `1/2 + σ_x Δ` on the first `d` states and 1/2 elsewhere, and a cost
//! `c_σ(x, 1) = 1[σ_x = −1]`, `c_σ(x, 0) = 1[σ_x = 1]` on the first `d`
//! states, zero elsewhere.

use log::warn;

use crate::error::{config, Result};
use crate::mdp::{Policy, PolicyClass, TabularMdp};
use crate::rng::{uniform, SeedStream};

/// Largest `d` whose sign vectors are all enumerated.
pub const MAX_ENUMERATED_D: usize = 12;
/// Class size used when `d` exceeds the enumeration limit.
pub const SUBSAMPLE_SIZE: usize = 1 << MAX_ENUMERATED_D;

#[derive(Debug, Clone, PartialEq)]
pub struct PqInstance {
    pub d: usize,
    pub num_states: usize,
    pub delta: f64,
    /// Source environment with the expert's costs.
    pub source: TabularMdp,
    /// Target environment with the expert's costs.
    pub target: TabularMdp,
    /// Sign vectors, one per class member.
    pub sigmas: Vec<Vec<i8>>,
    pub class: PolicyClass,
    pub expert_id: usize,
}

impl PqInstance {
    pub fn cost(&self, sigma: &[i8], x: usize, a: usize) -> f64 {
        sign_cost(sigma, x, a)
    }

    /// Cost table `[h=0][x][a]` of member `id`.
    pub fn cost_table(&self, id: usize) -> Vec<Vec<Vec<f64>>> {
        let sigma = &self.sigmas[id];
        vec![(0..self.num_states).map(|x| (0..2).map(|a| self.cost(sigma, x, a)).collect()).collect()]
    }
}

fn sign_cost(sigma: &[i8], x: usize, a: usize) -> f64 {
    match sigma.get(x) {
        Some(&s) => f64::from(u8::from((a == 1 && s == -1) || (a == 0 && s == 1))),
        None => 0.0,
    }
}

fn sigma_policy(sigma: &[i8], num_states: usize, delta: f64) -> Result<Policy> {
    let rows = (0..num_states)
        .map(|x| {
            let p1 = sigma.get(x).map_or(0.5, |&s| 0.5 + f64::from(s) * delta);
            vec![1.0 - p1, p1]
        })
        .collect();
    Policy::stochastic(vec![rows])
}

/// Builds the instance; `delta` defaults to `4ε`.
pub fn make_pq_lower_bound(d: usize, epsilon: f64, delta: Option<f64>, seed: u64) -> Result<PqInstance> {
    if !(epsilon > 0.0 && epsilon <= 1.0 / 16.0) {
        return config(format!("epsilon must lie in (0, 1/16], got {epsilon}"));
    }
    let delta = delta.unwrap_or(4.0 * epsilon);
    if !(0.0..=0.5).contains(&delta) {
        return config(format!("Delta must lie in [0, 1/2], got {delta}"));
    }
    if d == 0 {
        return config("d must be positive");
    }
    let ratio = d as f64 / (2.0 * epsilon);
    let num_states = ratio.round() as usize;
    if (ratio - num_states as f64).abs() > 1e-9 {
        return config(format!("d / (2 epsilon) = {ratio} is not an integer"));
    }
    let stream = SeedStream::new(seed).child("pq");
    let sigmas: Vec<Vec<i8>> = if d <= MAX_ENUMERATED_D {
        (0..1usize << d).map(|bits| (0..d).map(|x| if bits >> x & 1 == 1 { 1 } else { -1 }).collect()).collect()
    } else {
        warn!("d = {d} exceeds {MAX_ENUMERATED_D}; subsampling {SUBSAMPLE_SIZE} sign vectors");
        let mut rng = stream.child("subsample").rng();
        (0..SUBSAMPLE_SIZE).map(|_| (0..d).map(|_| if uniform(&mut rng) < 0.5 { 1 } else { -1 }).collect()).collect()
    };
    let policies = sigmas.iter().map(|s| sigma_policy(s, num_states, delta)).collect::<Result<Vec<_>>>()?;
    let class = PolicyClass::new(policies)?;
    let expert_id = ((uniform(&mut stream.child("expert").rng()) * sigmas.len() as f64) as usize).min(sigmas.len() - 1);
    let sigma = &sigmas[expert_id];
    let costs = vec![(0..num_states).map(|x| (0..2).map(|a| sign_cost(sigma, x, a)).collect()).collect()];
    let mut q_init = vec![0.0; num_states];
    q_init[..d].iter_mut().for_each(|p| *p = 1.0 / d as f64);
    Ok(PqInstance {
        d,
        num_states,
        delta,
        source: TabularMdp::new(vec![1.0 / num_states as f64; num_states], vec![], costs.clone(), 1.0)?,
        target: TabularMdp::new(q_init, vec![], costs, 1.0)?,
        sigmas,
        class,
        expert_id,
    })
}
