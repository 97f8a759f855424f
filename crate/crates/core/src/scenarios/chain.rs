//! Slip chain with a terminal-only cost, and a class of deterministic
//! policies that copy a forward expert except on randomly flipped rows.
//!
//! States `0..length`; the start state is `s` with probability proportional
//! to `start_decay^s` (`start_decay = 0` starts at 0). Action 1 moves
//! forward but stays put with probability `slip`; action 0 moves back. The only cost is paid at the
//! last step, 1 unless the goal `length - 1` has been reached.

use crate::error::{config, Result};
use crate::mdp::{Policy, PolicyClass, TabularMdp};
use crate::rng::{uniform, SeedStream};

pub fn slip_chain(length: usize, horizon: usize, slip: f64, start_decay: f64) -> Result<TabularMdp> {
    if length < 2 || horizon < 1 || !(0.0..=1.0).contains(&slip) || !(0.0..=1.0).contains(&start_decay) {
        return config("slip chain needs length >= 2, horizon >= 1, slip and start_decay in [0,1]");
    }
    let goal = length - 1;
    let kernel: Vec<Vec<Vec<f64>>> = (0..length)
        .map(|s| {
            let mut back = vec![0.0; length];
            let mut fwd = vec![0.0; length];
            back[s.saturating_sub(1)] = 1.0;
            fwd[(s + 1).min(goal)] += 1.0 - slip;
            fwd[s] += slip;
            vec![back, fwd]
        })
        .collect();
    let costs = (0..horizon)
        .map(|h| (0..length).map(|s| vec![f64::from(u8::from(h + 1 == horizon && s != goal)); 2]).collect())
        .collect();
    let weights: Vec<f64> = (0..length).map(|s| if s == 0 { 1.0 } else { start_decay.powi(s as i32) }).collect();
    let z: f64 = weights.iter().sum();
    TabularMdp::new(weights.iter().map(|w| w / z).collect(), vec![kernel; horizon - 1], costs, 1.0)
}

/// `size` deterministic policies on a two-action chain: id 0 is
/// always-forward, every other member flips each row of it independently
/// with probability `flip`.
pub fn flipped_forward_class(length: usize, horizon: usize, size: usize, flip: f64, seed: u64) -> Result<PolicyClass> {
    if size < 1 || !(0.0..=1.0).contains(&flip) {
        return config("class needs size >= 1 and flip in [0,1]");
    }
    let stream = SeedStream::new(seed).child("flipped_forward");
    let policies = (0..size)
        .map(|i| {
            let mut rng = stream.index(i as u64).rng();
            let table = (0..horizon)
                .map(|_| {
                    (0..length)
                        .map(|_| {
                            let u = uniform(&mut rng);
                            usize::from(i == 0 || u >= flip)
                        })
                        .collect()
                })
                .collect();
            Policy::deterministic(2, table)
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyClass::new(policies)
}
