//! The two-state reference chain used throughout the tests and docs.
//!
//! States {0, 1}, actions L = 0 and R = 1, horizon 2, start in state 0.
//! From state 0, L stays and R moves to 1; state 1 is absorbing. Being in
//! state 0 costs 1 per step, so the cost cap is 2.

use crate::mdp::{Policy, PolicyClass, TabularMdp};

pub const L: usize = 0;
pub const R: usize = 1;

fn chain(r_success: f64) -> TabularMdp {
    let from0 = vec![vec![1.0, 0.0], vec![1.0 - r_success, r_success]];
    let from1 = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
    let costs = vec![vec![vec![1.0, 1.0], vec![0.0, 0.0]]; 2];
    TabularMdp::new(vec![1.0, 0.0], vec![vec![from0, from1]], costs, 2.0).expect("reference chain is valid")
}

pub fn desk_chain() -> TabularMdp {
    chain(1.0)
}

/// The reference chain where R from state 0 fails (stays at 0) with
/// probability `wind`.
pub fn desk_chain_windy(wind: f64) -> TabularMdp {
    chain(1.0 - wind)
}

pub fn always_r() -> Policy {
    Policy::constant(2, 2, 2, R).expect("valid")
}

pub fn always_l() -> Policy {
    Policy::constant(2, 2, 2, L).expect("valid")
}

/// R at step 1, L at step 2.
pub fn r_then_l() -> Policy {
    Policy::deterministic(2, vec![vec![R, R], vec![L, L]]).expect("valid")
}

/// {always-R, always-L, R-then-L} with ids 0, 1, 2.
pub fn desk_class() -> PolicyClass {
    PolicyClass::new(vec![always_r(), always_l(), r_then_l()]).expect("valid")
}
