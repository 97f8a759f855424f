//! Sequential selective imitation: learn a policy from source-domain
//! demonstrations together with a stopping rule that hands control back to
//! the expert before the learner drifts off the demonstrated distribution.
//!
//! The pipeline is: build a version space from labeled source trajectories,
//! play a no-regret committee game on unlabeled target trajectories to get a
//! sparse validator distribution, draw committees, and stop at the first step
//! where a validator disagrees with the base policy (or where cumulative
//! Hellinger divergence exceeds a threshold for stochastic classes).

pub mod error;
pub mod eval;
pub mod experiments;
pub mod fit;
pub mod game;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod scenarios;
pub mod stopping;

pub use error::{Error, Result};
