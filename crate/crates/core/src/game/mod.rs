//! Version spaces and no-regret construction of sparse validator
//! distributions.

pub mod distribution;
pub mod hedge;
pub mod per_step;
pub mod regularized;
pub mod table;
pub mod version_space;

pub use distribution::{Atom, Certificates, GameStats, ValidatorDistribution};
pub use hedge::{committee_size, default_rate, default_rounds, sparse_validator_dist, Engine, NoRegretConfig};
pub use per_step::{ensemble_draws, per_step_selectors, PerStepSelectors};
pub use regularized::{
    disagreement_rates, min_disagreement_policy, regularized_default_rounds, regularized_validator_dist,
    REGULARIZED_NOISE_SLACK,
};
pub use table::{late_stop_fraction, StopTable};
pub use version_space::{
    class_log_losses, empirical_disagreement_rate, exact_version_space, logloss_version_space, mle_policy,
    step_version_space, VersionSpace, VersionSpaceKind,
};
