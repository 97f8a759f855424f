//! Tabular MDPs, policies, trajectories, exact enumeration, log-loss and
//! Hellinger computations.

pub mod enumerate;
pub mod hellinger;
pub mod model;
pub mod policy;
pub mod trajectory;

pub use enumerate::{
    enumerate_paths, enumerate_trajectory_distribution, enumerate_with_budget, Continuation, Outcome,
    TrajectoryDistribution, WeightedPath, DEFAULT_ENUMERATION_BUDGET,
};
pub use hellinger::{action_hellinger_sq, geometric_mixture_policy, trajectory_hellinger_sq};
pub use model::TabularMdp;
pub use policy::{log_loss, Policy, PolicyClass, PolicyKind};
pub use trajectory::{prefix_cost, read_jsonl, sample_dataset, sample_trajectory, write_jsonl, Trajectory};
