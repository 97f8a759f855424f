//! End-to-end fitting procedures producing selective policies.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::game::distribution::{Certificates, ValidatorDistribution};
use crate::game::hedge::{committee_size, sparse_validator_dist, NoRegretConfig};
use crate::game::per_step::{ensemble_draws, ensemble_stream, game_seed, per_step_selectors};
use crate::game::regularized::{disagreement_rates, min_disagreement_policy, regularized_validator_dist};
use crate::game::version_space::{exact_version_space, logloss_version_space, mle_policy, require_stochastic};
use crate::mdp::{PolicyClass, Trajectory};
use crate::stopping::{StoppingMode, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Deterministic,
    Stochastic,
    Misspecified,
    PerStep,
}

/// Parameters actually used by a fit (defaults resolved).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// High-probability guarantees evaluated at the fit's parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    /// Bound on the source stopping rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_m: Option<f64>,
    /// Bound on target stopped regret divided by the cost cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_over_cost_cap: Option<f64>,
    /// Bound on the squared Hellinger distance between stopped laws.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopped_hellinger_sq: Option<f64>,
    /// False when a sample-size precondition of the guarantee fails.
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub algorithm: Algorithm,
    pub selective: StoppingRule,
    /// Committees drawn from the validator distribution (per step for the
    /// per-step fit).
    pub ensemble_draws: usize,
    /// Validators referenced by the rule (distinct ids, or the K draws of a
    /// single committee for the misspecified fit).
    pub committee_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committee_budget: Option<usize>,
    pub params: FitParams,
    pub certificates: Certificates,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub bounds: FitBounds,
    pub version_space_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub distributions: Vec<ValidatorDistribution>,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return config(format!("{name} must lie in (0,1), got {v}"));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 2.0) {
        return config(format!("eta must lie in (0,2), got {eta}"));
    }
    Ok(())
}

fn nonempty(train: &[Trajectory], test: &[Trajectory]) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput("fitting needs training and test trajectories".into()));
    }
    Ok(())
}

/// Exact version space, smallest-id base, sparse validator distribution at
/// `ρ = η/2` and confidence `δ/5`, union of `⌈log₂(5/δ)⌉` committees, and
/// the first-disagreement rule.
pub fn fit_deterministic(
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    eta: f64,
    xi: f64,
    delta: f64,
    cfg: &NoRegretConfig,
) -> Result<FitReport> {
    check_eta(eta)?;
    check_unit("delta", delta)?;
    nonempty(train, test)?;
    let space = exact_version_space(class, train).map_err(|e| match e {
        Error::Realizability(m) => Error::Realizability(format!("{m}; use the misspecified fit")),
        other => other,
    })?;
    let base = space.member_ids[0];
    let game_cfg = NoRegretConfig { seed: game_seed(cfg.seed, 0), ..*cfg };
    let q = sparse_validator_dist(&space, base, test, eta / 2.0, xi, delta / 5.0, StoppingMode::FirstDisagreement, class, &game_cfg)?;
    let draws = ensemble_draws(5.0, delta);
    let validators = q.draw_union(draws, ensemble_stream(cfg.seed, 0));
    let k = committee_size(eta / 2.0);
    let (m, n) = (train.len() as f64, test.len() as f64);
    let z = ((draws * k) as f64 + 1.0) * class.log_size() + (5.0 / delta).ln();
    let e = eta + 2.0 * xi;
    Ok(FitReport {
        algorithm: Algorithm::Deterministic,
        committee_total: validators.len(),
        selective: StoppingRule::new(base, validators, StoppingMode::FirstDisagreement),
        ensemble_draws: draws,
        committee_budget: Some(draws * k),
        params: FitParams { eta: Some(eta), rho: Some(eta / 2.0), xi: Some(xi), delta: Some(delta), k: Some(k), ..Default::default() },
        certificates: q.certificates.clone(),
        z: Some(z),
        bounds: FitBounds {
            alpha_m: Some(2.0 * z / m),
            regret_over_cost_cap: Some(e + (2.0 * e * z / n).sqrt() + 3.0 * z / n),
            stopped_hellinger_sq: None,
            certified: true,
            notes: Vec::new(),
        },
        version_space_size: space.len(),
        train_size: train.len(),
        test_size: test.len(),
        distributions: vec![q],
    })
}

/// `(ln|Π| + ln(8/δ)) / m`, the default log-loss radius.
pub fn default_gamma(class_size: usize, delta: f64, m: usize) -> f64 {
    ((class_size as f64).ln() + (8.0 / delta).ln()) / m as f64
}

/// MLE base, log-loss ball of radius γ, Hellinger-mode validator game at
/// `ρ = η/2` and confidence `δ/4`, union of `⌈log₂(4/δ)⌉` committees.
#[allow(clippy::too_many_arguments)]
pub fn fit_stochastic(
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    eta: f64,
    delta: f64,
    theta: f64,
    gamma: Option<f64>,
    xi: f64,
    cfg: &NoRegretConfig,
) -> Result<FitReport> {
    require_stochastic(class)?;
    check_eta(eta)?;
    check_unit("delta", delta)?;
    nonempty(train, test)?;
    if !(theta > 0.0) {
        return config(format!("theta must be positive, got {theta}"));
    }
    let gamma = gamma.unwrap_or_else(|| default_gamma(class.len(), delta, train.len()));
    let base = mle_policy(class, train)?;
    let space = logloss_version_space(class, train, gamma)?;
    let mode = StoppingMode::Hellinger(theta);
    let game_cfg = NoRegretConfig { seed: game_seed(cfg.seed, 0), ..*cfg };
    let q = sparse_validator_dist(&space, base, test, eta / 2.0, xi, delta / 4.0, mode, class, &game_cfg)?;
    let draws = ensemble_draws(4.0, delta);
    let validators = q.draw_union(draws, ensemble_stream(cfg.seed, 0));
    let k = committee_size(eta / 2.0);
    let k_ens = draws * k;
    let (m, n) = (train.len() as f64, test.len() as f64);
    let z = (k_ens as f64 + 1.0) * class.log_size() + (4.0 / delta).ln();
    let mut notes = Vec::new();
    if n < 8.0 * z / eta {
        notes.push(format!("test size {n} is below 8Z/eta = {:.1}", 8.0 * z / eta));
    }
    let m_needed = (class.log_size() + (8.0 / delta).ln()) / gamma;
    if m < m_needed {
        notes.push(format!("train size {m} is below (ln|Pi| + ln(8/delta))/gamma = {m_needed:.1}"));
    }
    Ok(FitReport {
        algorithm: Algorithm::Stochastic,
        committee_total: validators.len(),
        selective: StoppingRule::new(base, validators, mode),
        ensemble_draws: draws,
        committee_budget: Some(k_ens),
        params: FitParams {
            eta: Some(eta),
            rho: Some(eta / 2.0),
            xi: Some(xi),
            delta: Some(delta),
            theta: Some(theta),
            gamma: Some(gamma),
            k: Some(k),
            ..Default::default()
        },
        certificates: q.certificates.clone(),
        z: Some(z),
        bounds: FitBounds {
            alpha_m: Some(k_ens as f64 * (12.0 / theta + 48.0) * gamma),
            regret_over_cost_cap: None,
            stopped_hellinger_sq: Some(3.0 * (theta + eta)),
            certified: notes.is_empty(),
            notes,
        },
        version_space_size: space.len(),
        train_size: train.len(),
        test_size: test.len(),
        distributions: vec![q],
    })
}

/// Balancing default `K = Λ = ⌈(√Δ + ε*)^{-1}⌉` with
/// `ε* = max{(c0/m)^{1/5}, (c0/n)^{1/3}}` and `c0 = ln|Π| + ln(4/δ)`;
/// Δ is the plug-in value `d̂_M(base)`.
pub fn default_committee(class_size: usize, delta: f64, m: usize, n: usize, delta_hat: f64) -> usize {
    let c0 = (class_size as f64).ln() + (4.0 / delta).ln();
    let eps = (c0 / m as f64).powf(0.2).max((c0 / n as f64).powf(1.0 / 3.0));
    (1.0 / (delta_hat.sqrt() + eps)).ceil().max(1.0) as usize
}

/// Minimum-disagreement base, regularized committee game over the whole
/// class, and a single committee drawn from its output.
#[allow(clippy::too_many_arguments)]
pub fn fit_misspecified(
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    lambda: Option<f64>,
    k: Option<usize>,
    delta: f64,
    cfg: &NoRegretConfig,
) -> Result<FitReport> {
    check_unit("delta", delta)?;
    nonempty(train, test)?;
    let base = min_disagreement_policy(class, train)?;
    let d = disagreement_rates(class, train)?;
    let (k, lambda) = match (k, lambda) {
        (Some(k), Some(l)) => (k, l),
        (Some(k), None) => (k, k as f64),
        (None, Some(l)) => ((l.ceil() as usize).max(1), l),
        (None, None) => {
            let k = default_committee(class.len(), delta, train.len(), test.len(), d[base]);
            (k, k as f64)
        }
    };
    let game_cfg = NoRegretConfig { seed: game_seed(cfg.seed, 0), ..*cfg };
    let q = regularized_validator_dist(class, base, train, test, lambda, k, &game_cfg)?;
    let committee = q.sample(&mut ensemble_stream(cfg.seed, 0).rng()).to_vec();
    Ok(FitReport {
        algorithm: Algorithm::Misspecified,
        committee_total: committee.len(),
        selective: StoppingRule::new(base, committee, StoppingMode::FirstDisagreement),
        ensemble_draws: 1,
        committee_budget: Some(k),
        params: FitParams { delta: Some(delta), lambda: Some(lambda), k: Some(k), ..Default::default() },
        certificates: q.certificates.clone(),
        z: None,
        bounds: FitBounds { certified: true, ..Default::default() },
        version_space_size: class.len(),
        train_size: train.len(),
        test_size: test.len(),
        distributions: vec![q],
    })
}

/// Per-step committees assembled into one rule that abstains at the first
/// step whose committee disagrees with the base.
pub fn fit_per_step(
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    rho: f64,
    xi: f64,
    delta: f64,
    cfg: &NoRegretConfig,
) -> Result<FitReport> {
    check_unit("rho", rho)?;
    check_unit("delta", delta)?;
    nonempty(train, test)?;
    let sel = per_step_selectors(class, train, test, rho, xi, delta, cfg)?;
    let k = committee_size(rho);
    let total = sel.rule().all_validators().len();
    let coverage = sel.distributions.iter().filter_map(|d| d.certificates.coverage_sup).fold(0.0, f64::max);
    Ok(FitReport {
        algorithm: Algorithm::PerStep,
        selective: sel.rule(),
        ensemble_draws: sel.draws_per_step,
        committee_total: total,
        committee_budget: Some(class.horizon() * sel.draws_per_step * k),
        params: FitParams { rho: Some(rho), xi: Some(xi), delta: Some(delta), k: Some(k), ..Default::default() },
        certificates: Certificates { coverage_sup: Some(coverage), ..Default::default() },
        z: None,
        bounds: FitBounds { certified: true, ..Default::default() },
        version_space_size: sel.step_space_sizes.iter().copied().max().unwrap_or(0),
        train_size: train.len(),
        test_size: test.len(),
        distributions: sel.distributions,
    })
}

/// Parameter overrides for [`fit`]; absent values take the documented
/// defaults (η = 0.4, ξ = 0.1, δ = 0.1, ρ = η/2).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub rho: Option<f64>,
}

pub const DEFAULT_ETA: f64 = 0.4;
pub const DEFAULT_XI: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.1;

/// Dispatches to the fit for `algorithm`.
pub fn fit(
    algorithm: Algorithm,
    class: &PolicyClass,
    train: &[Trajectory],
    test: &[Trajectory],
    opts: &FitOptions,
    cfg: &NoRegretConfig,
) -> Result<FitReport> {
    let eta = opts.eta.unwrap_or(DEFAULT_ETA);
    let xi = opts.xi.unwrap_or(DEFAULT_XI);
    let delta = opts.delta.unwrap_or(DEFAULT_DELTA);
    match algorithm {
        Algorithm::Deterministic => fit_deterministic(class, train, test, eta, xi, delta, cfg),
        Algorithm::Stochastic => {
            let theta = match opts.theta {
                Some(t) => t,
                None => return config("the stochastic fit requires theta"),
            };
            fit_stochastic(class, train, test, eta, delta, theta, opts.gamma, xi, cfg)
        }
        Algorithm::Misspecified => fit_misspecified(class, train, test, opts.lambda, opts.k, delta, cfg),
        Algorithm::PerStep => fit_per_step(class, train, test, opts.rho.unwrap_or(eta / 2.0), xi, delta, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_dataset, Policy};
    use crate::rng::SeedStream;
    use crate::scenarios::desk::{desk_chain, desk_class, R};
    use crate::stopping::StopTime;

    #[test]
    fn singleton_class_never_stops() {
        let m = desk_chain();
        let class = PolicyClass::new(vec![Policy::constant(2, 2, 2, R).unwrap()]).unwrap();
        let train = sample_dataset(&m, &class.policies()[0], 5, SeedStream::new(1)).unwrap();
        let test: Vec<_> = train.iter().map(Trajectory::strip).collect();
        let r = fit_deterministic(&class, &train, &test, 0.4, 0.1, 0.2, &NoRegretConfig::default()).unwrap();
        assert_eq!(r.selective.validator_ids, vec![0]);
        let rule = r.selective.bind(&class).unwrap();
        assert!(train.iter().all(|t| rule.stop_time(&t.states) == 3));
    }

    #[test]
    fn ensemble_size_from_delta() {
        let class = desk_class();
        let train = vec![Trajectory::labeled(vec![0, 1], vec![R, R])];
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let r = fit_deterministic(&class, &train, &test, 0.4, 0.1, 0.625, &NoRegretConfig::default()).unwrap();
        assert_eq!(r.ensemble_draws, 3);
        assert!(r.committee_total <= r.committee_budget.unwrap());
    }

    #[test]
    fn unrealizable_data_is_redirected() {
        let class = PolicyClass::new(vec![Policy::constant(2, 2, 2, 0).unwrap()]).unwrap();
        let train = vec![Trajectory::labeled(vec![0, 1], vec![R, R])];
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let err = fit_deterministic(&class, &train, &test, 0.4, 0.1, 0.2, &NoRegretConfig::default()).unwrap_err();
        assert!(err.to_string().contains("misspecified"));
    }

    #[test]
    fn parameter_defaults() {
        assert!((default_gamma(8, 0.25, 100) - (8f64.ln() + 32f64.ln()) / 100.0).abs() < 1e-15);
        assert_eq!(default_committee(8, 0.1, 1_000_000, 1_000_000, 0.0), 12);
    }
}
