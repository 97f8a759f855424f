use super::distribution::{aggregate, Certificates, GameStats, ValidatorDistribution};
use super::hedge::{default_rate, hedge_game, to_id_atoms, NoRegretConfig};
use super::table::StopTable;
use super::version_space::{empirical_disagreement_rate, require_deterministic};
use crate::error::{config, Error, Result};
use crate::mdp::{PolicyClass, Trajectory};
use crate::rng::SeedStream;
use crate::stopping::StoppingMode;

/// Monte Carlo allowance added to the realized regret term.
pub const REGULARIZED_NOISE_SLACK: f64 = 0.02;

/// Default rounds: smallest T with `(1 + Λ)·√(2 ln N / T) ≤ 0.1`.
pub fn regularized_default_rounds(strategies: usize, lambda: f64) -> f64 {
    2.0 * (1.0 + lambda).powi(2) * (strategies as f64).ln() / 0.01
}

/// Training disagreement rate of every class member, in id order.
pub fn disagreement_rates(class: &PolicyClass, train: &[Trajectory]) -> Result<Vec<f64>> {
    (0..class.len()).map(|i| empirical_disagreement_rate(i, train, class)).collect()
}

/// Smallest-id minimizer of the training disagreement rate.
pub fn min_disagreement_policy(class: &PolicyClass, train: &[Trajectory]) -> Result<usize> {
    let d = disagreement_rates(class, train)?;
    Ok((0..d.len()).fold(0, |b, i| if d[i] < d[b] { i } else { b }))
}

/// Committee game over the whole class with each comparator's reward
/// reduced by `Λ·d̂(π)`. Committees have exactly `K` draws.
pub fn regularized_validator_dist(
    class: &PolicyClass,
    base: usize,
    train: &[Trajectory],
    test: &[Trajectory],
    lambda: f64,
    k: usize,
    cfg: &NoRegretConfig,
) -> Result<ValidatorDistribution> {
    require_deterministic(class)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return config(format!("lambda must be positive, got {lambda}"));
    }
    if k < 1 {
        return config("committee size must be at least 1");
    }
    if test.is_empty() {
        return Err(Error::EmptyInput("test set is empty".into()));
    }
    let d = disagreement_rates(class, train)?;
    class.get(base)?;
    if d.iter().any(|&x| x < d[base]) {
        return config(format!("base {base} does not minimize the training disagreement rate"));
    }
    let ids: Vec<usize> = (0..class.len()).collect();
    let table = StopTable::build(class, base, &ids, test, StoppingMode::FirstDisagreement)?;
    let (rounds, capped) = cfg.resolve_rounds(regularized_default_rounds(ids.len(), lambda));
    let rate = cfg.learning_rate.unwrap_or_else(|| default_rate(ids.len(), rounds));
    let run = hedge_game(&table, Some((&d, lambda)), k, rounds, rate, &mut SeedStream::new(cfg.seed).rng());
    let atoms = aggregate(&run.committees);

    let completeness: f64 = atoms.iter().map(|(c, w)| w * c.iter().map(|&i| d[i]).sum::<f64>()).sum();
    let cts: Vec<(Vec<u32>, f64)> = atoms.iter().map(|(c, w)| (table.committee_times(c), *w)).collect();
    let soundness = (0..ids.len())
        .map(|i| {
            cts.iter().map(|(ct, w)| w * table.late_fraction(ct, i)).sum::<f64>() - lambda * (d[i] - d[base])
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = run.realized_regret.max(0.0) / rounds as f64 + REGULARIZED_NOISE_SLACK;

    Ok(ValidatorDistribution {
        atoms: to_id_atoms(&table, &atoms),
        rho: 1.0 / k as f64,
        xi: slack,
        certificates: Certificates {
            coverage_sup: None,
            reg_completeness: Some(completeness),
            reg_soundness_sup: Some(soundness),
            reg_completeness_bound: Some(k as f64 * d[base] + 1.0 / lambda),
            reg_soundness_bound: Some(1.0 / k as f64),
            reg_slack: Some(slack),
        },
        game: GameStats {
            engine: "hedge".into(),
            rounds,
            committee_size: k,
            strategies: ids.len(),
            realized_regret: run.realized_regret,
            regret_bound: Some(run.regret_bound),
            rounds_capped: capped,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::{desk_class, R};

    #[test]
    fn realizable_desk_certificates() {
        let class = desk_class();
        let train = vec![Trajectory::labeled(vec![0, 1], vec![R, R]); 4];
        let test = vec![Trajectory::unlabeled(vec![0, 1]), Trajectory::unlabeled(vec![0, 0])];
        let cfg = NoRegretConfig { rounds: Some(2000), seed: 3, ..Default::default() };
        let d = regularized_validator_dist(&class, 0, &train, &test, 10.0, 2, &cfg).unwrap();
        let c = &d.certificates;
        assert!(d.atoms.iter().all(|a| a.ids.len() == 2));
        assert!(c.reg_completeness.unwrap() <= c.reg_completeness_bound.unwrap() + c.reg_slack.unwrap());
        assert!(c.reg_soundness_sup.unwrap() <= c.reg_soundness_bound.unwrap() + c.reg_slack.unwrap());
    }

    #[test]
    fn validates_inputs() {
        let class = desk_class();
        let train = vec![Trajectory::labeled(vec![0, 1], vec![R, R])];
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let cfg = NoRegretConfig::default();
        assert!(regularized_validator_dist(&class, 0, &train, &test, 0.0, 2, &cfg).is_err());
        assert!(regularized_validator_dist(&class, 0, &train, &test, 1.0, 0, &cfg).is_err());
        assert!(regularized_validator_dist(&class, 1, &train, &test, 1.0, 1, &cfg).is_err());
        assert_eq!(min_disagreement_policy(&class, &train).unwrap(), 0);
    }
}
