use rand::Rng;
use serde::{Deserialize, Serialize};

use super::distribution::{aggregate, Atom, Certificates, GameStats, ValidatorDistribution};
use super::table::StopTable;
use super::version_space::VersionSpace;
use crate::error::{config, Result};
use crate::mdp::{PolicyClass, Trajectory};
use crate::rng::{categorical, uniform, SeedStream};
use crate::stopping::StoppingMode;

/// Which no-regret player drives the committee game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Hedge,
    /// Follow-the-perturbed-leader through the cutoff-matrix oracle.
    /// `scale` is the perturbation upper bound; `None` uses `10·√T/(nH)`.
    Ftpl { scale: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoRegretConfig {
    /// Explicit round count; `None` uses the default for the game.
    pub rounds: Option<usize>,
    /// Cap applied to default round counts.
    pub max_rounds: usize,
    /// Hedge rate; `None` uses `√(8 ln N / T)`.
    pub learning_rate: Option<f64>,
    pub engine: Engine,
    pub seed: u64,
}

impl Default for NoRegretConfig {
    fn default() -> Self {
        NoRegretConfig { rounds: None, max_rounds: 100_000, learning_rate: None, engine: Engine::Hedge, seed: 0 }
    }
}

impl NoRegretConfig {
    pub fn with_seed(seed: u64) -> Self {
        NoRegretConfig { seed, ..Self::default() }
    }

    /// Explicit rounds, or `default` clipped at the cap. The flag reports
    /// whether the cap was hit.
    pub(crate) fn resolve_rounds(&self, default: f64) -> (usize, bool) {
        match self.rounds {
            Some(t) => (t.max(1), false),
            None => {
                let t = default.ceil().max(1.0);
                if t > self.max_rounds as f64 {
                    log::warn!("default round count {t} exceeds the cap; using {}", self.max_rounds);
                    (self.max_rounds.max(1), true)
                } else {
                    (t as usize, false)
                }
            }
        }
    }
}

/// `⌈x⌉` that forgives representation error just above an integer.
pub(crate) fn ceil_tol(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Committee size `⌈1/ρ⌉`.
pub fn committee_size(rho: f64) -> usize {
    ceil_tol(1.0 / rho).max(1)
}

/// Smallest T with `√(2 ln N / T) + √(ln(1/δ) / (2T)) ≤ ξ`.
pub fn default_rounds(strategies: usize, delta: f64, xi: f64) -> f64 {
    let a = (2.0 * (strategies as f64).ln()).sqrt() + ((1.0 / delta).ln() / 2.0).sqrt();
    (a / xi).powi(2)
}

/// Default Hedge rate for N strategies and T rounds.
pub fn default_rate(strategies: usize, rounds: usize) -> f64 {
    (8.0 * (strategies as f64).ln() / rounds as f64).sqrt()
}

/// Result of a Hedge committee game, in table-row indices.
#[derive(Debug, Clone)]
pub(crate) struct HedgeRun {
    pub committees: Vec<Vec<usize>>,
    pub realized_regret: f64,
    pub regret_bound: f64,
}

fn softmax(logw: &[f64]) -> Vec<f64> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Hedge over the table rows with reward `late_fraction − λ·penalty[i]`.
/// Rewards are mapped affinely onto [0, 1] for the update, so the guarantee
/// is `(1 + λ)(ln N / η + η T / 8)`.
pub(crate) fn hedge_game<R: Rng + ?Sized>(
    table: &StopTable,
    penalty: Option<(&[f64], f64)>,
    k: usize,
    rounds: usize,
    rate: f64,
    rng: &mut R,
) -> HedgeRun {
    let n_strat = table.ids.len();
    let lambda = penalty.map_or(0.0, |(_, l)| l);
    let range = 1.0 + lambda;
    let mut logw = vec![0.0f64; n_strat];
    let mut cumulative = vec![0.0f64; n_strat];
    let mut expected = 0.0f64;
    let mut committees = Vec::with_capacity(rounds);
    let mut reward = vec![0.0f64; n_strat];
    for _ in 0..rounds {
        let p = softmax(&logw);
        let committee: Vec<usize> = (0..k).map(|_| categorical(&p, uniform(rng))).collect();
        let ct = table.committee_times(&committee);
        for (i, r) in reward.iter_mut().enumerate() {
            *r = table.late_fraction(&ct, i) - penalty.map_or(0.0, |(d, l)| l * d[i]);
        }
        expected += p.iter().zip(&reward).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n_strat {
            cumulative[i] += reward[i];
            logw[i] += rate * (reward[i] + lambda) / range;
        }
        committees.push(committee);
    }
    let best = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let regret_bound = if n_strat <= 1 {
        0.0
    } else {
        range * ((n_strat as f64).ln() / rate + rate * rounds as f64 / 8.0)
    };
    HedgeRun { committees, realized_regret: best - expected, regret_bound }
}

/// `sup_i Σ_atoms w · late_fraction(atom, i)` with atoms in row indices.
pub(crate) fn coverage_sup(table: &StopTable, atoms: &[(Vec<usize>, f64)]) -> f64 {
    let cts: Vec<(Vec<u32>, f64)> = atoms.iter().map(|(c, w)| (table.committee_times(c), *w)).collect();
    (0..table.ids.len())
        .map(|i| cts.iter().map(|(ct, w)| w * table.late_fraction(ct, i)).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn to_id_atoms(table: &StopTable, atoms: &[(Vec<usize>, f64)]) -> Vec<Atom> {
    atoms
        .iter()
        .map(|(rows, w)| {
            let mut ids: Vec<usize> = rows.iter().map(|&r| table.ids[r]).collect();
            ids.sort_unstable();
            Atom { ids, weight: *w }
        })
        .collect()
}

/// Sparse validator distribution over `space` by no-regret play.
///
/// The maximizer plays comparators in `space`; each round a committee of
/// `⌈1/ρ⌉` i.i.d. draws from its current mixture is recorded. The output is
/// the empirical distribution of recorded committees with its exact
/// coverage certificate.
#[allow(clippy::too_many_arguments)]
pub fn sparse_validator_dist(
    space: &VersionSpace,
    base: usize,
    test: &[Trajectory],
    rho: f64,
    xi: f64,
    delta: f64,
    mode: StoppingMode,
    class: &PolicyClass,
    cfg: &NoRegretConfig,
) -> Result<ValidatorDistribution> {
    if !space.contains(base) {
        return config(format!("base {base} is not in the version space"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return config(format!("rho must lie in (0,1), got {rho}"));
    }
    if !(xi > 0.0) {
        return config(format!("xi must be positive, got {xi}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return config(format!("delta must lie in (0,1), got {delta}"));
    }
    let table = StopTable::build(class, base, &space.member_ids, test, mode)?;
    let k = committee_size(rho);
    let (rounds, capped) = cfg.resolve_rounds(default_rounds(table.ids.len(), delta, xi));
    match cfg.engine {
        Engine::Hedge => {
            let rate = cfg.learning_rate.unwrap_or_else(|| default_rate(table.ids.len(), rounds));
            let run = hedge_game(&table, None, k, rounds, rate, &mut SeedStream::new(cfg.seed).rng());
            let atoms = aggregate(&run.committees);
            Ok(ValidatorDistribution {
                certificates: Certificates { coverage_sup: Some(coverage_sup(&table, &atoms)), ..Default::default() },
                atoms: to_id_atoms(&table, &atoms),
                rho,
                xi,
                game: GameStats {
                    engine: "hedge".into(),
                    rounds,
                    committee_size: k,
                    strategies: table.ids.len(),
                    realized_regret: run.realized_regret,
                    regret_bound: Some(run.regret_bound),
                    rounds_capped: capped,
                },
            })
        }
        Engine::Ftpl { scale } => {
            let mut d = crate::oracle::ftpl_on_table(class, base, test, &table, k, rounds, scale, cfg.seed)?;
            d.rho = rho;
            d.xi = xi;
            d.game.rounds_capped = capped;
            Ok(d)
        }
    }
}
