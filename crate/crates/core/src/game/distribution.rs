use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{categorical, uniform, SeedStream};

/// One committee and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Class ids as drawn (a sorted multiset; duplicates are kept so every
    /// atom has exactly the committee size).
    pub ids: Vec<usize>,
    pub weight: f64,
}

/// Realized certificates of a game run. Fields not produced by a given
/// engine are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// sup over comparators of the expected late-stop fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_sup: Option<f64>,
    /// Expected total training disagreement of a committee.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_completeness: Option<f64>,
    /// sup over comparators of late-stop minus the scaled disagreement gap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_soundness_sup: Option<f64>,
    /// `K · d̂(base) + 1/Λ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_completeness_bound: Option<f64>,
    /// `1/K`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_soundness_bound: Option<f64>,
    /// Additive allowance on both regularized bounds: `max(regret, 0)/T + 0.02`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_slack: Option<f64>,
}

/// Bookkeeping from the no-regret loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStats {
    pub engine: String,
    pub rounds: usize,
    pub committee_size: usize,
    pub strategies: usize,
    /// `max_π Σ_t u^t(π) − Σ_t E_{p^t}[u^t]` on the recorded rewards.
    pub realized_regret: f64,
    /// Guarantee of the engine for the rate used, when one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret_bound: Option<f64>,
    /// Set when the default round count was clipped by the configured cap.
    #[serde(default)]
    pub rounds_capped: bool,
}

/// Finite distribution over validator committees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatorDistribution {
    pub atoms: Vec<Atom>,
    pub rho: f64,
    pub xi: f64,
    pub certificates: Certificates,
    pub game: GameStats,
}

/// Groups committees (each sorted here) into atoms with empirical weights,
/// ordered by ids.
pub(crate) fn aggregate(committees: &[Vec<usize>]) -> Vec<(Vec<usize>, f64)> {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for c in committees {
        let mut c = c.clone();
        c.sort_unstable();
        *counts.entry(c).or_insert(0) += 1;
    }
    let total = committees.len() as f64;
    counts.into_iter().map(|(ids, n)| (ids, n as f64 / total)).collect()
}

impl ValidatorDistribution {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Draws one committee.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        let weights: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        &self.atoms[categorical(&weights, uniform(rng))].ids
    }

    /// Union of `k` independent committee draws, sorted and deduplicated.
    pub fn draw_union(&self, k: usize, stream: SeedStream) -> Vec<usize> {
        let mut rng = stream.rng();
        let mut ids: Vec<usize> = (0..k).flat_map(|_| self.sample(&mut rng).to_vec()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("distribution serializes")
    }
}
