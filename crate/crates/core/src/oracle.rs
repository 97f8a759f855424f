//! Oracle-efficient alternative to Hedge: the cutoff matrix, perturbed best
//! responses in direct and multiple-instance form, and an FTPL engine.
//!
//! Strategies are stop-time vectors `x_π = (τ_{π0,{π}}(T_j))_j`. The cutoff
//! matrix has columns `(j, c)` for `c ∈ 1..=H` with entry `1[x_{π,j} ≤ c]`.
//! A committee enters the history through its own stop-time vector.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::game::distribution::{aggregate, Certificates, GameStats, ValidatorDistribution};
use crate::game::hedge::{committee_size, coverage_sup, to_id_atoms};
use crate::game::{StopTable, VersionSpace};
use crate::mdp::{Policy, PolicyClass, Trajectory};
use crate::rng::{categorical, uniform, SeedStream};
use crate::stopping::StoppingMode;

/// Column `(j, c)` of the cutoff matrix; `j` is 0-based, `c ∈ 1..=H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffColumn {
    pub j: usize,
    pub c: usize,
}

impl CutoffColumn {
    fn flat(&self, horizon: usize) -> usize {
        self.j * horizon + (self.c - 1)
    }
}

/// `1[x_j ≤ c]`.
pub fn gamma_entry(x: &[u32], col: CutoffColumn) -> u8 {
    u8::from(x[col.j] as usize <= col.c)
}

/// Cutoff-matrix entry for policy `pi` on test trajectory `col.j`.
pub fn cutoff_matrix_entry(
    class: &PolicyClass,
    base: usize,
    test: &[Trajectory],
    pi: usize,
    col: CutoffColumn,
) -> Result<u8> {
    if col.j >= test.len() || col.c == 0 || col.c > class.horizon() {
        return config(format!("column ({}, {}) out of range", col.j, col.c));
    }
    let t = StopTable::build(class, base, &[pi], &test[col.j..=col.j], StoppingMode::FirstDisagreement)?;
    Ok(u8::from(t.times[0][0] as usize <= col.c))
}

/// Maximizer payoff `f(π, y) = (1/n) Σ_j 1[x_j < y_j]`.
pub fn payoff<T: Num + Copy + FromPrimitive>(x: &[u32], y: &[u32]) -> T {
    let late = x.iter().zip(y).filter(|(a, b)| a < b).count();
    T::from_usize(late).expect("count fits") / T::from_usize(x.len()).expect("n fits")
}

/// Adversary action realizing column `(j, c)`: `y_j = c + 1`, else 1.
pub fn synthetic_action(n: usize, col: CutoffColumn) -> Vec<u32> {
    let mut y = vec![1u32; n];
    y[col.j] = col.c as u32 + 1;
    y
}

/// A column on which two distinct stop-time vectors differ by exactly 1.
pub fn separating_column(x: &[u32], z: &[u32]) -> Option<CutoffColumn> {
    let j = x.iter().zip(z).position(|(a, b)| a != b)?;
    let c = x[j].max(z[j]) as usize - 1;
    Some(CutoffColumn { j, c })
}

/// Row indices of one representative (smallest id) per distinct vector.
pub fn quotient(table: &StopTable) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..table.ids.len() {
        if !reps.iter().any(|&r| table.times[r] == table.times[i]) {
            reps.push(i);
        }
    }
    reps
}

fn clamp_history(h: &[u32], horizon: usize) -> impl Iterator<Item = usize> + '_ {
    h.iter().map(move |&v| (v as usize).min(horizon + 1))
}

/// `Σ_s f(π, h^{Φ_s}) + Σ_{j,c} α_{j,c} Γ_{π,(j,c)}` with `alpha` flat in
/// `j·H + (c − 1)` order.
pub fn direct_objective<T: Num + Copy + FromPrimitive>(x: &[u32], history: &[Vec<u32>], alpha: &[T], horizon: usize) -> T {
    let mut total = T::zero();
    for h in history {
        let hv: Vec<u32> = clamp_history(h, horizon).map(|v| v as u32).collect();
        total = total + payoff::<T>(x, &hv);
    }
    for j in 0..x.len() {
        for c in 1..=horizon {
            let col = CutoffColumn { j, c };
            if gamma_entry(x, col) == 1 {
                total = total + alpha[col.flat(horizon)];
            }
        }
    }
    total
}

/// Prefix bag `B_{j,c}`: the first `c` states of test trajectory `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixBag<T> {
    pub j: usize,
    pub c: usize,
    /// `(h, s)` pairs with 0-based `h < c`.
    pub instances: Vec<(usize, usize)>,
    pub weight: T,
}

/// Bags with weights `w_{j,c} = #{s : h^{Φ_s}_j − 1 = c} + n·α_{j,c}`.
pub fn mil_bags<T: Num + Copy + FromPrimitive>(
    test: &[Trajectory],
    history: &[Vec<u32>],
    alpha: &[T],
    horizon: usize,
) -> Vec<PrefixBag<T>> {
    let n = test.len();
    let mut counts = vec![0usize; n * horizon];
    for h in history {
        for (j, v) in clamp_history(h, horizon).enumerate() {
            if v >= 2 {
                counts[j * horizon + (v - 2)] += 1;
            }
        }
    }
    let n_t = T::from_usize(n).expect("n fits");
    let mut bags = Vec::with_capacity(n * horizon);
    for (j, t) in test.iter().enumerate() {
        for c in 1..=horizon {
            let f = j * horizon + (c - 1);
            bags.push(PrefixBag {
                j,
                c,
                instances: t.states[..c].iter().copied().enumerate().collect(),
                weight: T::from_usize(counts[f]).expect("count fits") + n_t * alpha[f],
            });
        }
    }
    bags
}

/// `Σ w · 1[bag contains an (h, s) where π and π0 act differently]`.
pub fn mil_objective<T: Num + Copy>(policy: &Policy, base: &Policy, bags: &[PrefixBag<T>]) -> T {
    bags.iter()
        .filter(|b| b.instances.iter().any(|&(h, s)| policy.disagrees(base, h, s)))
        .fold(T::zero(), |acc, b| acc + b.weight)
}

/// Multi-class form: bags hold `(h, s, a)` for every `a ≠ π0_h(s)` and a
/// policy labels `(h, s, a)` positive when it plays `a` there.
pub fn mil_objective_multiclass<T: Num + Copy>(policy: &Policy, base: &Policy, bags: &[PrefixBag<T>]) -> T {
    bags.iter()
        .filter(|b| {
            b.instances.iter().any(|&(h, s)| {
                let b0 = base.action(h, s).expect("deterministic base");
                (0..base.num_actions()).filter(|&a| a != b0).any(|a| policy.action(h, s) == Some(a))
            })
        })
        .fold(T::zero(), |acc, b| acc + b.weight)
}

fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

fn check_space(class: &PolicyClass, space: &VersionSpace) -> Result<()> {
    if space.is_empty() {
        return Err(Error::EmptyInput("strategy space is empty".into()));
    }
    if !class.is_deterministic() {
        return config("the cutoff-matrix oracle needs a deterministic class");
    }
    Ok(())
}

/// Exhaustive argmax of the direct perturbed objective; ties to the
/// smallest id.
pub fn perturbed_best_response_direct(
    class: &PolicyClass,
    space: &VersionSpace,
    base: usize,
    test: &[Trajectory],
    history: &[Vec<u32>],
    alpha: &[f64],
) -> Result<usize> {
    check_space(class, space)?;
    let table = StopTable::build(class, base, &space.member_ids, test, StoppingMode::FirstDisagreement)?;
    let vals: Vec<f64> =
        table.times.iter().map(|x| direct_objective(x, history, alpha, class.horizon())).collect();
    Ok(space.member_ids[argmax_first(&vals)])
}

/// Exhaustive argmax of the weighted multiple-instance objective.
pub fn perturbed_best_response_mil(
    class: &PolicyClass,
    space: &VersionSpace,
    base: usize,
    test: &[Trajectory],
    history: &[Vec<u32>],
    alpha: &[f64],
) -> Result<usize> {
    check_space(class, space)?;
    let b = class.get(base)?;
    let bags = mil_bags(test, history, alpha, class.horizon());
    let vals: Vec<f64> = space.member_ids.iter().map(|&id| mil_objective(&class.policies()[id], b, &bags)).collect();
    Ok(space.member_ids[argmax_first(&vals)])
}

/// FTPL committee game over `space`.
#[allow(clippy::too_many_arguments)]
pub fn ftpl_engine(
    space: &VersionSpace,
    base: usize,
    test: &[Trajectory],
    rho: f64,
    rounds: usize,
    seed: u64,
    class: &PolicyClass,
    scale: Option<f64>,
) -> Result<ValidatorDistribution> {
    check_space(class, space)?;
    if !space.contains(base) {
        return config(format!("base {base} is not in the strategy space"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return config(format!("rho must lie in (0,1), got {rho}"));
    }
    let table = StopTable::build(class, base, &space.member_ids, test, StoppingMode::FirstDisagreement)?;
    let mut d = ftpl_on_table(class, base, test, &table, committee_size(rho), rounds.max(1), scale, seed)?;
    d.rho = rho;
    Ok(d)
}

/// Per-round MIL weights for the quotient representatives. Prefix bags are
/// nested, so bag `(j, c)` is positive iff `(j, c−1)` is or step `c`
/// disagrees.
fn mil_scores(reps: &[&Policy], base: &Policy, test: &[Trajectory], weights: &[f64], horizon: usize) -> Vec<f64> {
    reps.iter()
        .map(|p| {
            let mut total = 0.0;
            for (j, t) in test.iter().enumerate() {
                let mut positive = false;
                for c in 1..=horizon {
                    positive = positive || p.disagrees(base, c - 1, t.states[c - 1]);
                    if positive {
                        total += weights[j * horizon + (c - 1)];
                    }
                }
            }
            total
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn ftpl_on_table(
    class: &PolicyClass,
    base: usize,
    test: &[Trajectory],
    table: &StopTable,
    k: usize,
    rounds: usize,
    scale: Option<f64>,
    seed: u64,
) -> Result<ValidatorDistribution> {
    if !class.is_deterministic() {
        return config("the FTPL engine needs a deterministic class");
    }
    let horizon = class.horizon();
    let n = test.len();
    let scale = scale.unwrap_or(10.0 * (rounds as f64).sqrt() / (n * horizon) as f64);
    if !(scale >= 0.0) {
        return config(format!("perturbation scale must be nonnegative, got {scale}"));
    }
    let reps = quotient(table);
    let rep_policies: Vec<&Policy> = reps.iter().map(|&r| &class.policies()[table.ids[r]]).collect();
    let base_policy = class.get(base)?;
    let mut rng = SeedStream::new(seed).rng();
    let mut counts = vec![0.0f64; n * horizon];
    let mut plays = vec![0usize; reps.len()];
    let mut cumulative = vec![0.0f64; reps.len()];
    let mut realized = 0.0f64;
    let mut committees = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let weights: Vec<f64> = counts.iter().map(|c| c + n as f64 * uniform(&mut rng) * scale).collect();
        let pick = argmax_first(&mil_scores(&rep_policies, base_policy, test, &weights, horizon));
        plays[pick] += 1;
        let freq: Vec<f64> = plays.iter().map(|&c| c as f64 / (t + 1) as f64).collect();
        let committee: Vec<usize> = (0..k).map(|_| reps[categorical(&freq, uniform(&mut rng))]).collect();
        let ct = table.committee_times(&committee);
        for (i, &r) in reps.iter().enumerate() {
            cumulative[i] += table.late_fraction(&ct, r);
        }
        realized += table.late_fraction(&ct, reps[pick]);
        for (j, v) in clamp_history(&ct, horizon).enumerate() {
            if v >= 2 {
                counts[j * horizon + (v - 2)] += 1.0;
            }
        }
        committees.push(committee);
    }
    let atoms = aggregate(&committees);
    let best = cumulative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ValidatorDistribution {
        certificates: Certificates { coverage_sup: Some(coverage_sup(table, &atoms)), ..Default::default() },
        atoms: to_id_atoms(table, &atoms),
        rho: 1.0 / k as f64,
        xi: 0.0,
        game: GameStats {
            engine: "ftpl".into(),
            rounds,
            committee_size: k,
            strategies: reps.len(),
            realized_regret: best - realized,
            regret_bound: None,
            rounds_capped: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::desk_class;
    use num_rational::Rational64;

    #[test]
    fn desk_cutoff_entries() {
        let class = desk_class();
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let col = |c| CutoffColumn { j: 0, c };
        assert_eq!(cutoff_matrix_entry(&class, 0, &test, 2, col(1)).unwrap(), 0);
        assert_eq!(cutoff_matrix_entry(&class, 0, &test, 2, col(2)).unwrap(), 1);
        assert_eq!(cutoff_matrix_entry(&class, 0, &test, 0, col(2)).unwrap(), 0);
        assert_eq!(cutoff_matrix_entry(&class, 0, &test, 1, col(1)).unwrap(), 1);
        assert!(cutoff_matrix_entry(&class, 0, &test, 1, col(3)).is_err());
    }

    #[test]
    fn zero_weights_pick_smallest_id() {
        let class = desk_class();
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let space = VersionSpace::full(&class);
        let alpha = vec![0.0; 2];
        assert_eq!(perturbed_best_response_direct(&class, &space, 0, &test, &[], &alpha).unwrap(), 0);
        assert_eq!(perturbed_best_response_mil(&class, &space, 0, &test, &[], &alpha).unwrap(), 0);
        // A committee that never stops rewards any deviation; always-L deviates first.
        let history = vec![vec![3u32]];
        let a = vec![Rational64::from_integer(0); 2];
        let x_l = [1u32];
        assert_eq!(direct_objective(&x_l, &history, &a, 2), Rational64::from_integer(1));
        // Perturbing only column (0,1) separates always-L from R-then-L.
        let alpha = vec![0.5, 0.0];
        assert_eq!(perturbed_best_response_mil(&class, &space, 0, &test, &history, &alpha).unwrap(), 1);
        assert_eq!(perturbed_best_response_direct(&class, &space, 0, &test, &history, &alpha).unwrap(), 1);
    }

    #[test]
    fn separation_and_implementability() {
        let x = [1u32, 3, 2];
        let z = [1u32, 2, 2];
        let col = separating_column(&x, &z).unwrap();
        assert_eq!(col, CutoffColumn { j: 1, c: 2 });
        assert_eq!(gamma_entry(&x, col) as i32 - gamma_entry(&z, col) as i32, -1);
        assert!(separating_column(&x, &x).is_none());
        for j in 0..3 {
            for c in 1..=2 {
                let col = CutoffColumn { j, c };
                let y = synthetic_action(3, col);
                assert_eq!(payoff::<Rational64>(&x, &y), Rational64::new(gamma_entry(&x, col) as i64, 3));
            }
        }
    }

    #[test]
    fn ftpl_singleton_is_degenerate() {
        let class = desk_class();
        let test = vec![Trajectory::unlabeled(vec![0, 1])];
        let space = VersionSpace { member_ids: vec![0], kind: crate::game::VersionSpaceKind::ExactConsistency };
        let d = ftpl_engine(&space, 0, &test, 0.5, 20, 1, &class, None).unwrap();
        assert_eq!(d.certificates.coverage_sup, Some(0.0));
        assert_eq!(d.atoms.len(), 1);
    }
}
