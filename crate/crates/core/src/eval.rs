//! Completeness and soundness metrics of a selective policy, by exact
//! enumeration or by Monte Carlo with common random numbers.
//!
//! The stopping functional is applied to each policy's own rollouts: the
//! expert-side terms evaluate the learner's τ on expert trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::trajectory::simulate;
use crate::mdp::{enumerate_paths, trajectory_hellinger_sq, Continuation, Policy, PolicyClass, TabularMdp, TrajectoryDistribution};
use crate::rng::SeedStream;
use crate::stopping::{Deviation, Never, SelectivePolicy, StopTime};

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo { n_rollouts: usize },
}

/// Terms bounding the target stopping rate through the expert:
/// `α_N ≤ expert_alpha_m + state_tv + expert_late_stop_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `Pr_{M,π⋆}[τ ≤ H]`.
    pub expert_alpha_m: f64,
    /// TV between state-trajectory laws of `(M,π⋆)` and `(N,π⋆)`; exact only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_tv: Option<f64>,
    /// `Pr_{N,π⋆}[τ > τ_dev]`, τ_dev the first base/expert disagreement.
    pub expert_late_stop_n: f64,
    /// Whether the inequality holds; set only for exact evaluation of
    /// deterministic base and expert, where it is a theorem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holds: Option<bool>,
}

/// 95% normal-approximation half-widths of the Monte Carlo fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiHalfwidths {
    #[serde(rename = "alpha_M")]
    pub alpha_m: f64,
    #[serde(rename = "alpha_N")]
    pub alpha_n: f64,
    pub stopped_regret_n: f64,
    pub switched_regret_n: f64,
    pub asymmetric_stopped_regret_n: f64,
    pub learner_cost_n: f64,
    pub expert_cost_n: f64,
    pub switched_cost_n: f64,
    pub mean_handoff_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "alpha_M")]
    pub alpha_m: f64,
    #[serde(rename = "alpha_N")]
    pub alpha_n: f64,
    /// `J_N(π,τ) − J_N(π⋆,τ)`.
    pub stopped_regret_n: f64,
    /// `J_N(π_sw) − J_N(π⋆)`.
    pub switched_regret_n: f64,
    /// `J_N(π,τ) − J_N(π⋆)`.
    pub asymmetric_stopped_regret_n: f64,
    /// Exact only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopped_hellinger_sq: Option<f64>,
    /// Of the expert in N, by backward induction.
    pub expert_variance: f64,
    /// `J_N(π)`, the learner without abstention.
    pub learner_cost_n: f64,
    /// `J_N(π⋆)`.
    pub expert_cost_n: f64,
    /// `J_N(π_sw)`.
    pub switched_cost_n: f64,
    /// `E_N[min(τ, H)]` under the learner.
    pub mean_handoff_time: f64,
    pub decomposition: Decomposition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_halfwidths: Option<CiHalfwidths>,
    pub method: Method,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "alpha_M,alpha_N,stopped_regret_N,switched_regret_N,asymmetric_stopped_regret_N,\
stopped_hellinger_sq,expert_variance,learner_cost_N,expert_cost_N,switched_cost_N,mean_handoff_time";

    /// Values in `CSV_HEADER` order; absent fields are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        [
            self.alpha_m.to_string(),
            self.alpha_n.to_string(),
            self.stopped_regret_n.to_string(),
            self.switched_regret_n.to_string(),
            self.asymmetric_stopped_regret_n.to_string(),
            opt(self.stopped_hellinger_sq),
            self.expert_variance.to_string(),
            self.learner_cost_n.to_string(),
            self.expert_cost_n.to_string(),
            self.switched_cost_n.to_string(),
            self.mean_handoff_time.to_string(),
        ]
        .join(",")
    }
}

fn check_inputs(m: &TabularMdp, n: &TabularMdp, sel: &SelectivePolicy, expert: &Policy, class: &PolicyClass) -> Result<()> {
    if m.num_states() != n.num_states() || m.num_actions() != n.num_actions() || m.horizon() != n.horizon() {
        return Err(Error::Shape("source and target environments differ in shape".into()));
    }
    for mdp in [m, n] {
        class.check_shape(mdp)?;
        sel.base().check_shape(mdp)?;
        expert.check_shape(mdp)?;
    }
    if class.policies()[sel.rule().base_id] != *sel.base() {
        return Err(Error::Config("selective base differs from the class member it names".into()));
    }
    Ok(())
}

/// `σ²_{π⋆} = Σ_h E_{π⋆}[(V_h(x_h) − Q_h(x_h, a_h))²]`.
pub fn expert_variance(mdp: &TabularMdp, expert: &Policy) -> Result<f64> {
    expert.check_shape(mdp)?;
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    // q[h][s][a], v[h][s], built backwards.
    let mut q = vec![vec![vec![0.0; na]; ns]; hz];
    let mut v = vec![vec![0.0; ns]; hz + 1];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for a in 0..na {
                let future = if h + 1 < hz {
                    mdp.transition(h, s, a).iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum()
                } else {
                    0.0
                };
                q[h][s][a] = mdp.cost(h, s, a) + future;
            }
            v[h][s] = (0..na).map(|a| expert.prob(h, s, a) * q[h][s][a]).sum();
        }
    }
    let mut occ = mdp.initial_dist().to_vec();
    let mut total = 0.0;
    for h in 0..hz {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if occ[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let pa = expert.prob(h, s, a);
                if pa == 0.0 {
                    continue;
                }
                total += occ[s] * pa * (v[h][s] - q[h][s][a]).powi(2);
                if h + 1 < hz {
                    for (x, p) in next.iter_mut().zip(mdp.transition(h, s, a)) {
                        *x += occ[s] * pa * p;
                    }
                }
            }
        }
        occ = next;
    }
    let cap = mdp.cost_cap();
    if total > cap * cap + 1e-9 {
        return invalid(format!("expert variance {total} exceeds the squared cost cap {}", cap * cap));
    }
    Ok(total)
}

fn truncated(mdp: &TabularMdp, policy: &Policy, stop: &dyn StopTime) -> Result<Vec<crate::mdp::WeightedPath>> {
    enumerate_paths(mdp, policy, stop, Continuation::Truncate, crate::mdp::DEFAULT_ENUMERATION_BUDGET)
}

fn to_law(paths: &[crate::mdp::WeightedPath]) -> TrajectoryDistribution {
    TrajectoryDistribution::from_entries(paths.iter().map(|p| (p.outcome.clone(), p.prob)))
}

/// All fields by exact enumeration.
pub fn exact_metrics(
    m: &TabularMdp,
    n: &TabularMdp,
    sel: &SelectivePolicy,
    expert: &Policy,
    class: &PolicyClass,
) -> Result<MetricsReport> {
    check_inputs(m, n, sel, expert, class)?;
    let hz = m.horizon();
    let rule = sel.rule().bind(class)?;
    let base = sel.base();
    let budget = crate::mdp::DEFAULT_ENUMERATION_BUDGET;
    let stop_mass = |paths: &[crate::mdp::WeightedPath]| paths.iter().filter(|p| p.tau <= hz).fold(0.0, |acc, p| acc + p.prob);
    let cost_of = |paths: &[crate::mdp::WeightedPath]| paths.iter().fold(0.0, |acc, p| acc + p.prob * p.cost);

    let learner_m = truncated(m, base, &rule)?;
    let learner_n = truncated(n, base, &rule)?;
    let expert_stopped_n = truncated(n, expert, &rule)?;
    let expert_stopped_m = truncated(m, expert, &rule)?;
    let expert_full_m = truncated(m, expert, &Never)?;
    let expert_full_n = truncated(n, expert, &Never)?;
    let learner_full_n = truncated(n, base, &Never)?;
    let switched = enumerate_paths(n, base, &rule, Continuation::Switch(expert), budget)?;

    let stopped_learner = cost_of(&learner_n);
    let stopped_expert = cost_of(&expert_stopped_n);
    let expert_cost = cost_of(&expert_full_n);
    let switched_cost = cost_of(&switched);
    let alpha_n = stop_mass(&learner_n).clamp(0.0, 1.0);

    let deviation = Deviation { a: base, b: expert };
    let expert_late = expert_full_n
        .iter()
        .filter(|p| rule.stop_time(&p.outcome.states) > deviation.stop_time(&p.outcome.states))
        .fold(0.0, |acc, p| acc + p.prob)
        .clamp(0.0, 1.0);
    let expert_alpha_m = stop_mass(&expert_stopped_m).clamp(0.0, 1.0);
    let state_tv = to_law(&expert_full_m).state_tv(&to_law(&expert_full_n)).clamp(0.0, 1.0);
    let holds = (base.is_deterministic() && expert.is_deterministic())
        .then(|| alpha_n <= expert_alpha_m + state_tv + expert_late + 1e-10);

    Ok(MetricsReport {
        alpha_m: stop_mass(&learner_m).clamp(0.0, 1.0),
        alpha_n,
        stopped_regret_n: stopped_learner - stopped_expert,
        switched_regret_n: switched_cost - expert_cost,
        asymmetric_stopped_regret_n: stopped_learner - expert_cost,
        stopped_hellinger_sq: Some(trajectory_hellinger_sq(&to_law(&learner_n), &to_law(&expert_stopped_n))),
        expert_variance: expert_variance(n, expert)?,
        learner_cost_n: cost_of(&learner_full_n),
        expert_cost_n: expert_cost,
        switched_cost_n: switched_cost,
        mean_handoff_time: learner_n.iter().map(|p| p.prob * p.tau.min(hz) as f64).sum(),
        decomposition: Decomposition {
            expert_alpha_m,
            state_tv: Some(state_tv),
            expert_late_stop_n: expert_late,
            holds,
        },
        ci_halfwidths: None,
        method: Method::Exact,
    })
}

/// Sample mean and 95% half-width.
fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Per-rollout observations; fields mirror the report.
struct Sample {
    stop_m: f64,
    stop_n: f64,
    stopped_learner: f64,
    stopped_expert: f64,
    expert_cost: f64,
    learner_cost: f64,
    switched_cost: f64,
    handoff: f64,
    expert_stop_m: f64,
    expert_late: f64,
}

/// Plug-in estimates from `n_rollouts` coupled rollouts. Rollout `i` in N
/// drives the learner, the switched policy and the expert from one stream,
/// so regrets are estimated from paired differences.
pub fn monte_carlo_metrics(
    m: &TabularMdp,
    n: &TabularMdp,
    sel: &SelectivePolicy,
    expert: &Policy,
    class: &PolicyClass,
    n_rollouts: usize,
    rng_seed: u64,
) -> Result<MetricsReport> {
    if n_rollouts == 0 {
        return Err(Error::Config("n_rollouts must be at least 1".into()));
    }
    check_inputs(m, n, sel, expert, class)?;
    let hz = m.horizon();
    let rule = sel.rule().bind(class)?;
    let base = sel.base();
    let deviation = Deviation { a: base, b: expert };
    let root = SeedStream::new(rng_seed);
    let (src, tgt) = (root.child("source"), root.child("target"));
    let stop = |p: &[usize]| rule.first_trigger(p).is_some();
    let never = |_: &[usize]| false;
    let prefix_cost = |mdp: &TabularMdp, states: &[usize], actions: &[usize], tau: usize| -> f64 {
        states.iter().zip(actions).take(tau - 1).enumerate().map(|(h, (&s, &a))| mdp.cost(h, s, a)).sum()
    };

    let samples: Vec<Sample> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let sm = src.index(i as u64);
            let sn = tgt.index(i as u64);
            let lm = simulate(m, base, None, &stop, &mut sm.rng());
            let em = simulate(m, expert, None, &stop, &mut sm.rng());
            let sw = simulate(n, base, Some(expert), &stop, &mut sn.rng());
            let ln = simulate(n, base, None, &never, &mut sn.rng());
            let en = simulate(n, expert, None, &never, &mut sn.rng());
            let tau_e = rule.stop_time(&en.states);
            Sample {
                stop_m: f64::from(u8::from(lm.tau <= hz)),
                stop_n: f64::from(u8::from(sw.tau <= hz)),
                stopped_learner: prefix_cost(n, &sw.states, &sw.actions, sw.tau),
                stopped_expert: prefix_cost(n, &en.states, &en.actions, tau_e),
                expert_cost: en.cost,
                learner_cost: ln.cost,
                switched_cost: sw.cost,
                handoff: sw.tau.min(hz) as f64,
                expert_stop_m: f64::from(u8::from(em.tau <= hz)),
                expert_late: f64::from(u8::from(tau_e > deviation.stop_time(&en.states))),
            }
        })
        .collect();

    let col = |f: &dyn Fn(&Sample) -> f64| mean_ci(&samples.iter().map(f).collect::<Vec<_>>());
    let alpha_m = col(&|s| s.stop_m);
    let alpha_n = col(&|s| s.stop_n);
    let stopped = col(&|s| s.stopped_learner - s.stopped_expert);
    let switched = col(&|s| s.switched_cost - s.expert_cost);
    let asym = col(&|s| s.stopped_learner - s.expert_cost);
    let learner = col(&|s| s.learner_cost);
    let expert_c = col(&|s| s.expert_cost);
    let switched_c = col(&|s| s.switched_cost);
    let handoff = col(&|s| s.handoff);

    Ok(MetricsReport {
        alpha_m: alpha_m.0,
        alpha_n: alpha_n.0,
        stopped_regret_n: stopped.0,
        switched_regret_n: switched.0,
        asymmetric_stopped_regret_n: asym.0,
        stopped_hellinger_sq: None,
        expert_variance: expert_variance(n, expert)?,
        learner_cost_n: learner.0,
        expert_cost_n: expert_c.0,
        switched_cost_n: switched_c.0,
        mean_handoff_time: handoff.0,
        decomposition: Decomposition {
            expert_alpha_m: col(&|s| s.expert_stop_m).0,
            state_tv: None,
            expert_late_stop_n: col(&|s| s.expert_late).0,
            holds: None,
        },
        ci_halfwidths: Some(CiHalfwidths {
            alpha_m: alpha_m.1,
            alpha_n: alpha_n.1,
            stopped_regret_n: stopped.1,
            switched_regret_n: switched.1,
            asymmetric_stopped_regret_n: asym.1,
            learner_cost_n: learner.1,
            expert_cost_n: expert_c.1,
            switched_cost_n: switched_c.1,
            mean_handoff_time: handoff.1,
        }),
        method: Method::MonteCarlo { n_rollouts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::desk::{always_r, desk_chain, desk_chain_windy, desk_class};
    use crate::stopping::{StoppingMode, StoppingRule};

    #[test]
    fn variance_examples() {
        let one_step = TabularMdp::new(vec![1.0], vec![], vec![vec![vec![0.0, 1.0]]], 1.0).unwrap();
        let uniform = Policy::uniform_row(1, 1, vec![0.5, 0.5]).unwrap();
        assert!((expert_variance(&one_step, &uniform).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(expert_variance(&desk_chain(), &always_r()).unwrap(), 0.0);
    }

    #[test]
    fn immediate_handoff() {
        let class = desk_class();
        // Base always-R, validator always-L: disagree at step 1 everywhere.
        let sel = SelectivePolicy::new(StoppingRule::new(0, vec![1], StoppingMode::FirstDisagreement), &class).unwrap();
        let r = exact_metrics(&desk_chain(), &desk_chain_windy(0.5), &sel, &always_r(), &class).unwrap();
        assert_eq!((r.alpha_m, r.alpha_n), (1.0, 1.0));
        assert_eq!((r.stopped_regret_n, r.switched_regret_n), (0.0, 0.0));
        assert_eq!(r.stopped_hellinger_sq, Some(0.0));
    }

    #[test]
    fn never_stopping_learner_pays_full_cost() {
        let class = desk_class();
        let sel = SelectivePolicy::new(StoppingRule::new(1, vec![], StoppingMode::FirstDisagreement), &class).unwrap();
        let r = exact_metrics(&desk_chain(), &desk_chain(), &sel, &always_r(), &class).unwrap();
        assert_eq!((r.alpha_m, r.learner_cost_n, r.expert_cost_n), (0.0, 2.0, 1.0));
        assert_eq!((r.stopped_regret_n, r.switched_regret_n, r.mean_handoff_time), (1.0, 1.0, 2.0));
        assert_eq!(r.decomposition.holds, Some(true));
        let mc = monte_carlo_metrics(&desk_chain(), &desk_chain(), &sel, &always_r(), &class, 50, 3).unwrap();
        assert_eq!(mc.alpha_m, 0.0);
        assert_eq!(mc.ci_halfwidths.unwrap().alpha_m, 0.0);
    }
}
